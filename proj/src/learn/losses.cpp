#include "opflab/learn.hpp"

#include <cmath>

namespace opflab {

using nn::Tensor;
using nn::Var;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

void copy_row(Tensor& dst, std::size_t r, std::span<const double> src) {
  std::copy(src.begin(), src.end(), dst.row(r).begin());
}

void copy_gathered(Tensor& dst, std::size_t r, std::size_t offset, std::span<const double> src,
                   const std::vector<std::size_t>& index) {
  for (std::size_t k = 0; k < index.size(); ++k) dst(r, offset + k) = src[index[k]];
}

Tensor select(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.size() == 0) return t;
  Tensor out(rows.size(), t.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) copy_row(out, r, t.row(rows[r]));
  return out;
}

Tensor row_of(const std::vector<double>& v) { return Tensor(1, v.size(), v); }

Var head_input(nn::Tape& tape, Var trunk_out, const Tensor& side) {
  if (side.size() == 0) return trunk_out;
  return nn::concat_cols({trunk_out, tape.constant(side)});
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (b.size() == 0) return a;
  Tensor out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

}  // namespace

ModelInput make_input(const OpfNet& net, const CaseLayout& layout, std::span<const Sample> samples) {
  const std::size_t n = layout.dims.n;
  const std::size_t l = layout.load_buses.size();
  const std::size_t g = layout.gen_buses.size();
  require(net.dims() == layout.dims, "network and case dimensions differ");
  const bool hot = net.variant().uses_hot_start;
  const std::size_t b = samples.size();

  ModelInput in;
  in.loads = Tensor(b, hot ? 4 * l : 2 * l);
  if (hot) {
    in.v0 = Tensor(b, n);
    in.theta0 = Tensor(b, n);
    in.pg0 = Tensor(b, g);
    in.qg0 = Tensor(b, g);
  }
  for (std::size_t r = 0; r < b; ++r) {
    const Sample& s = samples[r];
    require(s.x.size() == 8 * n && s.y.size() == 4 * n, "sample is not dimensioned to the case");
    std::size_t off = 0;
    if (hot) {
      copy_gathered(in.loads, r, 0, block(s, InputBlock::PdHot, n), layout.load_buses);
      copy_gathered(in.loads, r, l, block(s, InputBlock::QdHot, n), layout.load_buses);
      off = 2 * l;
      copy_row(in.v0, r, block(s, InputBlock::VHot, n));
      copy_row(in.theta0, r, block(s, InputBlock::ThetaHot, n));
      copy_gathered(in.pg0, r, 0, block(s, InputBlock::PgHot, n), layout.gen_buses);
      copy_gathered(in.qg0, r, 0, block(s, InputBlock::QgHot, n), layout.gen_buses);
    }
    copy_gathered(in.loads, r, off, block(s, InputBlock::Pd, n), layout.load_buses);
    copy_gathered(in.loads, r, off + l, block(s, InputBlock::Qd, n), layout.load_buses);
  }
  return in;
}

PreparedData prepare_data(const OpfNet& net, const CaseLayout& layout, const NetworkCase& grid,
                          std::span<const Sample> samples) {
  const std::size_t n = layout.dims.n;
  const std::size_t e = layout.dims.e;
  const std::size_t b = samples.size();
  PreparedData d;
  d.input = make_input(net, layout, samples);
  const bool gen_only_v = net.head_width(Head::V) == layout.gen_buses.size() && !net.has_head(Head::Theta);
  d.target.v = Tensor(b, gen_only_v ? layout.gen_buses.size() : n);
  d.target.theta = Tensor(b, n);
  d.target.pg = Tensor(b, layout.gen_buses.size());
  d.target.qg = Tensor(b, layout.gen_buses.size());
  d.p_d = Tensor(b, n);
  d.q_d = Tensor(b, n);
  d.truth_pf = Tensor(b, e);
  d.truth_qf = Tensor(b, e);

  const auto lines = grid.directed_lines();
  for (std::size_t r = 0; r < b; ++r) {
    const Sample& s = samples[r];
    const auto v = block(s, TargetBlock::V, n);
    const auto th = block(s, TargetBlock::Theta, n);
    if (gen_only_v) {
      copy_gathered(d.target.v, r, 0, v, layout.gen_buses);
    } else {
      copy_row(d.target.v, r, v);
    }
    copy_row(d.target.theta, r, th);
    copy_gathered(d.target.pg, r, 0, block(s, TargetBlock::Pg, n), layout.gen_buses);
    copy_gathered(d.target.qg, r, 0, block(s, TargetBlock::Qg, n), layout.gen_buses);
    copy_row(d.p_d, r, block(s, InputBlock::Pd, n));
    copy_row(d.q_d, r, block(s, InputBlock::Qd, n));
    for (std::size_t k = 0; k < e; ++k) {
      const DirectedLine& ln = lines[k];
      const LineFlow f = line_flow(v[ln.from], v[ln.to], th[ln.from], th[ln.to], ln.g, ln.b);
      d.truth_pf(r, k) = f.p;
      d.truth_qf(r, k) = f.q;
    }
  }
  return d;
}

PreparedData select_rows(const PreparedData& data, std::span<const std::size_t> rows) {
  PreparedData d;
  d.input.loads = select(data.input.loads, rows);
  d.input.v0 = select(data.input.v0, rows);
  d.input.theta0 = select(data.input.theta0, rows);
  d.input.pg0 = select(data.input.pg0, rows);
  d.input.qg0 = select(data.input.qg0, rows);
  d.target.v = select(data.target.v, rows);
  d.target.theta = select(data.target.theta, rows);
  d.target.pg = select(data.target.pg, rows);
  d.target.qg = select(data.target.qg, rows);
  d.p_d = select(data.p_d, rows);
  d.q_d = select(data.q_d, rows);
  d.truth_pf = select(data.truth_pf, rows);
  d.truth_qf = select(data.truth_qf, rows);
  return d;
}

HeadVars forward(OpfNet& net, nn::Tape& tape, const ModelInput& input) {
  require(input.loads.cols() == net.load_width(), "load input width does not match the network");
  const Var h = net.trunk().forward(tape, tape.constant(input.loads));
  HeadVars out;
  if (net.has_head(Head::V)) out.v = net.head(Head::V).forward(tape, head_input(tape, h, input.v0));
  if (net.has_head(Head::Theta)) {
    out.theta = net.head(Head::Theta).forward(tape, head_input(tape, h, input.theta0));
  }
  if (net.has_head(Head::Pg)) out.pg = net.head(Head::Pg).forward(tape, head_input(tape, h, input.pg0));
  if (net.has_head(Head::Qg)) out.qg = net.head(Head::Qg).forward(tape, head_input(tape, h, input.qg0));
  return out;
}

HeadTensors predict(const OpfNet& net, const ModelInput& input, nn::Backend backend) {
  require(input.loads.cols() == net.load_width(), "load input width does not match the network");
  const Tensor h = net.trunk().infer(input.loads, backend);
  HeadTensors out;
  auto run = [&](Head head, const Tensor& side, Tensor& dst) {
    if (net.has_head(head)) dst = net.head(head).infer(concat(h, side), backend);
  };
  run(Head::V, input.v0, out.v);
  run(Head::Theta, input.theta0, out.theta);
  run(Head::Pg, input.pg0, out.pg);
  run(Head::Qg, input.qg0, out.qg);
  return out;
}

Var loss_objective(nn::Tape& tape, const HeadVars& pred, const HeadTensors& target) {
  std::optional<Var> total;
  auto term = [&](const std::optional<Var>& p, const Tensor& t) {
    if (!p) return;
    require(p->rows() == t.rows() && p->cols() == t.cols(), "prediction and target shapes differ");
    const Var sq = nn::row_sum(nn::square(nn::sub(*p, tape.constant(t))));
    total = total ? nn::add(*total, sq) : sq;
  };
  term(pred.v, target.v);
  term(pred.theta, target.theta);
  term(pred.pg, target.pg);
  term(pred.qg, target.qg);
  require(total.has_value(), "no prediction heads");
  return nn::batch_mean(*total);
}

Var constraint_violations(nn::Tape& tape, const HeadVars& pred, const PreparedData& data,
                          const CaseLayout& layout, const NetworkCase& grid, const ConstraintOptions& options,
                          bool include_ohm) {
  require(pred.v && pred.theta && pred.pg && pred.qg, "violation degrees need all four heads");
  const std::size_t n = layout.dims.n;
  const std::size_t e = layout.dims.e;
  const std::size_t b = pred.v->rows();
  require(pred.v->cols() == n && pred.theta->cols() == n && data.p_d.rows() == b && data.p_d.cols() == n,
          "violation inputs are not dimensioned to the case");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_e = 1.0 / static_cast<double>(e);
  const Var v = *pred.v;
  const Var th = *pred.theta;
  const Var pg = *pred.pg;
  const Var qg = *pred.qg;

  auto row = [&](const std::vector<double>& values) { return tape.constant(row_of(values)); };
  auto broadcast_sub = [&](Var lo_row, Var x) {
    // lo - x with lo a 1 x k row: -(x - lo).
    return nn::scale(nn::sub(x, lo_row), -1.0);
  };

  std::vector<double> vmin(n), vmax(n);
  for (std::size_t i = 0; i < n; ++i) {
    vmin[i] = grid.buses[i].v_min;
    vmax[i] = grid.buses[i].v_max;
  }
  const Var c2a = nn::scale(nn::add(nn::row_sum(nn::hinge(nn::sub(v, row(vmax)))),
                                    nn::row_sum(nn::hinge(broadcast_sub(row(vmin), v)))),
                            inv_n);

  const auto lines = grid.directed_lines();
  std::vector<double> gl(e), bl(e), delta(e);
  for (std::size_t k = 0; k < e; ++k) {
    gl[k] = lines[k].g;
    bl[k] = lines[k].b;
    delta[k] = lines[k].theta_delta;
  }
  const Var vi = nn::gather_cols(v, layout.line_from);
  const Var vj = nn::gather_cols(v, layout.line_to);
  const Var d = nn::sub(nn::gather_cols(th, layout.line_from), nn::gather_cols(th, layout.line_to));
  const Var gr = row(gl);
  const Var br = row(bl);
  const Var s = nn::sin(d);
  const Var c = nn::cos(d);
  const Var vi2 = nn::square(vi);
  const Var vv = nn::mul(vi, vj);
  const Var pf = nn::sub(nn::mul(vi2, gr), nn::mul(vv, nn::add(nn::mul(s, br), nn::mul(c, gr))));
  const Var qf = nn::sub(nn::scale(nn::mul(vi2, br), -1.0), nn::mul(vv, nn::sub(nn::mul(s, gr), nn::mul(c, br))));

  const Var dr = row(delta);
  const Var c2b = nn::scale(
      nn::add(nn::row_sum(nn::hinge(nn::sub(d, dr))), nn::row_sum(nn::hinge(nn::sub(nn::scale(d, -1.0), dr)))),
      inv_e);

  const auto at_bus = grid.generators_at_bus();
  const std::size_t ng = layout.gen_buses.size();
  std::vector<double> pmin(ng, 0.0), pmax(ng, 0.0), qmin(ng, 0.0), qmax(ng, 0.0);
  for (std::size_t k = 0; k < ng; ++k) {
    for (std::size_t gi : at_bus[layout.gen_buses[k]]) {
      pmin[k] += grid.generators[gi].p_min;
      pmax[k] += grid.generators[gi].p_max;
      qmin[k] += grid.generators[gi].q_min;
      qmax[k] += grid.generators[gi].q_max;
    }
  }
  const Var c3a = nn::scale(nn::add(nn::row_sum(nn::hinge(nn::sub(pg, row(pmax)))),
                                    nn::row_sum(nn::hinge(broadcast_sub(row(pmin), pg)))),
                            inv_n);
  const Var c3b = nn::scale(nn::add(nn::row_sum(nn::hinge(nn::sub(qg, row(qmax)))),
                                    nn::row_sum(nn::hinge(broadcast_sub(row(qmin), qg)))),
                            inv_n);

  Var c4 = tape.constant(Tensor(b, 1));
  if (!layout.limited_lines.empty()) {
    std::vector<double> limit;
    for (std::size_t k : layout.limited_lines) {
      const double sm = lines[k].s_max;
      limit.push_back(options.squared_limit ? sm * sm : sm);
    }
    const Var p = nn::gather_cols(pf, layout.limited_lines);
    const Var q = nn::gather_cols(qf, layout.limited_lines);
    c4 = nn::scale(nn::row_sum(nn::hinge(nn::sub(nn::add(nn::square(p), nn::square(q)), row(limit)))), inv_e);
  }

  Var c5a = tape.constant(Tensor(b, 1));
  Var c5b = tape.constant(Tensor(b, 1));
  if (include_ohm) {
    require(data.truth_pf.rows() == b && data.truth_pf.cols() == e, "truth flows are not dimensioned to the case");
    c5a = nn::scale(nn::row_sum(nn::abs(nn::sub(pf, tape.constant(data.truth_pf)))), inv_e);
    c5b = nn::scale(nn::row_sum(nn::abs(nn::sub(qf, tape.constant(data.truth_qf)))), inv_e);
  }

  const Var res_p = nn::add(nn::sub(nn::scatter_add_cols(pf, layout.line_from, n),
                                    nn::scatter_add_cols(pg, layout.gen_buses, n)),
                            tape.constant(data.p_d));
  const Var res_q = nn::add(nn::sub(nn::scatter_add_cols(qf, layout.line_from, n),
                                    nn::scatter_add_cols(qg, layout.gen_buses, n)),
                            tape.constant(data.q_d));
  Var c6a = res_p;
  Var c6b = res_q;
  if (options.paper_exact_nu6) {
    c6a = nn::scale(nn::row_sum(nn::abs(nn::gather_cols(res_p, layout.line_from))), inv_e);
    c6b = nn::scale(nn::row_sum(nn::abs(nn::gather_cols(res_q, layout.line_from))), inv_e);
  } else {
    c6a = nn::scale(nn::row_sum(nn::abs(res_p)), inv_n);
    c6b = nn::scale(nn::row_sum(nn::abs(res_q)), inv_n);
  }
  return nn::concat_cols({c2a, c2b, c3a, c3b, c4, c5a, c5b, c6a, c6b});
}

Var loss_constraints(Var violations, Var lambda) {
  require(violations.cols() == kNumFamilies && lambda.rows() == 1 && lambda.cols() == kNumFamilies,
          "loss_constraints expects B x 9 violations and a 1 x 9 multiplier row");
  for (double x : lambda.value().values()) {
    if (x < 0.0) throw Error(ErrorCode::InvalidConfig, "multipliers must be non-negative");
  }
  return nn::batch_mean(nn::row_sum(nn::mul(violations, lambda)));
}

Multipliers mean_violations(const Tensor& violations) {
  require(violations.cols() == kNumFamilies, "violation tensor must have one column per family");
  Multipliers m{};
  if (violations.rows() == 0) return m;
  for (std::size_t r = 0; r < violations.rows(); ++r) {
    for (std::size_t c = 0; c < kNumFamilies; ++c) m[c] += violations(r, c);
  }
  for (double& x : m) x /= static_cast<double>(violations.rows());
  return m;
}

}  // namespace opflab
