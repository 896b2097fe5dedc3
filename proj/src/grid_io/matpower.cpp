#include "opflab/error.hpp"
#include "opflab/grid_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

namespace opflab {

namespace {

using Matrix = std::vector<std::vector<double>>;

// MATPOWER column positions (0-based).
namespace bus_col {
constexpr std::size_t BUS_I = 0, TYPE = 1, PD = 2, QD = 3, GS = 4, BS = 5, VMAX = 11, VMIN = 12;
constexpr std::size_t COUNT = 13;
}  // namespace bus_col
namespace gen_col {
constexpr std::size_t BUS = 0, QMAX = 3, QMIN = 4, STATUS = 7, PMAX = 8, PMIN = 9;
constexpr std::size_t COUNT = 10;
}  // namespace gen_col
namespace br_col {
constexpr std::size_t F_BUS = 0, T_BUS = 1, R = 2, X = 3, B = 4, RATE_A = 5, TAP = 8, SHIFT = 9,
                      STATUS = 10, ANGMIN = 11, ANGMAX = 12;
constexpr std::size_t COUNT = 11;
}  // namespace br_col

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '\n') {
      in_comment = false;
      out.push_back(c);
    } else if (c == '%') {
      in_comment = true;
    } else if (!in_comment) {
      out.push_back(c);
    }
  }
  return out;
}

std::optional<double> find_scalar(const std::string& text, const std::string& name) {
  const std::regex re("mpc\\." + name + "\\s*=\\s*([-+0-9.eE]+)\\s*;");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return std::stod(m[1].str());
}

std::vector<double> parse_row(std::string_view row, const std::string& name) {
  std::vector<double> values;
  std::size_t i = 0;
  while (i < row.size()) {
    const char c = row[i];
    if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < row.size() && row[j] != ' ' && row[j] != '\t' && row[j] != ',' && row[j] != '\r') ++j;
    double v = 0.0;
    const auto token = row.substr(i, j - i);
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
      throw Error(ErrorCode::MalformedMatrix,
                  "mpc." + name + ": non-numeric token '" + std::string(token) + "'");
    }
    values.push_back(v);
    i = j;
  }
  return values;
}

std::optional<Matrix> find_matrix(const std::string& text, const std::string& name) {
  // The lookahead keeps "mpc.bus" from matching "mpc.bus_name" and "mpc.gen"
  // from matching "mpc.gencost".
  const std::regex re("mpc\\." + name + "(?=[\\s=])\\s*=\\s*\\[");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  const std::size_t begin = static_cast<std::size_t>(m.position(0) + m.length(0));
  const std::size_t end = text.find(']', begin);
  if (end == std::string::npos) {
    throw Error(ErrorCode::MalformedMatrix, "mpc." + name + ": missing closing ']'");
  }
  Matrix rows;
  std::string_view body(text.data() + begin, end - begin);
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t stop = body.find_first_of(";\n", start);
    if (stop == std::string_view::npos) stop = body.size();
    auto row = parse_row(body.substr(start, stop - start), name);
    if (!row.empty()) rows.push_back(std::move(row));
    start = stop + 1;
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw Error(ErrorCode::MalformedMatrix, "mpc." + name + " row " + std::to_string(r + 1) +
                                                  " has " + std::to_string(rows[r].size()) +
                                                  " columns, expected " +
                                                  std::to_string(rows[0].size()));
    }
  }
  return rows;
}

const Matrix& require(const std::optional<Matrix>& m, const std::string& name, std::size_t min_cols,
                      ErrorCode missing_code = ErrorCode::MalformedMatrix) {
  if (!m) throw Error(missing_code, "case text has no mpc." + name + " matrix");
  if (!m->empty() && m->front().size() < min_cols) {
    throw Error(ErrorCode::MalformedMatrix, "mpc." + name + " needs at least " +
                                                std::to_string(min_cols) + " columns, found " +
                                                std::to_string(m->front().size()));
  }
  return *m;
}

double theta_delta_from(const std::vector<double>& row, const ParseOptions& opt) {
  if (row.size() <= br_col::ANGMAX) return opt.default_theta_delta;
  const double lo = row[br_col::ANGMIN];
  const double hi = row[br_col::ANGMAX];
  auto declared = [](double a) { return a != 0.0 && std::abs(a) < 360.0; };
  if (!declared(lo) && !declared(hi)) return opt.default_theta_delta;
  double bound = std::numeric_limits<double>::infinity();
  if (declared(lo)) bound = std::min(bound, std::abs(lo));
  if (declared(hi)) bound = std::min(bound, std::abs(hi));
  return bound * kDegToRad;
}

void validate(const NetworkCase& net) {
  std::size_t refs = 0;
  for (const auto& bus : net.buses) {
    if (!(bus.v_min > 0.0) || bus.v_min > bus.v_max) {
      throw Error(ErrorCode::InvalidCase,
                  "bus " + std::to_string(bus.number) + " has invalid voltage bounds");
    }
    refs += bus.is_reference ? 1 : 0;
  }
  if (refs == 0) throw Error(ErrorCode::NoReferenceBus, "no bus of type 3");
  if (refs > 1) {
    throw Error(ErrorCode::NoReferenceBus, std::to_string(refs) + " buses of type 3, need exactly one");
  }
  for (const auto& br : net.branches) {
    if (br.r * br.r + br.x * br.x <= 0.0) {
      throw Error(ErrorCode::InvalidCase, "branch with zero impedance");
    }
    if (!(br.s_max > 0.0) || !(br.theta_delta > 0.0)) {
      throw Error(ErrorCode::InvalidCase, "branch with non-positive rating or angle bound");
    }
  }
  for (const auto& gen : net.generators) {
    if (gen.p_min > gen.p_max || gen.q_min > gen.q_max) {
      throw Error(ErrorCode::InvalidCase, "generator with inverted bounds");
    }
    if (gen.cost_c2 < 0.0) throw Error(ErrorCode::InvalidCase, "generator with negative c2");
  }
}

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double to_per_unit(double value_mw, double base_mva) {
  if (!(base_mva > 0.0)) throw Error(ErrorCode::NonPositiveBase, "base_mva must be positive");
  return value_mw / base_mva;
}

double from_per_unit(double value_pu, double base_mva) {
  if (!(base_mva > 0.0)) throw Error(ErrorCode::NonPositiveBase, "base_mva must be positive");
  return value_pu * base_mva;
}

NetworkCase parse_matpower(std::string_view raw, const ParseOptions& options) {
  const std::string text = strip_comments(raw);

  NetworkCase net;
  {
    static const std::regex name_re("function\\s+mpc\\s*=\\s*([A-Za-z0-9_]+)");
    std::smatch m;
    if (std::regex_search(text, m, name_re)) net.name = m[1].str();
  }
  const auto base = find_scalar(text, "baseMVA");
  if (!base) throw Error(ErrorCode::MalformedMatrix, "case text has no mpc.baseMVA");
  if (!(*base > 0.0)) throw Error(ErrorCode::NonPositiveBase, "mpc.baseMVA must be positive");
  net.base_mva = *base;

  const auto bus_m = find_matrix(text, "bus");
  const auto gen_m = find_matrix(text, "gen");
  const auto branch_m = find_matrix(text, "branch");
  const auto cost_m = find_matrix(text, "gencost");
  const Matrix& buses = require(bus_m, "bus", bus_col::COUNT);
  const Matrix& gens = require(gen_m, "gen", gen_col::COUNT);
  const Matrix& branches = require(branch_m, "branch", br_col::COUNT);
  const Matrix& costs = require(cost_m, "gencost", 4, ErrorCode::NonQuadraticCost);
  if (costs.size() != gens.size()) {
    throw Error(ErrorCode::NonQuadraticCost, "mpc.gencost has " + std::to_string(costs.size()) +
                                                 " rows for " + std::to_string(gens.size()) +
                                                 " generators (reactive costs unsupported)");
  }

  const double mva = net.base_mva;
  std::map<int, std::size_t> index_of;
  bool warned_shunt = false;
  for (const auto& row : buses) {
    Bus bus;
    bus.number = static_cast<int>(row[bus_col::BUS_I]);
    bus.is_reference = static_cast<int>(row[bus_col::TYPE]) == 3;
    bus.v_max = row[bus_col::VMAX];
    bus.v_min = row[bus_col::VMIN];
    bus.shunt_g = row[bus_col::GS] / mva;
    bus.shunt_b = row[bus_col::BS] / mva;
    if (!index_of.emplace(bus.number, net.buses.size()).second) {
      throw Error(ErrorCode::InvalidCase, "duplicate bus number " + std::to_string(bus.number));
    }
    if ((bus.shunt_g != 0.0 || bus.shunt_b != 0.0) && !warned_shunt) {
      spdlog::warn("case {}: bus shunts are parsed but ignored by the flow model", net.name);
      warned_shunt = true;
    }
    net.buses.push_back(bus);
    net.p_load.push_back(row[bus_col::PD] / mva);
    net.q_load.push_back(row[bus_col::QD] / mva);
  }

  auto bus_index = [&](double number, const char* what) {
    const auto it = index_of.find(static_cast<int>(number));
    if (it == index_of.end()) {
      throw Error(ErrorCode::DanglingBranch,
                  std::string(what) + " references unknown bus " + std::to_string(static_cast<int>(number)));
    }
    return it->second;
  };

  bool warned_branch = false;
  for (const auto& row : branches) {
    if (row[br_col::STATUS] == 0.0) continue;
    Branch br;
    br.from = bus_index(row[br_col::F_BUS], "branch");
    br.to = bus_index(row[br_col::T_BUS], "branch");
    br.r = row[br_col::R];
    br.x = row[br_col::X];
    const double z2 = br.r * br.r + br.x * br.x;
    if (z2 <= 0.0) throw Error(ErrorCode::InvalidCase, "branch with zero impedance");
    br.g = br.r / z2;
    br.b = -br.x / z2;
    br.s_max = row[br_col::RATE_A] > 0.0 ? row[br_col::RATE_A] / mva
                                         : std::numeric_limits<double>::infinity();
    br.theta_delta = theta_delta_from(row, options);
    br.charging_b = row[br_col::B];
    br.tap = row[br_col::TAP];
    br.shift = row[br_col::SHIFT];
    if ((br.charging_b != 0.0 || (br.tap != 0.0 && br.tap != 1.0) || br.shift != 0.0) &&
        !warned_branch) {
      spdlog::warn("case {}: line charging, taps and phase shifts are parsed but ignored", net.name);
      warned_branch = true;
    }
    net.branches.push_back(br);
  }

  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto& row = gens[k];
    const auto& cost = costs[k];
    if (static_cast<int>(cost[0]) != 2) {
      throw Error(ErrorCode::NonQuadraticCost,
                  "gencost row " + std::to_string(k + 1) + " is not a polynomial model");
    }
    const auto ncoef = static_cast<std::size_t>(cost[3]);
    if (ncoef < 1 || ncoef > 3) {
      throw Error(ErrorCode::NonQuadraticCost,
                  "gencost row " + std::to_string(k + 1) + " has polynomial degree " +
                      std::to_string(static_cast<long>(ncoef) - 1) + " (at most 2 supported)");
    }
    if (cost.size() < 4 + ncoef) {
      throw Error(ErrorCode::MalformedMatrix, "gencost row " + std::to_string(k + 1) + " is truncated");
    }
    if (row[gen_col::STATUS] == 0.0) continue;
    Generator gen;
    gen.bus = bus_index(row[gen_col::BUS], "generator");
    gen.p_max = row[gen_col::PMAX] / mva;
    gen.p_min = row[gen_col::PMIN] / mva;
    gen.q_max = row[gen_col::QMAX] / mva;
    gen.q_min = row[gen_col::QMIN] / mva;
    // Coefficients are listed highest degree first.
    double coef[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
    for (std::size_t d = 0; d < ncoef; ++d) coef[ncoef - 1 - d] = cost[4 + d];
    gen.cost_c2 = coef[2] * mva * mva;
    gen.cost_c1 = coef[1] * mva;
    gen.cost_c0 = coef[0];
    net.generators.push_back(gen);
  }

  validate(net);
  return net;
}

NetworkCase load_matpower(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  NetworkCase net = parse_matpower(os.str(), options);
  if (net.name.empty()) net.name = path.stem().string();
  return net;
}

std::string serialize_matpower(const NetworkCase& net) {
  const double mva = net.base_mva;
  std::ostringstream os;
  os << "function mpc = " << (net.name.empty() ? "opflab_case" : net.name) << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << fmt17(mva) << ";\n\n";
  os << "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    os << '\t' << b.number << '\t' << (b.is_reference ? 3 : 1) << '\t' << fmt17(net.p_load[i] * mva)
       << '\t' << fmt17(net.q_load[i] * mva) << '\t' << fmt17(b.shunt_g * mva) << '\t'
       << fmt17(b.shunt_b * mva) << "\t1\t1\t0\t0\t1\t" << fmt17(b.v_max) << '\t' << fmt17(b.v_min)
       << ";\n";
  }
  os << "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
  for (const Generator& g : net.generators) {
    os << '\t' << net.buses[g.bus].number << "\t0\t0\t" << fmt17(g.q_max * mva) << '\t'
       << fmt17(g.q_min * mva) << "\t1\t" << fmt17(mva) << "\t1\t" << fmt17(g.p_max * mva) << '\t'
       << fmt17(g.p_min * mva) << ";\n";
  }
  os << "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n";
  for (const Branch& br : net.branches) {
    const double rate = std::isinf(br.s_max) ? 0.0 : br.s_max * mva;
    const double ang = br.theta_delta / kDegToRad;
    os << '\t' << net.buses[br.from].number << '\t' << net.buses[br.to].number << '\t' << fmt17(br.r)
       << '\t' << fmt17(br.x) << '\t' << fmt17(br.charging_b) << '\t' << fmt17(rate) << "\t0\t0\t"
       << fmt17(br.tap) << '\t' << fmt17(br.shift) << "\t1\t" << fmt17(-ang) << '\t' << fmt17(ang)
       << ";\n";
  }
  os << "];\n\n%% model startup shutdown n c2 c1 c0\nmpc.gencost = [\n";
  for (const Generator& g : net.generators) {
    os << "\t2\t0\t0\t3\t" << fmt17(g.cost_c2 / (mva * mva)) << '\t' << fmt17(g.cost_c1 / mva) << '\t'
       << fmt17(g.cost_c0) << ";\n";
  }
  os << "];\n";
  return os.str();
}

}  // namespace opflab
