#include "opflab/nn/layers.hpp"

#include "opflab/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace opflab::nn {

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation a)
    : w(Tensor(out, in)), b(Tensor(1, out)), act(a) {}

void DenseLayer::initialize(std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : w.value.values()) x = dist(rng);
  for (double& x : b.value.values()) x = dist(rng);
  w.zero_grad();
  b.zero_grad();
}

Var DenseLayer::forward(Tape& tape, Var x) {
  return dense(x, tape.parameter(w), tape.parameter(b), act);
}

Tensor dense_forward(const Tensor& x, const DenseLayer& layer, Backend backend) {
  Tensor y;
  dense_forward(x, layer.w.value, layer.b.value, layer.act, y, backend);
  return y;
}

Mlp::Mlp(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw Error(ErrorCode::DimensionMismatch, "an MLP needs at least input and output widths");
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    layers_.emplace_back(widths[k], widths[k + 1], last ? Activation::Identity : Activation::Relu);
  }
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.w.value.size() + l.b.value.size();
  return n;
}

void Mlp::initialize(std::mt19937_64& rng) {
  for (DenseLayer& l : layers_) l.initialize(rng);
}

Var Mlp::forward(Tape& tape, Var x) {
  for (DenseLayer& l : layers_) x = l.forward(tape, x);
  return x;
}

Tensor Mlp::infer(const Tensor& x, Backend backend) const {
  Tensor cur = x;
  Tensor next;
  for (const DenseLayer& l : layers_) {
    dense_forward(cur, l.w.value, l.b.value, l.act, next, backend);
    std::swap(cur, next);
  }
  return cur;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (DenseLayer& l : layers_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
}

namespace {

void write_row(std::ostream& out, const double* v, std::size_t n) {
  std::string line;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    if (i) line += ' ';
    const auto r = std::to_chars(buf, buf + sizeof(buf), v[i], std::chars_format::general, 17);
    line.append(buf, r.ptr);
  }
  line += '\n';
  out << line;
}

std::vector<double> read_values(std::istream& in, std::size_t count) {
  std::vector<double> out;
  out.reserve(count);
  std::string line;
  while (out.size() < count && std::getline(in, line)) {
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\r')) ++p;
      if (p == end) break;
      double v = 0.0;
      const auto r = std::from_chars(p, end, v);
      if (r.ec != std::errc()) throw Error(ErrorCode::IoFailure, "checkpoint: bad number");
      out.push_back(v);
      p = r.ptr;
    }
  }
  if (out.size() != count) throw Error(ErrorCode::IoFailure, "checkpoint: truncated parameter block");
  return out;
}

}  // namespace

void write_layers(std::ostream& out, const std::vector<const DenseLayer*>& layers) {
  out << "#opfnn v1 layers=" << layers.size() << '\n';
  for (const DenseLayer* l : layers) {
    out << "layer " << l->in() << ' ' << l->out() << ' '
        << (l->act == Activation::Relu ? "relu" : "identity") << '\n';
    for (std::size_t r = 0; r < l->out(); ++r) write_row(out, l->w.value.row(r).data(), l->in());
    write_row(out, l->b.value.data(), l->out());
  }
}

std::vector<DenseLayer> read_layers(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("#opfnn v1 layers=")) {
    throw Error(ErrorCode::IoFailure, "not an opfnn v1 checkpoint");
  }
  const std::size_t count = std::stoul(line.substr(line.find('=') + 1));
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw Error(ErrorCode::IoFailure, "checkpoint: missing layer header");
    std::istringstream hs(line);
    std::string tag, act;
    std::size_t nin = 0, nout = 0;
    if (!(hs >> tag >> nin >> nout >> act) || tag != "layer" || (act != "relu" && act != "identity")) {
      throw Error(ErrorCode::IoFailure, "checkpoint: bad layer header '" + line + "'");
    }
    DenseLayer l(nin, nout, act == "relu" ? Activation::Relu : Activation::Identity);
    l.w.value = Tensor(nout, nin, read_values(in, nin * nout));
    l.b.value = Tensor(1, nout, read_values(in, nout));
    layers.push_back(std::move(l));
  }
  return layers;
}

void save_checkpoint(const std::vector<const DenseLayer*>& layers, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  write_layers(out, layers);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::vector<DenseLayer> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return read_layers(in);
}

}  // namespace opflab::nn
