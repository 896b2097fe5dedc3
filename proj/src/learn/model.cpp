#include "opflab/learn.hpp"

#include <algorithm>
#include <cctype>
#include <random>

namespace opflab {

ModelVariant ModelVariant::of(VariantTag tag) {
  ModelVariant v;
  v.tag = tag;
  v.uses_constraints = tag != VariantTag::MB;
  v.uses_hot_start = tag == VariantTag::MCS || tag == VariantTag::MCSL || tag == VariantTag::MCSD;
  v.trainable_lambda = tag == VariantTag::MCSL;
  v.dual_update = tag == VariantTag::MCD || tag == VariantTag::MCSD;
  return v;
}

std::string_view variant_name(VariantTag tag) {
  switch (tag) {
    case VariantTag::MB: return "MB";
    case VariantTag::MC: return "MC";
    case VariantTag::MCD: return "MCD";
    case VariantTag::MCS: return "MCS";
    case VariantTag::MCSL: return "MCSL";
    case VariantTag::MCSD: return "MCSD";
  }
  return "?";
}

ModelVariant parse_variant(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '_' || c == '-') continue;
    key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  for (VariantTag t : kAllVariants) {
    if (key == variant_name(t)) return ModelVariant::of(t);
  }
  throw Error(ErrorCode::UnknownVariant, "unknown model variant '" + std::string(name) + "'");
}

Multipliers initial_multipliers(const ModelVariant& variant) {
  Multipliers m{};
  const bool fixed_unit = variant.uses_constraints && !variant.dual_update && !variant.trainable_lambda;
  m.fill(fixed_unit ? 1.0 : 0.0);
  return m;
}

OpfNet::OpfNet(const ModelVariant& variant, const CaseDims& dims, const ModelOptions& options)
    : variant_(variant), dims_(dims), options_(options) {
  const std::size_t n = dims.n;
  const std::size_t l = dims.l;
  const std::size_t g = dims.g;
  if (n == 0 || l == 0 || g == 0) {
    throw Error(ErrorCode::DimensionMismatch, "model needs n, l and g > 0");
  }
  auto set = [&](Head h, std::vector<std::size_t> widths) { heads_[static_cast<std::size_t>(h)] = nn::Mlp(widths); };

  if (variant.uses_hot_start) {
    trunk_ = nn::Mlp({4 * l, 8 * l, 8 * l});
    const std::size_t w = 8 * l;
    set(Head::V, {w + n, 16 * l + 2 * n, w + n, 4 * n, 2 * n, n});
    set(Head::Theta, {w + n, 16 * l + 2 * n, w + n, 4 * n, 2 * n, n});
    set(Head::Pg, {w + g, 16 * l + 2 * g, w + g, 4 * g, 2 * g, g});
    set(Head::Qg, {w + g, 16 * l + 2 * g, w + g, 4 * g, 2 * g, g});
  } else {
    trunk_ = nn::Mlp({2 * l, 4 * l, 4 * l});
    const std::size_t w = 4 * l;
    const bool two_head = variant.tag == VariantTag::MB && !options.four_head_baseline;
    if (two_head) {
      set(Head::V, {w, 8 * l, w, 2 * g, g});
    } else {
      set(Head::V, {w, 8 * l, w, 2 * n, n});
      set(Head::Theta, {w, 8 * l, w, 2 * n, n});
      set(Head::Qg, {w, 8 * l, w, 2 * g, g});
    }
    set(Head::Pg, {w, 8 * l, w, 2 * g, g});
  }
  // The trunk's last layer keeps its ReLU; heads end in Identity.
  trunk_.layers().back().act = nn::Activation::Relu;
}

std::size_t OpfNet::load_width() const { return trunk_.in(); }

std::size_t OpfNet::head_width(Head h) const { return has_head(h) ? head(h).out() : 0; }

void OpfNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  trunk_.initialize(rng);
  for (nn::Mlp& h : heads_) {
    if (!h.layers().empty()) h.initialize(rng);
  }
}

std::vector<nn::Parameter*> OpfNet::parameters() {
  std::vector<nn::Parameter*> out;
  trunk_.collect(out);
  for (nn::Mlp& h : heads_) h.collect(out);
  return out;
}

std::size_t OpfNet::num_parameters() const {
  std::size_t total = trunk_.num_parameters();
  for (const nn::Mlp& h : heads_) {
    if (!h.layers().empty()) total += h.num_parameters();
  }
  return total;
}

std::vector<const nn::DenseLayer*> OpfNet::layer_list() const {
  std::vector<const nn::DenseLayer*> out;
  for (const nn::DenseLayer& l : trunk_.layers()) out.push_back(&l);
  for (const nn::Mlp& h : heads_) {
    for (const nn::DenseLayer& l : h.layers()) out.push_back(&l);
  }
  return out;
}

OpfNet build_model(const ModelVariant& variant, const CaseDims& dims, std::uint64_t seed,
                   const ModelOptions& options) {
  OpfNet net(variant, dims, options);
  net.initialize(seed);
  return net;
}

CaseLayout::CaseLayout(const NetworkCase& net)
    : dims(net.dims()), load_buses(net.load_buses()), gen_buses(net.generator_buses()) {
  const auto lines = net.directed_lines();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    line_from.push_back(lines[k].from);
    line_to.push_back(lines[k].to);
    if (std::isfinite(lines[k].s_max)) limited_lines.push_back(k);
  }
}

}  // namespace opflab
