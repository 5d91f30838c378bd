#include "gradnoise/init.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gradnoise::init {

InitScheme scheme_from_name(std::string_view name) {
  if (name == "simple") return InitScheme::simple();
  if (name == "zero") return InitScheme::zero();
  if (name == "he") return InitScheme::he();
  if (name == "sussillo") return InitScheme::sussillo();
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

std::string scheme_name(const InitScheme& scheme) {
  switch (scheme.kind) {
    case InitKind::kSimple: return "simple";
    case InitKind::kZero: return "zero";
    case InitKind::kHe: return "he";
    case InitKind::kSussillo: return "sussillo";
  }
  return "unknown";
}

double sussillo_gain(std::size_t depth) {
  const double d = static_cast<double>(std::max<std::size_t>(depth, 6));
  return std::sqrt(2.0) * std::exp(1.2 / (d - 2.4));
}

double weight_stddev(const InitScheme& scheme, std::size_t fan_in, std::size_t depth) {
  const double n = static_cast<double>(fan_in);
  switch (scheme.kind) {
    case InitKind::kSimple: return scheme.simple_stddev;
    case InitKind::kZero: return 0.0;
    case InitKind::kHe: return std::sqrt(2.0 / n);
    case InitKind::kSussillo: return sussillo_gain(depth) / std::sqrt(n);
  }
  return 0.0;
}

std::vector<nn::AffineLayer> initialize(const InitScheme& scheme,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& dims, Rng& rng) {
  if (dims.empty()) throw std::invalid_argument("initialize: empty dims list");
  if (scheme.kind == InitKind::kSimple && !(scheme.simple_stddev >= 0.0)) {
    throw std::invalid_argument("initialize: simple init stddev must be non-negative");
  }
  for (std::size_t i = 1; i < dims.size(); ++i) {
    if (dims[i - 1].second != dims[i].first) throw DimensionError("initialize: layer dims do not chain");
  }
  std::vector<nn::AffineLayer> layers;
  layers.reserve(dims.size());
  for (const auto& [fan_in, fan_out] : dims) {
    const double sd = weight_stddev(scheme, fan_in, dims.size());
    layers.push_back({gaussian_tensor(rng, Shape(fan_in, fan_out), 0.0, sd), Tensor(Shape(fan_out))});
  }
  return layers;
}

}  // namespace gradnoise::init
