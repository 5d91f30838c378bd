#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradnoise/nn.hpp"
#include "gradnoise/rng.hpp"

namespace gradnoise::init {

enum class InitKind { kSimple, kZero, kHe, kSussillo };

struct InitScheme {
  InitKind kind = InitKind::kSimple;
  double simple_stddev = 0.1;

  static InitScheme simple(double stddev = 0.1) { return {InitKind::kSimple, stddev}; }
  static InitScheme zero() { return {InitKind::kZero}; }
  static InitScheme he() { return {InitKind::kHe}; }
  static InitScheme sussillo() { return {InitKind::kSussillo}; }
};

/// Accepts "simple" | "zero" | "he" | "sussillo".
InitScheme scheme_from_name(std::string_view name);
std::string scheme_name(const InitScheme& scheme);

/// Random-walk gain for a network of `depth` affine layers:
/// sqrt(2) * exp(1.2 / (max(depth, 6) - 2.4)).
double sussillo_gain(std::size_t depth);

/// Weight stddev the scheme uses for a layer with `fan_in` inputs in a
/// network of `depth` affine layers.
double weight_stddev(const InitScheme& scheme, std::size_t fan_in, std::size_t depth);

/// Biases start at zero for every scheme.
std::vector<nn::AffineLayer> initialize(const InitScheme& scheme,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& dims, Rng& rng);

}  // namespace gradnoise::init
