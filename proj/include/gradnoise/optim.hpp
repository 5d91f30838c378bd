#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gradnoise/gradients.hpp"
#include "gradnoise/rng.hpp"

namespace gradnoise::optim {

enum class NoiseMode { kOff, kAnnealed, kFixed };

/// Gradient noise variance schedule.
///
/// Annealed mode uses sigma_t^2 = eta / (1 + t)^gamma, with t the number of
/// optimizer updates taken so far. Fixed mode uses a constant stddev.
struct NoiseSchedule {
  NoiseMode mode = NoiseMode::kOff;
  double eta = 0.0;
  double gamma = 0.55;
  double fixed_stddev = 0.0;

  static NoiseSchedule off() { return {}; }
  static NoiseSchedule annealed(double eta, double gamma = 0.55);
  static NoiseSchedule fixed(double stddev);
};

std::string noise_mode_name(NoiseMode mode);
NoiseMode noise_mode_from_name(std::string_view name);

double noise_variance(const NoiseSchedule& schedule, std::uint64_t t);
double noise_stddev(const NoiseSchedule& schedule, std::uint64_t t);

/// Adds i.i.d. N(0, stddev^2) to every element of every gradient.
GradientSet inject_noise(GradientSet grads, double stddev, Rng& rng);

struct ClipConfig {
  std::optional<double> threshold;  // absent: no clipping

  static ClipConfig none() { return {}; }
  static ClipConfig at(double threshold);
};

struct ClipResult {
  GradientSet grads;
  double pre_norm;
};

inline constexpr double kClipTolerance = 1e-12;

/// Rescales the whole set by threshold / norm when its global L2 norm
/// exceeds threshold * (1 + kClipTolerance).
ClipResult clip_global_norm(GradientSet grads, const ClipConfig& config);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  std::uint64_t t = 0;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GradientSet m;
  GradientSet v;

  static OptimizerState sgd(double learning_rate);
  static OptimizerState adam(double learning_rate);
};

std::string optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(std::string_view name);

/// p <- p - lr * g.
void sgd_step(const ParamRefs& params, const GradientSet& grads, double lr);

/// Bias-corrected Adam update. Moments are allocated on first use; t is
/// incremented.
void adam_step(const ParamRefs& params, const GradientSet& grads, OptimizerState& state);

enum class PipelineOrder { kClipThenNoise, kNoiseThenClip };

std::string pipeline_order_name(PipelineOrder order);
PipelineOrder pipeline_order_from_name(std::string_view name);

struct StepDiagnostics {
  std::uint64_t step = 0;  // t before the update
  double pre_norm = 0.0;   // norm entering the clip stage
  double post_norm = 0.0;  // norm leaving the clip stage
  double sigma = 0.0;      // noise stddev used at this step

  friend bool operator==(const StepDiagnostics&, const StepDiagnostics&) = default;
};

/// One training update. With kClipThenNoise: clip, add noise with the
/// schedule's stddev at the current t, then apply the optimizer. t advances
/// by exactly one.
StepDiagnostics apply_step(const ParamRefs& params, GradientSet grads, OptimizerState& state, const ClipConfig& clip,
                           const NoiseSchedule& noise, PipelineOrder order, Rng& rng);

}  // namespace gradnoise::optim
