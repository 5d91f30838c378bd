#include "gradnoise/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gradnoise::optim {

NoiseSchedule NoiseSchedule::annealed(double eta, double gamma) {
  if (!(eta > 0.0)) throw std::invalid_argument("annealed noise requires eta > 0");
  if (!(gamma >= 0.0)) throw std::invalid_argument("annealed noise requires gamma >= 0");
  return {NoiseMode::kAnnealed, eta, gamma, 0.0};
}

NoiseSchedule NoiseSchedule::fixed(double stddev) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("fixed noise stddev must be non-negative");
  return {NoiseMode::kFixed, 0.0, 0.55, stddev};
}

std::string noise_mode_name(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::kOff: return "off";
    case NoiseMode::kAnnealed: return "annealed";
    case NoiseMode::kFixed: return "fixed";
  }
  return "off";
}

NoiseMode noise_mode_from_name(std::string_view name) {
  if (name == "off") return NoiseMode::kOff;
  if (name == "annealed") return NoiseMode::kAnnealed;
  if (name == "fixed") return NoiseMode::kFixed;
  throw std::invalid_argument("unknown noise mode '" + std::string(name) + "'");
}

double noise_variance(const NoiseSchedule& schedule, std::uint64_t t) {
  switch (schedule.mode) {
    case NoiseMode::kOff: return 0.0;
    case NoiseMode::kFixed: return schedule.fixed_stddev * schedule.fixed_stddev;
    case NoiseMode::kAnnealed: return schedule.eta / std::pow(1.0 + static_cast<double>(t), schedule.gamma);
  }
  return 0.0;
}

double noise_stddev(const NoiseSchedule& schedule, std::uint64_t t) {
  if (schedule.mode == NoiseMode::kFixed) return schedule.fixed_stddev;
  return std::sqrt(noise_variance(schedule, t));
}

GradientSet inject_noise(GradientSet grads, double stddev, Rng& rng) {
  if (!(stddev >= 0.0)) throw std::invalid_argument("inject_noise: stddev must be non-negative");
  if (stddev == 0.0) return grads;
  for (auto& entry : grads)
    for (double& g : entry.value.data()) g += rng.gaussian(0.0, stddev);
  return grads;
}

ClipConfig ClipConfig::at(double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  return {threshold};
}

ClipResult clip_global_norm(GradientSet grads, const ClipConfig& config) {
  const double norm = grads.norm();
  // Rescaled sets can land an ulp above the threshold; the tolerance keeps a
  // second clip from touching them again.
  if (config.threshold && norm > *config.threshold * (1.0 + kClipTolerance)) {
    const double scale = *config.threshold / norm;
    for (auto& entry : grads)
      for (double& g : entry.value.data()) g *= scale;
  }
  return {std::move(grads), norm};
}

OptimizerState OptimizerState::sgd(double learning_rate) {
  OptimizerState s;
  s.kind = OptimizerKind::kSgd;
  s.learning_rate = learning_rate;
  return s;
}

OptimizerState OptimizerState::adam(double learning_rate) {
  OptimizerState s;
  s.kind = OptimizerKind::kAdam;
  s.learning_rate = learning_rate;
  return s;
}

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_name(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void sgd_step(const ParamRefs& params, const GradientSet& grads, double lr) {
  grads.check_matches(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value->data();
    auto g = grads[i].value.data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

void adam_step(const ParamRefs& params, const GradientSet& grads, OptimizerState& state) {
  if (state.kind != OptimizerKind::kAdam) throw std::invalid_argument("adam_step: optimizer state is not adam");
  grads.check_matches(params);
  if (state.m.empty()) {
    state.m = GradientSet::zeros_like(params);
    state.v = GradientSet::zeros_like(params);
  }
  state.m.check_matches(params);
  state.v.check_matches(params);

  const double step = static_cast<double>(state.t + 1);
  const double correction1 = 1.0 - std::pow(state.beta1, step);
  const double correction2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value->data();
    auto g = grads[i].value.data();
    auto m = state.m[i].value.data();
    auto v = state.v[i].value.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  ++state.t;
}

std::string pipeline_order_name(PipelineOrder order) {
  return order == PipelineOrder::kClipThenNoise ? "clip_then_noise" : "noise_then_clip";
}

PipelineOrder pipeline_order_from_name(std::string_view name) {
  if (name == "clip_then_noise") return PipelineOrder::kClipThenNoise;
  if (name == "noise_then_clip") return PipelineOrder::kNoiseThenClip;
  throw std::invalid_argument("unknown pipeline order '" + std::string(name) + "'");
}

StepDiagnostics apply_step(const ParamRefs& params, GradientSet grads, OptimizerState& state, const ClipConfig& clip,
                           const NoiseSchedule& noise, PipelineOrder order, Rng& rng) {
  StepDiagnostics diag;
  diag.step = state.t;
  diag.sigma = noise_stddev(noise, state.t);

  if (order == PipelineOrder::kClipThenNoise) {
    auto clipped = clip_global_norm(std::move(grads), clip);
    diag.pre_norm = clipped.pre_norm;
    diag.post_norm = clip.threshold ? clipped.grads.norm() : clipped.pre_norm;
    grads = inject_noise(std::move(clipped.grads), diag.sigma, rng);
  } else {
    auto clipped = clip_global_norm(inject_noise(std::move(grads), diag.sigma, rng), clip);
    diag.pre_norm = clipped.pre_norm;
    diag.post_norm = clip.threshold ? clipped.grads.norm() : clipped.pre_norm;
    grads = std::move(clipped.grads);
  }

  if (state.kind == OptimizerKind::kAdam) {
    adam_step(params, grads, state);
  } else {
    sgd_step(params, grads, state.learning_rate);
    ++state.t;
  }
  return diag;
}

}  // namespace gradnoise::optim
