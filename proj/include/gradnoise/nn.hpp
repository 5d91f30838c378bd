#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gradnoise/gradients.hpp"
#include "gradnoise/rng.hpp"
#include "gradnoise/tensor.hpp"

namespace gradnoise::nn {

struct AffineLayer {
  Tensor weights;  // fan_in x fan_out
  Tensor bias;     // fan_out

  std::size_t fan_in() const { return weights.rows(); }
  std::size_t fan_out() const { return weights.cols(); }
};

/// Affine layers with ReLU between them and identity on the output layer.
/// Dropout, when enabled, acts on every hidden activation.
class MlpModel {
 public:
  MlpModel() = default;
  explicit MlpModel(std::vector<AffineLayer> layers, double dropout_rate = 0.0);

  const std::vector<AffineLayer>& layers() const { return layers_; }
  std::vector<AffineLayer>& layers() { return layers_; }
  double dropout_rate() const { return dropout_rate_; }
  std::size_t input_dim() const { return layers_.front().fan_in(); }
  std::size_t output_dim() const { return layers_.back().fan_out(); }
  std::size_t parameter_count() const;

  /// "layer<i>.weights", "layer<i>.bias" in layer order.
  ParamRefs parameters();

 private:
  std::vector<AffineLayer> layers_;
  double dropout_rate_ = 0.0;
};

/// Layer dims (fan_in, fan_out) for `hidden` hidden layers of `width` units.
std::vector<std::pair<std::size_t, std::size_t>> mlp_dims(std::size_t input, std::size_t width, std::size_t hidden,
                                                          std::size_t classes);

struct ForwardCache {
  std::vector<Tensor> inputs;    // input to each affine layer (after dropout)
  std::vector<Tensor> preacts;   // affine output of each hidden layer
  std::vector<Tensor> masks;     // keep masks per hidden layer; empty when dropout is inactive
  double dropout_scale = 1.0;
};

Tensor relu(const Tensor& x);
/// Upstream masked by (preactivation > 0); the derivative at 0 is taken as 0.
Tensor relu_backward(const Tensor& upstream, const Tensor& preactivation);

struct LossAndGrad {
  double loss;
  Tensor grad;
};

/// -log softmax(logits)[label] with max subtraction; grad = softmax - onehot.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label);
/// Mean loss over the rows of `logits`; the gradient carries the 1/batch factor.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 1 = kept, 0 = dropped
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) at train time.
DropoutResult dropout_forward(const Tensor& x, double rate, Rng& rng, bool training);

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

ForwardResult mlp_forward(const MlpModel& model, const Tensor& batch, Rng& rng, bool training);
/// Inference pass; dropout is off.
Tensor mlp_logits(const MlpModel& model, const Tensor& batch);

GradientSet mlp_backward(const MlpModel& model, const ForwardCache& cache, const Tensor& grad_logits);

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

/// Relative error |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Largest relative error between analytic gradients and central differences
/// of the mean cross-entropy loss, over every parameter.
double gradient_check(const MlpModel& model, const Tensor& batch, std::span<const int> labels,
                      double h = kDefaultFiniteDifferenceStep);

std::vector<int> predict(const MlpModel& model, const Tensor& inputs);
/// Fraction of rows whose argmax logit equals the label. Throws on empty input.
double accuracy(const MlpModel& model, const Tensor& inputs, std::span<const int> labels);

}  // namespace gradnoise::nn
