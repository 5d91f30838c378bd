#include "gradnoise/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gradnoise::nn {

MlpModel::MlpModel(std::vector<AffineLayer> layers, double dropout_rate)
    : layers_(std::move(layers)), dropout_rate_(dropout_rate) {
  if (layers_.empty()) throw std::invalid_argument("MlpModel: at least one layer required");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("MlpModel: dropout rate outside [0, 1)");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rank() != 2 || l.bias.rank() != 1 || l.weights.cols() != l.bias.rows()) {
      throw DimensionError("layer " + std::to_string(i) + ": weights " + l.weights.shape().str() +
                           " do not match bias " + l.bias.shape().str());
    }
    if (i > 0 && layers_[i - 1].fan_out() != l.fan_in()) {
      throw DimensionError("layer " + std::to_string(i) + " fan_in " + std::to_string(l.fan_in()) +
                           " does not chain with previous fan_out " + std::to_string(layers_[i - 1].fan_out()));
    }
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

ParamRefs MlpModel::parameters() {
  ParamRefs refs;
  refs.reserve(2 * layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    refs.push_back({prefix + ".weights", &layers_[i].weights});
    refs.push_back({prefix + ".bias", &layers_[i].bias});
  }
  return refs;
}

std::vector<std::pair<std::size_t, std::size_t>> mlp_dims(std::size_t input, std::size_t width, std::size_t hidden,
                                                          std::size_t classes) {
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t prev = input;
  for (std::size_t i = 0; i < hidden; ++i) {
    dims.emplace_back(prev, width);
    prev = width;
  }
  dims.emplace_back(prev, classes);
  return dims;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& upstream, const Tensor& preactivation) {
  if (!(upstream.shape() == preactivation.shape())) {
    throw DimensionError("relu_backward: upstream " + upstream.shape().str() + " vs preactivation " +
                         preactivation.shape().str());
  }
  Tensor out(upstream.shape());
  auto u = upstream.data();
  auto z = preactivation.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = z[i] > 0.0 ? u[i] : 0.0;
  return out;
}

namespace {

// Writes softmax(logits) - onehot(label) into grad and returns the loss.
double softmax_xent_row(std::span<const double> logits, std::size_t label, std::span<double> grad) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    grad[j] = std::exp(logits[j] - mx);
    denom += grad[j];
  }
  for (double& g : grad) g /= denom;
  const double loss = std::log(denom) - (logits[label] - mx);
  grad[label] -= 1.0;
  return loss;
}

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " + std::to_string(classes) +
                            " classes");
  }
}

Tensor affine(const Tensor& x, const AffineLayer& layer) {
  Tensor z = matmul(x, layer.weights);
  const auto b = layer.bias.data();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  return z;
}

}  // namespace

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1 || logits.size() == 0) throw DimensionError("softmax_cross_entropy: expected non-empty vector");
  check_label(label, logits.size());
  Tensor grad(logits.shape());
  const double loss = softmax_xent_row(logits.data(), label, grad.data());
  return {loss, std::move(grad)};
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: expected rank-2 logits");
  if (logits.rows() != labels.size()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(logits.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  Tensor grad(logits.shape());
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0) throw std::out_of_range("negative label " + std::to_string(labels[r]));
    check_label(static_cast<std::size_t>(labels[r]), logits.cols());
    auto g = grad.row(r);
    total += softmax_xent_row(logits.row(r), static_cast<std::size_t>(labels[r]), g);
    for (double& v : g) v *= inv_batch;
  }
  return {total * inv_batch, std::move(grad)};
}

DropoutResult dropout_forward(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  Tensor mask(x.shape(), 1.0);
  if (!training || rate == 0.0) return {x, std::move(mask)};
  Tensor out(x.shape());
  const double scale = 1.0 / (1.0 - rate);
  auto in = x.data();
  auto m = mask.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (rng.bernoulli(rate)) {
      m[i] = 0.0;
      o[i] = 0.0;
    } else {
      o[i] = in[i] * scale;
    }
  }
  return {std::move(out), std::move(mask)};
}

ForwardResult mlp_forward(const MlpModel& model, const Tensor& batch, Rng& rng, bool training) {
  if (batch.rank() != 2 || batch.cols() != model.input_dim()) {
    throw DimensionError("mlp_forward: batch " + batch.shape().str() + " does not match input dim " +
                         std::to_string(model.input_dim()));
  }
  const auto& layers = model.layers();
  const bool use_dropout = training && model.dropout_rate() > 0.0;
  ForwardCache cache;
  cache.inputs.reserve(layers.size());
  cache.preacts.reserve(layers.size() - 1);
  if (use_dropout) cache.dropout_scale = 1.0 / (1.0 - model.dropout_rate());

  Tensor x = batch;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    Tensor z = affine(x, layers[i]);
    Tensor a = relu(z);
    cache.inputs.push_back(std::move(x));
    cache.preacts.push_back(std::move(z));
    if (use_dropout) {
      auto dropped = dropout_forward(a, model.dropout_rate(), rng, true);
      cache.masks.push_back(std::move(dropped.mask));
      a = std::move(dropped.output);
    }
    x = std::move(a);
  }
  Tensor logits = affine(x, layers.back());
  cache.inputs.push_back(std::move(x));
  return {std::move(logits), std::move(cache)};
}

Tensor mlp_logits(const MlpModel& model, const Tensor& batch) {
  Rng unused(0);
  return mlp_forward(model, batch, unused, false).logits;
}

GradientSet mlp_backward(const MlpModel& model, const ForwardCache& cache, const Tensor& grad_logits) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.preacts.size() + 1 != layers.size()) {
    throw DimensionError("mlp_backward: cache does not match model depth");
  }
  if (grad_logits.rank() != 2 || grad_logits.cols() != model.output_dim() ||
      grad_logits.rows() != cache.inputs.back().rows()) {
    throw DimensionError("mlp_backward: grad_logits " + grad_logits.shape().str() + " does not match forward pass");
  }
  const bool has_masks = !cache.masks.empty();

  std::vector<NamedTensor> reversed;
  reversed.reserve(2 * layers.size());
  Tensor upstream = grad_logits;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Tensor& input = cache.inputs[k];
    Tensor dw = matmul_tn(input, upstream);
    Tensor db(Shape(upstream.cols()));
    for (std::size_t r = 0; r < upstream.rows(); ++r) {
      auto row = upstream.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) db[j] += row[j];
    }
    const std::string prefix = "layer" + std::to_string(k);
    reversed.push_back({prefix + ".bias", std::move(db)});
    reversed.push_back({prefix + ".weights", std::move(dw)});
    if (k == 0) break;

    Tensor da = matmul_nt(upstream, layers[k].weights);
    if (has_masks) {
      auto m = cache.masks[k - 1].data();
      auto d = da.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i] * cache.dropout_scale;
    }
    upstream = relu_backward(da, cache.preacts[k - 1]);
  }

  GradientSet grads;
  for (auto it = reversed.rbegin(); it != reversed.rend(); ++it) grads.add(std::move(it->name), std::move(it->value));
  return grads;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

double gradient_check(const MlpModel& model, const Tensor& batch, std::span<const int> labels, double h) {
  MlpModel probe = model;
  Rng unused(0);
  auto fwd = mlp_forward(probe, batch, unused, false);
  auto lg = softmax_cross_entropy(fwd.logits, labels);
  const GradientSet analytic = mlp_backward(probe, fwd.cache, lg.grad);

  auto loss_at = [&]() { return softmax_cross_entropy(mlp_logits(probe, batch), labels).loss; };

  double worst = 0.0;
  auto params = probe.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].value->data();
    const auto& grad = analytic[p].value;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_at();
      values[i] = saved - h;
      const double down = loss_at();
      values[i] = saved;
      worst = std::max(worst, relative_error(grad[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

std::vector<int> predict(const MlpModel& model, const Tensor& inputs) {
  constexpr std::size_t kChunk = 1000;
  std::vector<int> out;
  out.reserve(inputs.rows());
  for (std::size_t start = 0; start < inputs.rows(); start += kChunk) {
    const std::size_t n = std::min(kChunk, inputs.rows() - start);
    std::vector<double> slice(inputs.data().begin() + start * inputs.cols(),
                              inputs.data().begin() + (start + n) * inputs.cols());
    const Tensor logits = mlp_logits(model, Tensor(Shape(n, inputs.cols()), std::move(slice)));
    for (std::size_t r = 0; r < n; ++r) {
      auto row = logits.row(r);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

double accuracy(const MlpModel& model, const Tensor& inputs, std::span<const int> labels) {
  if (labels.empty() || inputs.rows() == 0) throw std::invalid_argument("accuracy: empty input set");
  if (inputs.rows() != labels.size()) throw DimensionError("accuracy: inputs and labels differ in length");
  const auto predicted = predict(model, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace gradnoise::nn
