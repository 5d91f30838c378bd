#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gradnoise/experiment.hpp"
#include "gradnoise/gradients.hpp"
#include "gradnoise/rng.hpp"
#include "gradnoise/tasks.hpp"

namespace gradnoise::programmer {

using tasks::kOpCount;
using tasks::Op;
using OpProbs = std::array<double, kOpCount>;

/// Question encoder (affine + tanh) feeding one affine op head per step.
/// Greater reads the question's greater pivot, Lesser its lesser pivot.
class SelectorModel {
 public:
  /// All parameters zero.
  SelectorModel(std::size_t input_dim, std::size_t hidden, std::size_t steps);
  /// Gaussian weights with stddev scale / sqrt(fan_in), zero biases.
  static SelectorModel random(std::size_t input_dim, std::size_t hidden, std::size_t steps, double scale, Rng& rng);

  std::size_t input_dim() const { return encoder_weights_.rows(); }
  std::size_t hidden() const { return encoder_weights_.cols(); }
  std::size_t steps() const { return head_weights_.size(); }

  const Tensor& encoder_weights() const { return encoder_weights_; }
  const Tensor& encoder_bias() const { return encoder_bias_; }
  const Tensor& head_weights(std::size_t step) const { return head_weights_.at(step); }
  const Tensor& head_bias(std::size_t step) const { return head_biases_.at(step); }

  /// Zeroes the head weights and puts `margin` on the chosen op's bias, so
  /// every step's distribution is one-hot for margins far above log(DBL_MAX).
  void force_program(std::span<const Op> ops, double margin = 1000.0);

  /// "encoder.weights", "encoder.bias", then "head<k>.weights", "head<k>.bias".
  ParamRefs parameters();
  GradientSet zero_gradients() const;

 private:
  Tensor encoder_weights_;  // input_dim x hidden
  Tensor encoder_bias_;     // hidden
  std::vector<Tensor> head_weights_;  // hidden x kOpCount, one per step
  std::vector<Tensor> head_biases_;   // kOpCount, one per step
};

struct Pivots {
  double greater = 0.0;
  double lesser = 0.0;
};

struct SoftExecState {
  Tensor selection;  // in [0, 1]^N
  double accumulator = 0.0;
};

SoftExecState initial_state(std::size_t rows);

/// Probability-weighted mixture of every op's result. Throws if the
/// probabilities do not sum to 1 within 1e-9.
SoftExecState soft_step(const SoftExecState& state, const OpProbs& op_probs, const Tensor& column,
                        const Pivots& pivots);

struct SoftCache {
  Tensor hidden;                     // tanh output before dropout
  Tensor dropout_mask;               // empty unless dropout was applied
  double dropout_scale = 1.0;
  std::vector<OpProbs> probs;        // per step
  std::vector<SoftExecState> states; // states[0] is the initial state, states[T] the final one
};

struct SoftForwardResult {
  double prediction = 0.0;
  SoftCache cache;
};

/// Differentiable execution: prediction is the accumulator after the last step.
SoftForwardResult soft_forward(const SelectorModel& model, const tasks::TableQuestion& question);
/// Training-time pass with inverted dropout on the hidden state.
SoftForwardResult soft_forward(const SelectorModel& model, const tasks::TableQuestion& question, double dropout_rate,
                               Rng& rng);

/// Adds d(prediction)/d(params) * upstream into `grads`.
void accumulate_soft_gradient(const SelectorModel& model, const tasks::TableQuestion& question,
                              const SoftCache& cache, double upstream, GradientSet& grads);

struct LossGradient {
  double loss = 0.0;
  GradientSet grads;
};

/// Mean of 0.5 * (prediction - answer)^2 over the batch, with its gradient.
LossGradient soft_loss_and_gradient(const SelectorModel& model, std::span<const tasks::TableQuestion> batch,
                                    double dropout_rate, Rng& rng);
double soft_loss(const SelectorModel& model, std::span<const tasks::TableQuestion> batch);

struct HardResult {
  double prediction = 0.0;
  std::vector<Op> program;  // one op per step
};

/// Argmax op per step (ties go to the earlier op in vocabulary order), then
/// hard execution.
HardResult hard_forward(const SelectorModel& model, const tasks::TableQuestion& question);

/// Induced program with NoOps removed and pivots bound from the question.
tasks::Program induced_program(const HardResult& hard, const tasks::TableQuestion& question);

/// One row per step with the selected op.
std::string format_program_table(const tasks::TableQuestion& question, const HardResult& hard);

double hard_accuracy(const SelectorModel& model, std::span<const tasks::TableQuestion> questions);

/// Max relative error of analytic vs central-difference gradients of the
/// soft loss over every parameter.
double gradient_check(const SelectorModel& model, std::span<const tasks::TableQuestion> batch, double h = 1e-5);

/// Trains on `train` with Adam (or the configured optimizer) through the
/// clip/noise pipeline; tracks hard-selection accuracy on `test` each epoch.
RunResult train_programmer(const TrainConfig& config, std::span<const tasks::TableQuestion> train,
                           std::span<const tasks::TableQuestion> test, bool keep_step_log = false);

/// Builds train and test sets from the config's seed and trains.
RunResult train_programmer(const TrainConfig& config, bool keep_step_log = false);

}  // namespace gradnoise::programmer
