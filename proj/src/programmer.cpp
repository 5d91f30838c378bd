#include "gradnoise/programmer.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gradnoise/nn.hpp"

namespace gradnoise::programmer {

using tasks::TableQuestion;

SelectorModel::SelectorModel(std::size_t input_dim, std::size_t hidden, std::size_t steps)
    : encoder_weights_(Shape(input_dim, hidden)), encoder_bias_(Shape(hidden)) {
  if (input_dim == 0 || hidden == 0 || steps == 0) throw std::invalid_argument("SelectorModel: zero-sized dimension");
  for (std::size_t k = 0; k < steps; ++k) {
    head_weights_.emplace_back(Shape(hidden, kOpCount));
    head_biases_.emplace_back(Shape(kOpCount));
  }
}

SelectorModel SelectorModel::random(std::size_t input_dim, std::size_t hidden, std::size_t steps, double scale,
                                    Rng& rng) {
  SelectorModel m(input_dim, hidden, steps);
  m.encoder_weights_ =
      gaussian_tensor(rng, m.encoder_weights_.shape(), 0.0, scale / std::sqrt(static_cast<double>(input_dim)));
  for (auto& w : m.head_weights_) w = gaussian_tensor(rng, w.shape(), 0.0, scale / std::sqrt(static_cast<double>(hidden)));
  return m;
}

void SelectorModel::force_program(std::span<const Op> ops, double margin) {
  if (ops.size() != steps()) throw std::invalid_argument("force_program: need one op per step");
  for (std::size_t k = 0; k < steps(); ++k) {
    head_weights_[k] = Tensor(head_weights_[k].shape());
    head_biases_[k] = Tensor(head_biases_[k].shape());
    head_biases_[k][static_cast<std::size_t>(ops[k])] = margin;
  }
}

ParamRefs SelectorModel::parameters() {
  ParamRefs refs;
  refs.push_back({"encoder.weights", &encoder_weights_});
  refs.push_back({"encoder.bias", &encoder_bias_});
  for (std::size_t k = 0; k < steps(); ++k) {
    refs.push_back({"head" + std::to_string(k) + ".weights", &head_weights_[k]});
    refs.push_back({"head" + std::to_string(k) + ".bias", &head_biases_[k]});
  }
  return refs;
}

GradientSet SelectorModel::zero_gradients() const {
  GradientSet g;
  g.add("encoder.weights", Tensor(encoder_weights_.shape()));
  g.add("encoder.bias", Tensor(encoder_bias_.shape()));
  for (std::size_t k = 0; k < steps(); ++k) {
    g.add("head" + std::to_string(k) + ".weights", Tensor(head_weights_[k].shape()));
    g.add("head" + std::to_string(k) + ".bias", Tensor(head_biases_[k].shape()));
  }
  return g;
}

SoftExecState initial_state(std::size_t rows) { return {Tensor(Shape(rows), 1.0), 0.0}; }

namespace {

constexpr std::size_t kG = static_cast<std::size_t>(Op::kGreater);
constexpr std::size_t kL = static_cast<std::size_t>(Op::kLesser);
constexpr std::size_t kC = static_cast<std::size_t>(Op::kCount);
constexpr std::size_t kS = static_cast<std::size_t>(Op::kSum);
constexpr std::size_t kN = static_cast<std::size_t>(Op::kNoOp);

Pivots pivots_of(const TableQuestion& q) { return {q.greater_pivot, q.lesser_pivot}; }

Tensor encode(const SelectorModel& model, const Tensor& encoding) {
  if (encoding.size() != model.input_dim()) {
    throw DimensionError("question encoding has " + std::to_string(encoding.size()) + " entries, model expects " +
                         std::to_string(model.input_dim()));
  }
  const Tensor& w = model.encoder_weights();
  Tensor h = model.encoder_bias();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double q = encoding[i];
    if (q == 0.0) continue;
    auto row = w.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) h[j] += q * row[j];
  }
  for (double& v : h.data()) v = std::tanh(v);
  return h;
}

std::array<double, kOpCount> head_logits(const SelectorModel& model, std::size_t step, const Tensor& h) {
  std::array<double, kOpCount> logits{};
  const Tensor& w = model.head_weights(step);
  const Tensor& b = model.head_bias(step);
  for (std::size_t j = 0; j < kOpCount; ++j) logits[j] = b[j];
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double hv = h[i];
    for (std::size_t j = 0; j < kOpCount; ++j) logits[j] += hv * w(i, j);
  }
  return logits;
}

OpProbs softmax(const std::array<double, kOpCount>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  OpProbs p{};
  double denom = 0.0;
  for (std::size_t j = 0; j < kOpCount; ++j) {
    p[j] = std::exp(logits[j] - mx);
    denom += p[j];
  }
  for (double& v : p) v /= denom;
  return p;
}

SoftForwardResult run_soft(const SelectorModel& model, const TableQuestion& q, Tensor hidden_used, Tensor hidden,
                           Tensor mask, double scale) {
  SoftForwardResult out;
  out.cache.hidden = std::move(hidden);
  out.cache.dropout_mask = std::move(mask);
  out.cache.dropout_scale = scale;
  out.cache.states.push_back(initial_state(q.column.size()));
  const Pivots pv = pivots_of(q);
  for (std::size_t k = 0; k < model.steps(); ++k) {
    out.cache.probs.push_back(softmax(head_logits(model, k, hidden_used)));
    out.cache.states.push_back(soft_step(out.cache.states.back(), out.cache.probs.back(), q.column, pv));
  }
  out.prediction = out.cache.states.back().accumulator;
  return out;
}

}  // namespace

SoftExecState soft_step(const SoftExecState& state, const OpProbs& op_probs, const Tensor& column,
                        const Pivots& pivots) {
  double total = 0.0;
  for (double p : op_probs) total += p;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("soft_step: op probabilities sum to " + std::to_string(total));
  }
  if (state.selection.size() != column.size()) throw DimensionError("soft_step: selection and column lengths differ");

  const auto x = column.data();
  const auto s = state.selection.data();
  const double keep = op_probs[kN] + op_probs[kC] + op_probs[kS];
  SoftExecState next{Tensor(state.selection.shape()), state.accumulator};
  auto out = next.selection.data();
  double count = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double greater = x[i] > pivots.greater ? s[i] : 0.0;
    const double lesser = x[i] < pivots.lesser ? s[i] : 0.0;
    // the mixture never exceeds the incoming selection; rounding in the
    // probabilities could push it one ulp past, so pin it
    out[i] = std::clamp(op_probs[kG] * greater + op_probs[kL] * lesser + keep * s[i], 0.0, s[i]);
    count += s[i];
    sum += s[i] * x[i];
  }
  next.accumulator += op_probs[kC] * count + op_probs[kS] * sum;
  return next;
}

SoftForwardResult soft_forward(const SelectorModel& model, const TableQuestion& question) {
  Tensor h = encode(model, question.encoding);
  Tensor used = h;
  return run_soft(model, question, std::move(used), std::move(h), Tensor(), 1.0);
}

SoftForwardResult soft_forward(const SelectorModel& model, const TableQuestion& question, double dropout_rate,
                               Rng& rng) {
  if (dropout_rate == 0.0) return soft_forward(model, question);
  Tensor h = encode(model, question.encoding);
  auto dropped = nn::dropout_forward(h, dropout_rate, rng, true);
  return run_soft(model, question, std::move(dropped.output), std::move(h), std::move(dropped.mask),
                  1.0 / (1.0 - dropout_rate));
}

void accumulate_soft_gradient(const SelectorModel& model, const TableQuestion& question, const SoftCache& cache,
                              double upstream, GradientSet& grads) {
  const std::size_t steps = model.steps();
  const std::size_t hidden = model.hidden();
  if (grads.size() != 2 + 2 * steps) throw DimensionError("accumulate_soft_gradient: gradient set does not match model");

  const auto x = question.column.data();
  const Pivots pv = pivots_of(question);
  const std::size_t n = x.size();
  const bool dropped = cache.dropout_mask.size() != 0;

  Tensor h_used = cache.hidden;
  if (dropped) {
    for (std::size_t i = 0; i < hidden; ++i) h_used[i] *= cache.dropout_mask[i] * cache.dropout_scale;
  }

  std::vector<double> sel_adj(n, 0.0);
  std::vector<double> prev_adj(n);
  Tensor dh_used{Shape(hidden)};
  for (std::size_t k = steps; k-- > 0;) {
    const auto& p = cache.probs[k];
    const auto s = cache.states[k].selection.data();
    std::array<double, kOpCount> dp{};
    double count = 0.0, sum = 0.0, kept = 0.0, via_greater = 0.0, via_lesser = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = x[i] > pv.greater ? 1.0 : 0.0;
      const double l = x[i] < pv.lesser ? 1.0 : 0.0;
      const double adj_s = sel_adj[i] * s[i];
      count += s[i];
      sum += s[i] * x[i];
      kept += adj_s;
      via_greater += adj_s * g;
      via_lesser += adj_s * l;
      prev_adj[i] = sel_adj[i] * (p[kG] * g + p[kL] * l + p[kN] + p[kC] + p[kS]) + upstream * (p[kC] + p[kS] * x[i]);
    }
    dp[kG] = via_greater;
    dp[kL] = via_lesser;
    dp[kN] = kept;
    dp[kC] = kept + upstream * count;
    dp[kS] = kept + upstream * sum;
    sel_adj.swap(prev_adj);

    double mean = 0.0;
    for (std::size_t j = 0; j < kOpCount; ++j) mean += p[j] * dp[j];
    std::array<double, kOpCount> dlogit{};
    for (std::size_t j = 0; j < kOpCount; ++j) dlogit[j] = p[j] * (dp[j] - mean);

    Tensor& dw = grads[2 + 2 * k].value;
    Tensor& db = grads[3 + 2 * k].value;
    const Tensor& w = model.head_weights(k);
    for (std::size_t i = 0; i < hidden; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kOpCount; ++j) {
        dw(i, j) += h_used[i] * dlogit[j];
        acc += w(i, j) * dlogit[j];
      }
      dh_used[i] += acc;
    }
    for (std::size_t j = 0; j < kOpCount; ++j) db[j] += dlogit[j];
  }

  Tensor& dwe = grads[0].value;
  Tensor& dbe = grads[1].value;
  for (std::size_t j = 0; j < hidden; ++j) {
    double dh = dh_used[j];
    if (dropped) dh *= cache.dropout_mask[j] * cache.dropout_scale;
    const double dz = dh * (1.0 - cache.hidden[j] * cache.hidden[j]);
    dbe[j] += dz;
    for (std::size_t i = 0; i < dwe.rows(); ++i) {
      const double q = question.encoding[i];
      if (q != 0.0) dwe(i, j) += q * dz;
    }
  }
}

LossGradient soft_loss_and_gradient(const SelectorModel& model, std::span<const TableQuestion> batch,
                                    double dropout_rate, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("soft_loss_and_gradient: empty batch");
  LossGradient out{0.0, model.zero_gradients()};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& q : batch) {
    const auto fwd = soft_forward(model, q, dropout_rate, rng);
    const double err = fwd.prediction - q.answer;
    out.loss += 0.5 * err * err * inv;
    accumulate_soft_gradient(model, q, fwd.cache, err * inv, out.grads);
  }
  return out;
}

double soft_loss(const SelectorModel& model, std::span<const TableQuestion> batch) {
  double loss = 0.0;
  for (const auto& q : batch) {
    const double err = soft_forward(model, q).prediction - q.answer;
    loss += 0.5 * err * err;
  }
  return loss / static_cast<double>(batch.size());
}

HardResult hard_forward(const SelectorModel& model, const TableQuestion& question) {
  const Tensor h = encode(model, question.encoding);
  HardResult out;
  std::vector<tasks::Instruction> steps;
  for (std::size_t k = 0; k < model.steps(); ++k) {
    const auto logits = head_logits(model, k, h);
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const Op op = static_cast<Op>(best);
    out.program.push_back(op);
    const double pivot = op == Op::kGreater ? question.greater_pivot : op == Op::kLesser ? question.lesser_pivot : 0.0;
    steps.push_back({op, pivot});
  }
  out.prediction = tasks::execute_steps(question.column, steps);
  return out;
}

tasks::Program induced_program(const HardResult& hard, const TableQuestion& question) {
  tasks::Program program;
  for (Op op : hard.program) {
    if (op == Op::kNoOp) continue;
    const double pivot = op == Op::kGreater ? question.greater_pivot : op == Op::kLesser ? question.lesser_pivot : 0.0;
    program.push_back({op, pivot});
  }
  return program;
}

std::string format_program_table(const TableQuestion& question, const HardResult& hard) {
  std::ostringstream os;
  os << "Question: " << tasks::program_string(question.program) << '\n';
  os << "t | Selected Op\n";
  for (std::size_t k = 0; k < hard.program.size(); ++k) os << k + 1 << " | " << tasks::op_name(hard.program[k]) << '\n';
  os << "Answer: " << hard.prediction << " (expected " << question.answer << ")\n";
  return os.str();
}

double hard_accuracy(const SelectorModel& model, std::span<const TableQuestion> questions) {
  if (questions.empty()) throw std::invalid_argument("hard_accuracy: empty question set");
  std::size_t correct = 0;
  for (const auto& q : questions) correct += tasks::answer_matches(q, hard_forward(model, q).prediction);
  return static_cast<double>(correct) / static_cast<double>(questions.size());
}

double gradient_check(const SelectorModel& model, std::span<const TableQuestion> batch, double h) {
  SelectorModel probe = model;
  Rng unused(0);
  const auto analytic = soft_loss_and_gradient(probe, batch, 0.0, unused).grads;
  double worst = 0.0;
  auto params = probe.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].value->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = soft_loss(probe, batch);
      values[i] = saved - h;
      const double down = soft_loss(probe, batch);
      values[i] = saved;
      worst = std::max(worst, nn::relative_error(analytic[p].value[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

RunResult train_programmer(const TrainConfig& config, std::span<const TableQuestion> train,
                           std::span<const TableQuestion> test, bool keep_step_log) {
  if (config.task != TaskKind::kProgrammer) throw std::invalid_argument("train_programmer: config is not a programmer config");
  if (train.empty() || test.empty()) throw std::invalid_argument("train_programmer: empty dataset");
  if (config.batch_size == 0) throw std::invalid_argument("train_programmer: batch size must be positive");
  const auto started = std::chrono::steady_clock::now();

  Rng init_rng(Rng::derive_seed(config.seed, 1));
  Rng shuffle_rng(Rng::derive_seed(config.seed, 2));
  Rng noise_rng(Rng::derive_seed(config.seed, 3));
  Rng dropout_rng(Rng::derive_seed(config.seed, 4));

  SelectorModel model = SelectorModel::random(tasks::kEncodingDim, config.selector_hidden, config.selector_steps,
                                              config.selector_init_scale, init_rng);
  auto state = config.optimizer == optim::OptimizerKind::kAdam ? optim::OptimizerState::adam(config.learning_rate)
                                                                : optim::OptimizerState::sgd(config.learning_rate);
  const auto params = model.parameters();

  RunResult result;
  result.config = config;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TableQuestion> batch;
  double norm_total = 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_total = 0.0;
    std::size_t batches = 0;
    if (!result.diverged) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
        auto lg = soft_loss_and_gradient(model, batch, config.dropout_rate, dropout_rng);
        if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
          result.diverged = true;
          break;
        }
        loss_total += lg.loss;
        ++batches;
        const auto diag =
            optim::apply_step(params, std::move(lg.grads), state, config.clip, config.noise, config.order, noise_rng);
        auto& summary = result.diagnostics;
        if (summary.steps == 0) summary.first_sigma = diag.sigma;
        summary.last_sigma = diag.sigma;
        ++summary.steps;
        norm_total += diag.pre_norm;
        summary.max_pre_norm = std::max(summary.max_pre_norm, diag.pre_norm);
        if (config.clip.threshold && diag.pre_norm > *config.clip.threshold) ++summary.clipped_steps;
        if (keep_step_log) result.step_log.push_back(diag);
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = batches ? loss_total / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
    m.train_accuracy = hard_accuracy(model, train);
    m.test_accuracy = hard_accuracy(model, test);
    result.epochs.push_back(m);
    result.best_test_accuracy = std::max(result.best_test_accuracy, m.test_accuracy);
  }
  if (result.diagnostics.steps) result.diagnostics.mean_pre_norm = norm_total / static_cast<double>(result.diagnostics.steps);
  result.final_test_accuracy = result.epochs.empty() ? 0.0 : result.epochs.back().test_accuracy;
  result.success = result.best_test_accuracy == 1.0;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

RunResult train_programmer(const TrainConfig& config, bool keep_step_log) {
  Rng data_rng(config.table_seed);
  tasks::TableTaskConfig task;
  task.column_len = config.table_rows;
  task.min_depth = config.table_min_depth;
  task.max_depth = config.table_max_depth;
  task.n_examples = config.table_train;
  const auto train = tasks::generate_table_task(data_rng, task);
  task.n_examples = config.table_test;
  const auto test = tasks::generate_table_task(data_rng, task);
  return train_programmer(config, train, test, keep_step_log);
}

}  // namespace gradnoise::programmer
