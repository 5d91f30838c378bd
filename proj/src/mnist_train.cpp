#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "gradnoise/harness.hpp"
#include "gradnoise/init.hpp"
#include "gradnoise/nn.hpp"

namespace gradnoise::harness {
namespace {

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  throw std::runtime_error("missing " + (dir / stem).string() + "[.gz]");
}

constexpr std::size_t kClasses = 10;

}  // namespace

MnistData load_mnist_dir(const std::filesystem::path& dir) {
  return {tasks::load_mnist(find_idx(dir, "train-images-idx3-ubyte"), find_idx(dir, "train-labels-idx1-ubyte"),
                            tasks::Split::kTrain),
          tasks::load_mnist(find_idx(dir, "t10k-images-idx3-ubyte"), find_idx(dir, "t10k-labels-idx1-ubyte"),
                            tasks::Split::kTest)};
}

RunResult train_mnist(const TrainConfig& config, const tasks::Dataset& train_full, const tasks::Dataset& test,
                      bool keep_step_log) {
  if (config.task != TaskKind::kMnist) throw std::invalid_argument("train_mnist: config is not an mnist config");
  if (config.batch_size == 0) throw std::invalid_argument("train_mnist: batch size must be positive");
  const auto started = std::chrono::steady_clock::now();

  Rng init_rng(Rng::derive_seed(config.seed, 1));
  Rng shuffle_rng(Rng::derive_seed(config.seed, 2));
  Rng noise_rng(Rng::derive_seed(config.seed, 3));
  Rng dropout_rng(Rng::derive_seed(config.seed, 4));
  Rng subset_rng(Rng::derive_seed(config.seed, 5));

  tasks::Dataset subsetted;
  const bool use_subset = config.train_subset && *config.train_subset < train_full.size();
  if (use_subset) subsetted = tasks::subset(train_full, *config.train_subset, subset_rng);
  const tasks::Dataset& train = use_subset ? subsetted : train_full;
  if (train.size() == 0) throw std::invalid_argument("train_mnist: empty training set");

  const std::size_t dim = train.inputs.cols();
  nn::MlpModel model(init::initialize(config.init, nn::mlp_dims(dim, config.hidden_width, config.hidden_layers, kClasses),
                                      init_rng),
                     config.dropout_rate);
  auto state = config.optimizer == optim::OptimizerKind::kAdam ? optim::OptimizerState::adam(config.learning_rate)
                                                                : optim::OptimizerState::sgd(config.learning_rate);
  const auto params = model.parameters();

  RunResult result;
  result.config = config;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double norm_total = 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_total = 0.0;
    std::size_t batches = 0, seen = 0, correct = 0;
    if (!result.diverged) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - start);
        Tensor batch(Shape(n, dim));
        std::vector<int> labels(n);
        for (std::size_t r = 0; r < n; ++r) {
          auto src = train.inputs.row(order[start + r]);
          std::copy(src.begin(), src.end(), batch.row(r).begin());
          labels[r] = train.labels[order[start + r]];
        }

        auto fwd = nn::mlp_forward(model, batch, dropout_rng, true);
        auto lg = nn::softmax_cross_entropy(fwd.logits, labels);
        if (!std::isfinite(lg.loss)) {
          result.diverged = true;
          break;
        }
        for (std::size_t r = 0; r < n; ++r) {
          auto row = fwd.logits.row(r);
          correct += (std::max_element(row.begin(), row.end()) - row.begin()) == labels[r];
        }
        seen += n;
        auto grads = nn::mlp_backward(model, fwd.cache, lg.grad);
        if (!grads.all_finite()) {
          result.diverged = true;
          break;
        }
        loss_total += lg.loss;
        ++batches;

        const auto diag =
            optim::apply_step(params, std::move(grads), state, config.clip, config.noise, config.order, noise_rng);
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
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.train_loss = batches ? loss_total / static_cast<double>(batches) : nan;
    m.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : nan;
    m.test_accuracy = nn::accuracy(model, test.inputs, test.labels);
    result.epochs.push_back(m);
    result.best_test_accuracy = std::max(result.best_test_accuracy, m.test_accuracy);
  }

  if (result.diagnostics.steps) result.diagnostics.mean_pre_norm = norm_total / static_cast<double>(result.diagnostics.steps);
  result.final_test_accuracy = result.epochs.empty() ? 0.0 : result.epochs.back().test_accuracy;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace gradnoise::harness
