#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradnoise/init.hpp"
#include "gradnoise/optim.hpp"

namespace gradnoise {

enum class TaskKind { kMnist, kProgrammer };

std::string task_name(TaskKind task);
TaskKind task_from_name(std::string_view name);

/// Everything that determines a run. Serialized as flat `key = value` lines.
struct TrainConfig {
  TaskKind task = TaskKind::kMnist;
  std::string run_id = "run";

  // mnist architecture
  std::size_t hidden_layers = 20;
  std::size_t hidden_width = 50;
  init::InitScheme init = init::InitScheme::simple();

  // programmer architecture and task
  std::size_t selector_hidden = 32;
  std::size_t selector_steps = 4;
  double selector_init_scale = 1.0;
  std::size_t table_rows = 10;
  std::size_t table_min_depth = 1;
  std::size_t table_max_depth = 2;
  std::size_t table_train = 1000;
  std::size_t table_test = 1000;
  std::uint64_t table_seed = 7;  // data is shared across restarts; `seed` varies the model

  optim::OptimizerKind optimizer = optim::OptimizerKind::kSgd;
  double learning_rate = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 100;
  optim::ClipConfig clip;
  optim::NoiseSchedule noise;
  optim::PipelineOrder order = optim::PipelineOrder::kClipThenNoise;
  double dropout_rate = 0.0;
  std::uint64_t seed = 1;
  std::optional<std::size_t> train_subset;  // mnist only; absent = whole split

  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  std::string to_text() const;
  static TrainConfig from_text(std::istream& in);

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) { return a.to_map() == b.to_map(); }
};

/// Parses `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_key_values(std::istream& in);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct DiagnosticsSummary {
  std::uint64_t steps = 0;
  double first_sigma = 0.0;
  double last_sigma = 0.0;
  double mean_pre_norm = 0.0;
  double max_pre_norm = 0.0;
  std::uint64_t clipped_steps = 0;

  friend bool operator==(const DiagnosticsSummary&, const DiagnosticsSummary&) = default;
};

struct RunResult {
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  double best_test_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  bool success = false;   // programmer task: perfect hard-selection test accuracy
  bool diverged = false;  // non-finite loss or gradient; parameters frozen from then on
  double wall_seconds = 0.0;
  DiagnosticsSummary diagnostics;
  std::vector<optim::StepDiagnostics> step_log;  // filled when requested

  /// Equality over every deterministic field (wall-clock time excluded).
  bool same_outcome(const RunResult& other) const;
};

}  // namespace gradnoise
