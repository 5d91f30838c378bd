#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradnoise/experiment.hpp"
#include "gradnoise/tasks.hpp"

namespace gradnoise::harness {

struct MnistData {
  tasks::Dataset train;
  tasks::Dataset test;
};

/// Loads train-{images-idx3,labels-idx1}-ubyte and t10k-... from `dir`,
/// with or without a .gz suffix.
MnistData load_mnist_dir(const std::filesystem::path& dir);

/// One SGD/Adam training run of the deep MLP on MNIST-shaped data.
RunResult train_mnist(const TrainConfig& config, const tasks::Dataset& train, const tasks::Dataset& test,
                      bool keep_step_log = false);

// ---------------------------------------------------------------------------
// Grids and reports.

struct GridEntry {
  std::string arm;
  RunResult result;
};

struct ArmSummary {
  std::string arm;
  std::size_t runs = 0;
  double best = 0.0;  // max over runs of best test accuracy
  double mean = 0.0;  // mean over runs of best test accuracy
  std::size_t successes = 0;
};

struct GridReport {
  std::string title;
  std::vector<GridEntry> entries;  // sorted by run_id

  /// Recomputed from `entries`, arms in first-appearance order.
  std::vector<ArmSummary> summarize() const;
  std::optional<ArmSummary> arm(const std::string& name) const;
  bool same_outcome(const GridReport& other) const;
};

struct PlannedRun {
  std::string arm;
  TrainConfig config;
};

using RunFn = std::function<RunResult(const TrainConfig&)>;

/// Runs every planned config with up to `workers` threads and sorts the
/// results by run_id. Rethrows the first run error after all workers stop.
GridReport run_grid(std::string title, std::span<const PlannedRun> plan, const RunFn& run, std::size_t workers);

enum class NoiseArms { kOff, kOn, kBoth };
NoiseArms noise_arms_from_name(std::string_view name);

struct MnistExperimentOptions {
  std::size_t seeds = 5;
  std::size_t first_seed = 1;
  std::vector<double> learning_rates = {0.1, 0.01};
  std::size_t train_subset = 10000;
  std::size_t epochs = 20;
  std::size_t batch_size = 100;
  std::size_t hidden_layers = 20;
  std::size_t hidden_width = 50;
  double noise_eta = 0.01;
  double noise_gamma = 0.55;
  double dropout_rate = 0.5;
  bool dropout_arm = true;  // experiment 1 only
  optim::PipelineOrder order = optim::PipelineOrder::kClipThenNoise;
  std::size_t workers = 1;
};

inline constexpr const char* kArmNoNoise = "no_noise";
inline constexpr const char* kArmNoise = "noise";
inline constexpr const char* kArmDropout = "dropout";

/// Human-readable heading, e.g. "Experiment 6: Bad Init (Zero Init) + Gradient Clipping Threshold = 10".
std::string mnist_experiment_title(int experiment_id);

/// Plans (arm, config) pairs: each seed runs at every learning rate in every
/// arm, with seeds paired across arms.
std::vector<PlannedRun> plan_mnist_experiment(int experiment_id, NoiseArms arms, const MnistExperimentOptions& options);

GridReport run_mnist_experiment(int experiment_id, NoiseArms arms, const MnistExperimentOptions& options,
                                const MnistData& data);

struct ProgrammerGrid {
  std::vector<double> learning_rates = {0.003, 0.01, 0.03};
  std::vector<std::size_t> hidden_sizes = {16, 32, 64};
  std::vector<std::optional<double>> clip_thresholds = {1.0, 10.0, 100.0, std::nullopt};
  TrainConfig base;  // task, epochs, table and optimizer settings

  std::size_t size() const { return learning_rates.size() * hidden_sizes.size() * clip_thresholds.size(); }

  /// Keys learning_rates / hidden_sizes / clip_thresholds take comma-separated
  /// lists ("none" disables clipping); every other key sets the base config.
  static ProgrammerGrid from_text(std::istream& in);
  static ProgrammerGrid defaults();
};

inline constexpr double kProgrammerNoiseEta = 1.0;

/// Cartesian product grid x seeds x arms. Arms: "noise" (annealed eta = 1),
/// "no_noise", "dropout" (rate 0.5, no noise).
std::vector<PlannedRun> plan_programmer_grid(const ProgrammerGrid& grid, std::size_t seeds,
                                             std::span<const std::string> arms);

GridReport run_programmer_grid(const ProgrammerGrid& grid, std::size_t seeds, std::span<const std::string> arms,
                               std::size_t workers);

struct ReportPaths {
  std::filesystem::path runs_csv;
  std::filesystem::path summary_txt;
  std::filesystem::path curves_svg;
  std::filesystem::path configs_txt;
  std::filesystem::path diagnostics_csv;  // written only when step logs are present
};

ReportPaths report_paths(const std::filesystem::path& dir);

/// Writes per-epoch CSV, the summary table, an SVG of test accuracy per run
/// and every run's resolved config. Throws on an empty report.
void emit_report(const GridReport& report, const ReportPaths& paths);

std::string runs_csv(const GridReport& report);
std::string summary_table(const GridReport& report);
std::string curves_svg(const GridReport& report);

/// CSV "t,sigma" for t in [0, t_max).
std::string schedule_dump(double eta, double gamma, std::size_t t_max);

}  // namespace gradnoise::harness
