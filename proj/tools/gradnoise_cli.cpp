// Command-line front end: MNIST experiments, program-induction grids,
// noise schedule tables, gradient checks and single configured runs.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gradnoise/harness.hpp"
#include "gradnoise/programmer.hpp"
#include "support/precise_oracle.hpp"
#include "support/random_models.hpp"

using namespace gradnoise;

namespace {

void finish(const harness::GridReport& report, const std::filesystem::path& out) {
  harness::emit_report(report, harness::report_paths(out));
  std::cout << harness::summary_table(report);
  std::cout << "\nwrote " << out.string() << "/{runs.csv,summary.txt,curves.svg,configs.txt}\n";
}

std::vector<std::string> split_arms(const std::string& s) {
  std::vector<std::string> arms;
  std::stringstream ss(s);
  for (std::string a; std::getline(ss, a, ',');)
    if (!a.empty()) arms.push_back(a);
  return arms;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient noise experiments for deep networks"};
  app.require_subcommand(1);

  // mnist
  auto* mnist = app.add_subcommand("mnist", "Run one of the six deep-MLP MNIST experiments");
  int experiment = 0;
  std::string noise = "both";
  harness::MnistExperimentOptions mopt;
  std::string data_dir = GRADNOISE_DEFAULT_MNIST_DIR;
  std::string mnist_out;
  std::string order = "clip_then_noise";
  bool no_dropout_arm = false;
  mnist->add_option("--experiment", experiment, "Experiment id")->required()->check(CLI::Range(1, 6));
  mnist->add_option("--noise", noise, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));
  mnist->add_option("--seeds", mopt.seeds, "Seeds per learning rate and arm");
  mnist->add_option("--first-seed", mopt.first_seed, "First seed value");
  mnist->add_option("--subset", mopt.train_subset, "Training subset size");
  mnist->add_option("--epochs", mopt.epochs, "Epochs per run");
  mnist->add_option("--batch", mopt.batch_size, "Minibatch size");
  mnist->add_option("--lr", mopt.learning_rates, "Learning rates")->delimiter(',');
  mnist->add_option("--eta", mopt.noise_eta, "Noise eta");
  mnist->add_option("--dropout", mopt.dropout_rate, "Dropout rate of the dropout arm");
  mnist->add_flag("--no-dropout-arm", no_dropout_arm, "Skip the dropout arm of experiment 1");
  mnist->add_option("--order", order, "clip_then_noise or noise_then_clip");
  mnist->add_option("--data-dir", data_dir, "Directory with the IDX files")->capture_default_str();
  mnist->add_option("--workers", mopt.workers, "Parallel runs");
  mnist->add_option("--out", mnist_out, "Output directory (default runs/mnist_exp<id>)");

  // programmer
  auto* prog = app.add_subcommand("programmer", "Run the program-induction restart grid");
  std::string grid_file;
  std::size_t prog_seeds = 3;
  std::string arms = "noise,no_noise";
  std::size_t prog_workers = 1;
  std::string prog_out = "runs/programmer";
  prog->add_option("--grid", grid_file, "Grid file (key = value lines)")->check(CLI::ExistingFile);
  prog->add_option("--seeds", prog_seeds, "Seeds per config and arm");
  prog->add_option("--arms", arms, "Comma-separated arms: noise, no_noise, dropout");
  prog->add_option("--workers", prog_workers, "Parallel runs");
  prog->add_option("--out", prog_out, "Output directory");

  // schedule
  auto* sched = app.add_subcommand("schedule", "Print the annealed noise stddev per step as CSV");
  double eta = 0.01, gamma = 0.55;
  std::size_t tmax = 100;
  sched->add_option("--eta", eta, "Variance scale")->required();
  sched->add_option("--gamma", gamma, "Decay exponent");
  sched->add_option("--tmax", tmax, "Number of steps")->required();

  // gradcheck
  auto* gcheck = app.add_subcommand("gradcheck", "High-precision finite-difference checks on random small models");
  std::uint64_t gc_seed = 1;
  std::size_t gc_mlps = 50, gc_selectors = 20;
  gcheck->add_option("--seed", gc_seed);
  gcheck->add_option("--mlps", gc_mlps);
  gcheck->add_option("--selectors", gc_selectors);

  // run
  auto* run = app.add_subcommand("run", "Train a single configuration file");
  std::string config_file;
  std::string run_out;
  std::string single_data_dir = GRADNOISE_DEFAULT_MNIST_DIR;
  run->add_option("config", config_file, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  run->add_option("--data-dir", single_data_dir, "Directory with the IDX files (mnist task)");
  run->add_option("--out", run_out, "Output directory (default runs/<run_id>)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mnist) {
      mopt.order = optim::pipeline_order_from_name(order);
      mopt.dropout_arm = !no_dropout_arm;
      const auto data = harness::load_mnist_dir(data_dir);
      std::cerr << "loaded " << data.train.size() << " train / " << data.test.size() << " test examples\n";
      const auto report = harness::run_mnist_experiment(experiment, harness::noise_arms_from_name(noise), mopt, data);
      finish(report, mnist_out.empty() ? "runs/mnist_exp" + std::to_string(experiment) : mnist_out);
    } else if (*prog) {
      auto grid = harness::ProgrammerGrid::defaults();
      if (!grid_file.empty()) {
        std::ifstream in(grid_file);
        grid = harness::ProgrammerGrid::from_text(in);
      }
      const auto arm_list = split_arms(arms);
      const auto report = harness::run_programmer_grid(grid, prog_seeds, arm_list, prog_workers);
      finish(report, prog_out);
    } else if (*sched) {
      std::cout << harness::schedule_dump(eta, gamma, tmax);
    } else if (*gcheck) {
      // Central differences in 50-digit arithmetic. Selector gradients go
      // down to ~1e-12 through saturated tanh units, below what float64
      // differences can resolve to a relative 1e-6.
      Rng rng(gc_seed);
      double mlp_worst = 0.0, selector_worst = 0.0;
      for (std::size_t i = 0; i < gc_mlps; ++i) {
        const auto c = oracle::random_mlp_case(rng);
        mlp_worst = std::max(mlp_worst, oracle::check_mlp(c.model, c.batch, c.labels));
      }
      for (std::size_t i = 0; i < gc_selectors; ++i) {
        const auto c = oracle::random_selector_case(rng);
        selector_worst = std::max(selector_worst, oracle::check_selector(c.model, c.questions));
      }
      std::printf("mlp models: %zu, worst relative error %.3e\n", gc_mlps, mlp_worst);
      std::printf("selector models: %zu, worst relative error %.3e\n", gc_selectors, selector_worst);
      return mlp_worst < 1e-6 && selector_worst < 1e-6 ? 0 : 1;
    } else if (*run) {
      std::ifstream in(config_file);
      const auto config = TrainConfig::from_text(in);
      RunResult result;
      if (config.task == TaskKind::kMnist) {
        const auto data = harness::load_mnist_dir(single_data_dir);
        result = harness::train_mnist(config, data.train, data.test, true);
      } else {
        result = programmer::train_programmer(config, true);
      }
      const std::string arm = config.noise.mode == optim::NoiseMode::kOff ? harness::kArmNoNoise : harness::kArmNoise;
      harness::GridReport report{config.run_id, {{arm, result}}};
      finish(report, run_out.empty() ? "runs/" + config.run_id : run_out);
      if (result.diverged) {
        std::cerr << "run diverged\n";
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
