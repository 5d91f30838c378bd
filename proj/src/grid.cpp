#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "gradnoise/harness.hpp"
#include "gradnoise/programmer.hpp"

namespace gradnoise::harness {

std::vector<ArmSummary> GridReport::summarize() const {
  std::vector<ArmSummary> arms;
  for (const auto& e : entries) {
    auto it = std::find_if(arms.begin(), arms.end(), [&](const ArmSummary& a) { return a.arm == e.arm; });
    if (it == arms.end()) {
      arms.push_back({e.arm});
      it = std::prev(arms.end());
    }
    ++it->runs;
    it->best = std::max(it->best, e.result.best_test_accuracy);
    it->mean += e.result.best_test_accuracy;
    it->successes += e.result.success;
  }
  for (auto& a : arms) a.mean /= static_cast<double>(a.runs);
  return arms;
}

std::optional<ArmSummary> GridReport::arm(const std::string& name) const {
  for (auto& a : summarize())
    if (a.arm == name) return a;
  return std::nullopt;
}

bool GridReport::same_outcome(const GridReport& other) const {
  if (title != other.title || entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].arm != other.entries[i].arm || !entries[i].result.same_outcome(other.entries[i].result)) return false;
  }
  return true;
}

GridReport run_grid(std::string title, std::span<const PlannedRun> plan, const RunFn& run, std::size_t workers) {
  std::vector<GridEntry> entries(plan.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      try {
        entries[i] = {plan[i].arm, run(plan[i].config)};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = plan.size();
      }
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(plan.size(), 1));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::stable_sort(entries.begin(), entries.end(),
                   [](const GridEntry& a, const GridEntry& b) { return a.result.config.run_id < b.result.config.run_id; });
  return {std::move(title), std::move(entries)};
}

NoiseArms noise_arms_from_name(std::string_view name) {
  if (name == "off") return NoiseArms::kOff;
  if (name == "on") return NoiseArms::kOn;
  if (name == "both") return NoiseArms::kBoth;
  throw std::invalid_argument("--noise must be on, off or both, got '" + std::string(name) + "'");
}

namespace {

struct MnistSetting {
  init::InitScheme init;
  std::optional<double> clip;
  const char* title;
};

MnistSetting mnist_setting(int id) {
  switch (id) {
    case 1: return {init::InitScheme::simple(), std::nullopt, "Experiment 1: Simple Init, No Gradient Clipping"};
    case 2: return {init::InitScheme::simple(), 100.0, "Experiment 2: Simple Init, Gradient Clipping Threshold = 100"};
    case 3: return {init::InitScheme::simple(), 10.0, "Experiment 3: Simple Init, Gradient Clipping Threshold = 10"};
    case 4: return {init::InitScheme::sussillo(), 10.0, "Experiment 4: Good Init (Sussillo) + Gradient Clipping Threshold = 10"};
    case 5: return {init::InitScheme::he(), 10.0, "Experiment 5: Good Init (He) + Gradient Clipping Threshold = 10"};
    case 6: return {init::InitScheme::zero(), 10.0, "Experiment 6: Bad Init (Zero Init) + Gradient Clipping Threshold = 10"};
    default: throw std::invalid_argument("unknown MNIST experiment id " + std::to_string(id) + " (expected 1..6)");
  }
}

std::string lr_tag(double lr) {
  std::ostringstream os;
  os << lr;
  return os.str();
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

}  // namespace

std::string mnist_experiment_title(int experiment_id) { return mnist_setting(experiment_id).title; }

std::vector<PlannedRun> plan_mnist_experiment(int experiment_id, NoiseArms arms, const MnistExperimentOptions& options) {
  const auto setting = mnist_setting(experiment_id);
  std::vector<std::string> arm_names;
  if (arms != NoiseArms::kOn) arm_names.push_back(kArmNoNoise);
  if (arms != NoiseArms::kOff) arm_names.push_back(kArmNoise);
  if (experiment_id == 1 && options.dropout_arm && arms != NoiseArms::kOn) arm_names.push_back(kArmDropout);

  std::vector<PlannedRun> plan;
  for (const auto& arm : arm_names) {
    for (double lr : options.learning_rates) {
      for (std::size_t s = 0; s < options.seeds; ++s) {
        TrainConfig c;
        c.task = TaskKind::kMnist;
        c.hidden_layers = options.hidden_layers;
        c.hidden_width = options.hidden_width;
        c.init = setting.init;
        c.optimizer = optim::OptimizerKind::kSgd;
        c.learning_rate = lr;
        c.epochs = options.epochs;
        c.batch_size = options.batch_size;
        c.clip = setting.clip ? optim::ClipConfig::at(*setting.clip) : optim::ClipConfig::none();
        c.noise = arm == kArmNoise ? optim::NoiseSchedule::annealed(options.noise_eta, options.noise_gamma)
                                   : optim::NoiseSchedule::off();
        c.order = options.order;
        c.dropout_rate = arm == kArmDropout ? options.dropout_rate : 0.0;
        c.seed = options.first_seed + s;
        c.train_subset = options.train_subset;
        c.run_id = "exp" + std::to_string(experiment_id) + "_" + arm + "_lr" + lr_tag(lr) + "_s" + zero_pad(c.seed, 3);
        plan.push_back({arm, std::move(c)});
      }
    }
  }
  return plan;
}

GridReport run_mnist_experiment(int experiment_id, NoiseArms arms, const MnistExperimentOptions& options,
                                const MnistData& data) {
  const auto plan = plan_mnist_experiment(experiment_id, arms, options);
  return run_grid(
      mnist_experiment_title(experiment_id), plan,
      [&](const TrainConfig& c) { return train_mnist(c, data.train, data.test); }, options.workers);
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw std::invalid_argument("empty item in list '" + s + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

}  // namespace

ProgrammerGrid ProgrammerGrid::defaults() {
  ProgrammerGrid g;
  g.base.task = TaskKind::kProgrammer;
  g.base.optimizer = optim::OptimizerKind::kAdam;
  g.base.epochs = 120;
  g.base.batch_size = 20;
  g.base.table_train = 1000;
  g.base.table_test = 1000;
  g.base.table_min_depth = 1;
  g.base.table_max_depth = 2;
  g.base.train_subset.reset();
  return g;
}

ProgrammerGrid ProgrammerGrid::from_text(std::istream& in) {
  auto kv = parse_key_values(in);
  ProgrammerGrid g = defaults();
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("learning_rates")) {
    g.learning_rates.clear();
    for (const auto& item : split_list(*v)) g.learning_rates.push_back(std::stod(item));
  }
  if (auto v = take("hidden_sizes")) {
    g.hidden_sizes.clear();
    for (const auto& item : split_list(*v)) g.hidden_sizes.push_back(std::stoul(item));
  }
  if (auto v = take("clip_thresholds")) {
    g.clip_thresholds.clear();
    for (const auto& item : split_list(*v)) {
      g.clip_thresholds.push_back(item == "none" ? std::nullopt : std::optional<double>(std::stod(item)));
    }
  }
  auto base_map = g.base.to_map();
  for (auto& [k, v] : kv) base_map[k] = v;
  g.base = TrainConfig::from_map(base_map);
  g.base.task = TaskKind::kProgrammer;
  return g;
}

std::vector<PlannedRun> plan_programmer_grid(const ProgrammerGrid& grid, std::size_t seeds,
                                             std::span<const std::string> arms) {
  std::vector<PlannedRun> plan;
  for (const auto& arm : arms) {
    if (arm != kArmNoise && arm != kArmNoNoise && arm != kArmDropout) {
      throw std::invalid_argument("unknown arm '" + arm + "' (expected noise, no_noise or dropout)");
    }
    std::size_t cfg_index = 0;
    for (double lr : grid.learning_rates) {
      for (std::size_t hidden : grid.hidden_sizes) {
        for (const auto& clip : grid.clip_thresholds) {
          for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig c = grid.base;
            c.task = TaskKind::kProgrammer;
            c.learning_rate = lr;
            c.selector_hidden = hidden;
            c.clip = clip ? optim::ClipConfig::at(*clip) : optim::ClipConfig::none();
            c.noise = arm == kArmNoise ? optim::NoiseSchedule::annealed(kProgrammerNoiseEta, grid.base.noise.gamma)
                                       : optim::NoiseSchedule::off();
            c.dropout_rate = arm == kArmDropout ? 0.5 : 0.0;
            c.seed = grid.base.seed + s;
            c.run_id = "np_" + arm + "_c" + zero_pad(cfg_index, 3) + "_s" + zero_pad(c.seed, 3);
            plan.push_back({arm, std::move(c)});
          }
          ++cfg_index;
        }
      }
    }
  }
  return plan;
}

GridReport run_programmer_grid(const ProgrammerGrid& grid, std::size_t seeds, std::span<const std::string> arms,
                               std::size_t workers) {
  const auto plan = plan_programmer_grid(grid, seeds, arms);
  return run_grid(
      "Program induction restarts: " + std::to_string(grid.size()) + " configs x " + std::to_string(seeds) + " seeds",
      plan, [](const TrainConfig& c) { return programmer::train_programmer(c); }, workers);
}

}  // namespace gradnoise::harness
