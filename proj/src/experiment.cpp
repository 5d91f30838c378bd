#include "gradnoise/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace gradnoise {

std::string task_name(TaskKind task) { return task == TaskKind::kMnist ? "mnist" : "programmer"; }

TaskKind task_from_name(std::string_view name) {
  if (name == "mnist") return TaskKind::kMnist;
  if (name == "programmer") return TaskKind::kProgrammer;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  const std::string* find(const std::string& key) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }
  void str(const std::string& key, std::string& out) const {
    if (auto v = find(key)) out = *v;
  }
  void real(const std::string& key, double& out) const {
    if (auto v = find(key)) out = parse_double(key, *v);
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) const {
    if (auto v = find(key)) out = static_cast<Int>(parse_u64(key, *v));
  }

  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + key + "': not a number: '" + v + "'");
    }
  }
  static std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw std::invalid_argument("config key '" + key + "': not a non-negative integer: '" + v + "'");
    }
    return out;
  }

 private:
  const std::map<std::string, std::string>& kv_;
};

}  // namespace

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["task"] = task_name(task);
  kv["run_id"] = run_id;
  kv["hidden_layers"] = std::to_string(hidden_layers);
  kv["hidden_width"] = std::to_string(hidden_width);
  kv["init"] = init::scheme_name(init);
  kv["simple_stddev"] = fmt_double(init.simple_stddev);
  kv["selector_hidden"] = std::to_string(selector_hidden);
  kv["selector_steps"] = std::to_string(selector_steps);
  kv["selector_init_scale"] = fmt_double(selector_init_scale);
  kv["table_rows"] = std::to_string(table_rows);
  kv["table_min_depth"] = std::to_string(table_min_depth);
  kv["table_max_depth"] = std::to_string(table_max_depth);
  kv["table_train"] = std::to_string(table_train);
  kv["table_test"] = std::to_string(table_test);
  kv["table_seed"] = std::to_string(table_seed);
  kv["optimizer"] = optim::optimizer_name(optimizer);
  kv["learning_rate"] = fmt_double(learning_rate);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["clip"] = clip.threshold ? fmt_double(*clip.threshold) : "none";
  kv["noise_mode"] = optim::noise_mode_name(noise.mode);
  kv["noise_eta"] = fmt_double(noise.eta);
  kv["noise_gamma"] = fmt_double(noise.gamma);
  kv["noise_fixed_stddev"] = fmt_double(noise.fixed_stddev);
  kv["pipeline_order"] = optim::pipeline_order_name(order);
  kv["dropout_rate"] = fmt_double(dropout_rate);
  kv["seed"] = std::to_string(seed);
  kv["train_subset"] = train_subset ? std::to_string(*train_subset) : "none";
  return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  static const TrainConfig defaults;
  const auto known = defaults.to_map();
  for (const auto& [key, value] : kv) {
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }

  TrainConfig c;
  Reader r(kv);
  if (auto v = r.find("task")) c.task = task_from_name(*v);
  r.str("run_id", c.run_id);
  r.integer("hidden_layers", c.hidden_layers);
  r.integer("hidden_width", c.hidden_width);
  if (auto v = r.find("init")) c.init = init::scheme_from_name(*v);
  r.real("simple_stddev", c.init.simple_stddev);
  r.integer("selector_hidden", c.selector_hidden);
  r.integer("selector_steps", c.selector_steps);
  r.real("selector_init_scale", c.selector_init_scale);
  r.integer("table_rows", c.table_rows);
  r.integer("table_min_depth", c.table_min_depth);
  r.integer("table_max_depth", c.table_max_depth);
  r.integer("table_train", c.table_train);
  r.integer("table_test", c.table_test);
  r.integer("table_seed", c.table_seed);
  if (auto v = r.find("optimizer")) c.optimizer = optim::optimizer_from_name(*v);
  r.real("learning_rate", c.learning_rate);
  r.integer("epochs", c.epochs);
  r.integer("batch_size", c.batch_size);
  if (auto v = r.find("clip"); v && *v != "none") c.clip = optim::ClipConfig::at(Reader::parse_double("clip", *v));
  if (auto v = r.find("noise_mode")) c.noise.mode = optim::noise_mode_from_name(*v);
  r.real("noise_eta", c.noise.eta);
  r.real("noise_gamma", c.noise.gamma);
  r.real("noise_fixed_stddev", c.noise.fixed_stddev);
  if (c.noise.mode == optim::NoiseMode::kAnnealed) c.noise = optim::NoiseSchedule::annealed(c.noise.eta, c.noise.gamma);
  if (c.noise.mode == optim::NoiseMode::kFixed) {
    const double gamma = c.noise.gamma;
    c.noise = optim::NoiseSchedule::fixed(c.noise.fixed_stddev);
    c.noise.gamma = gamma;
  }
  if (auto v = r.find("pipeline_order")) c.order = optim::pipeline_order_from_name(*v);
  r.real("dropout_rate", c.dropout_rate);
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  r.integer("seed", c.seed);
  if (auto v = r.find("train_subset"); v && *v != "none") c.train_subset = Reader::parse_u64("train_subset", *v);
  return c;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : to_map()) os << k << " = " << v << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(std::istream& in) { return from_map(parse_key_values(in)); }

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(content).substr(0, eq));
    std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) throw std::invalid_argument("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    kv.emplace(std::move(key), std::move(value));
  }
  return kv;
}

namespace {

// NaN-aware bitwise equality for metrics.
bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

bool RunResult::same_outcome(const RunResult& other) const {
  if (!(config == other.config) || epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || !same_bits(a.train_loss, b.train_loss) || !same_bits(a.train_accuracy, b.train_accuracy) ||
        !same_bits(a.test_accuracy, b.test_accuracy)) {
      return false;
    }
  }
  return same_bits(best_test_accuracy, other.best_test_accuracy) &&
         same_bits(final_test_accuracy, other.final_test_accuracy) && success == other.success &&
         diverged == other.diverged && diagnostics == other.diagnostics && step_log == other.step_log;
}

}  // namespace gradnoise
