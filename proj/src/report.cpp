#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gradnoise/harness.hpp"

namespace gradnoise::harness {
namespace {

std::string num(double v, const char* fmt = "%.10g") {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string percent(double v) { return num(100.0 * v, "%.1f") + "%"; }

std::string arm_label(const std::string& arm) {
  if (arm == kArmNoNoise) return "No Noise";
  if (arm == kArmNoise) return "With Noise";
  if (arm == kArmDropout) return "No Noise + Dropout";
  return arm;
}

const char* arm_color(std::size_t index) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return kColors[index % std::size(kColors)];
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string runs_csv(const GridReport& report) {
  std::ostringstream os;
  os << "run_id,epoch,train_loss,train_acc,test_acc\n";
  for (const auto& e : report.entries) {
    for (const auto& m : e.result.epochs) {
      os << e.result.config.run_id << ',' << m.epoch << ',' << num(m.train_loss) << ',' << num(m.train_accuracy) << ','
         << num(m.test_accuracy) << '\n';
    }
  }
  return os.str();
}

std::string summary_table(const GridReport& report) {
  const auto arms = report.summarize();
  std::size_t width = std::string("Setting").size();
  for (const auto& a : arms) width = std::max(width, arm_label(a.arm).size());

  std::ostringstream os;
  os << report.title << '\n';
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  os << pad("Setting") << " | Best Test Accuracy | Average Test Accuracy | Successes | Runs\n";
  os << std::string(width, '-') << "-+--------------------+-----------------------+-----------+-----\n";
  for (const auto& a : arms) {
    char line[160];
    std::snprintf(line, sizeof line, " | %18s | %21s | %9zu | %zu\n", percent(a.best).c_str(), percent(a.mean).c_str(),
                  a.successes, a.runs);
    os << pad(arm_label(a.arm)) << line;
  }
  if (!report.entries.empty()) {
    const auto& c = report.entries.front().result.config;
    os << "\nepochs=" << c.epochs << " batch_size=" << c.batch_size
       << " train_subset=" << (c.train_subset ? std::to_string(*c.train_subset) : "all")
       << " pipeline_order=" << optim::pipeline_order_name(c.order) << '\n';
  }
  return os.str();
}

std::string curves_svg(const GridReport& report) {
  constexpr double kWidth = 720, kHeight = 440, kLeft = 60, kRight = 170, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  std::size_t max_epoch = 1;
  for (const auto& e : report.entries)
    for (const auto& m : e.result.epochs) max_epoch = std::max(max_epoch, m.epoch);

  std::map<std::string, std::size_t> arm_index;
  for (const auto& a : report.summarize()) arm_index.emplace(a.arm, arm_index.size());

  auto x_of = [&](double epoch) { return kLeft + plot_w * (max_epoch == 1 ? 0.5 : (epoch - 1) / double(max_epoch - 1)); };
  auto y_of = [&](double acc) { return kTop + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
     << xml_escape(report.title) << "</text>\n";
  os << "<g stroke=\"#999\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
     << kTop + plot_h << "\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  os << "</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double y = y_of(tick / 10.0);
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << tick * 10 << "%</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">epoch (1.."
     << max_epoch << ")</text>\n";
  os << "<text x=\"14\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 14 " << kTop + plot_h / 2
     << ")\" text-anchor=\"middle\">test accuracy</text>\n";
  os << "</g>\n";

  for (const auto& e : report.entries) {
    os << "<polyline fill=\"none\" stroke-opacity=\"0.6\" stroke-width=\"1.2\" stroke=\"" << arm_color(arm_index[e.arm])
       << "\" points=\"";
    bool first = true;
    for (const auto& m : e.result.epochs) {
      if (!first) os << ' ';
      first = false;
      os << num(x_of(static_cast<double>(m.epoch)), "%.2f") << ',' << num(y_of(m.test_accuracy), "%.2f");
    }
    os << "\"><title>" << xml_escape(e.result.config.run_id) << "</title></polyline>\n";
  }

  os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  double legend_y = kTop + 10;
  for (const auto& [arm, idx] : arm_index) {
    os << "<rect x=\"" << kLeft + plot_w + 16 << "\" y=\"" << legend_y - 9 << "\" width=\"12\" height=\"12\" fill=\""
       << arm_color(idx) << "\"/>\n";
    os << "<text x=\"" << kLeft + plot_w + 34 << "\" y=\"" << legend_y + 1 << "\">" << xml_escape(arm_label(arm))
       << "</text>\n";
    legend_y += 20;
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

ReportPaths report_paths(const std::filesystem::path& dir) {
  return {dir / "runs.csv", dir / "summary.txt", dir / "curves.svg", dir / "configs.txt", dir / "diagnostics.csv"};
}

void emit_report(const GridReport& report, const ReportPaths& paths) {
  if (report.entries.empty()) throw std::invalid_argument("emit_report: report has no runs");
  write_file(paths.runs_csv, runs_csv(report));
  write_file(paths.summary_txt, summary_table(report));
  write_file(paths.curves_svg, curves_svg(report));

  std::ostringstream configs;
  for (const auto& e : report.entries) {
    configs << "[" << e.result.config.run_id << "]\n" << e.result.config.to_text();
    configs << "# arm = " << e.arm << ", best = " << num(e.result.best_test_accuracy)
            << ", final = " << num(e.result.final_test_accuracy) << ", success = " << (e.result.success ? 1 : 0)
            << ", diverged = " << (e.result.diverged ? 1 : 0) << ", seconds = " << num(e.result.wall_seconds, "%.2f")
            << "\n\n";
  }
  write_file(paths.configs_txt, configs.str());

  const bool any_log = std::any_of(report.entries.begin(), report.entries.end(),
                                   [](const GridEntry& e) { return !e.result.step_log.empty(); });
  if (any_log) {
    std::ostringstream diag;
    diag << "run_id,step,pre_norm,post_norm,sigma\n";
    for (const auto& e : report.entries) {
      for (const auto& d : e.result.step_log) {
        diag << e.result.config.run_id << ',' << d.step << ',' << num(d.pre_norm, "%.17g") << ','
             << num(d.post_norm, "%.17g") << ',' << num(d.sigma, "%.17g") << '\n';
      }
    }
    write_file(paths.diagnostics_csv, diag.str());
  }
}

std::string schedule_dump(double eta, double gamma, std::size_t t_max) {
  if (t_max < 1) throw std::invalid_argument("schedule_dump: t_max must be at least 1");
  const auto schedule = optim::NoiseSchedule::annealed(eta, gamma);
  std::ostringstream os;
  os << "t,sigma\n";
  for (std::size_t t = 0; t < t_max; ++t) os << t << ',' << num(optim::noise_stddev(schedule, t), "%.17g") << '\n';
  return os.str();
}

}  // namespace gradnoise::harness
