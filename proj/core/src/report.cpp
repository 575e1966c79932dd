// SPDX-License-Identifier: Apache-2.0
#include "moep/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "moep/config.hpp"
#include "moep/errors.hpp"
#include "moep/metrics.hpp"

namespace moep {

namespace fs = std::filesystem;

namespace {

std::string setting_of(const std::string& run_dir) {
  std::string name = fs::path(run_dir).filename().string();
  if (name.empty()) name = fs::path(run_dir).parent_path().filename().string();
  const auto pos = name.rfind("-seed");
  if (pos != std::string::npos) return name.substr(0, pos);
  return name;
}

struct RunData {
  std::string dir;
  std::string setting;
  double accuracy = NAN;
  double beta = NAN;
  std::size_t finetune_steps = 0;
  RunMetrics metrics;
};

void svg_bar_chart(const std::string& path, const std::string& title,
                   const std::vector<std::string>& labels, const std::vector<double>& values) {
  const double w = 640, h = 400, margin = 50;
  double vmax = 1e-9;
  for (double v : values) vmax = std::max(vmax, v);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<text x='10' y='20' font-size='14'>" << title << "</text>\n";
  const double bw = (w - 2 * margin) / std::max<std::size_t>(1, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double bh = (h - 2 * margin) * values[i] / vmax;
    const double x = margin + bw * static_cast<double>(i);
    out << "<rect x='" << x + 2 << "' y='" << h - margin - bh << "' width='" << bw - 4
        << "' height='" << bh << "' fill='steelblue'/>\n";
    out << "<text x='" << x + bw / 2 << "' y='" << h - margin + 15
        << "' font-size='10' text-anchor='middle'>" << labels[i] << "</text>\n";
  }
  out << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
  out << "</svg>\n";
}

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::map<std::string, std::vector<std::pair<double, double>>>& series) {
  const double w = 640, h = 400, margin = 50;
  double xmax = 1e-9, ymax = 1e-9;
  for (const auto& [name, pts] : series)
    for (const auto& [x, y] : pts) {
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  const char* colors[] = {"steelblue", "firebrick", "seagreen", "goldenrod",
                          "purple",    "teal",      "orange",   "slategray"};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<text x='10' y='20' font-size='14'>" << title << "</text>\n";
  std::size_t ci = 0;
  for (const auto& [name, pts] : series) {
    out << "<polyline fill='none' stroke='" << colors[ci % 8] << "' points='";
    for (const auto& [x, y] : pts) {
      out << margin + (w - 2 * margin) * x / xmax << "," << h - margin - (h - 2 * margin) * y / ymax
          << " ";
    }
    out << "'/>\n";
    out << "<text x='" << w - margin + 2 << "' y='" << 40 + 14 * static_cast<double>(ci)
        << "' font-size='10' fill='" << colors[ci % 8] << "'>" << name << "</text>\n";
    ++ci;
  }
  out << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
  out << "</svg>\n";
}

}  // namespace

ReportResult report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<RunData> runs;
  ReportResult result;
  for (const std::string& dir : run_dirs) {
    try {
      RunData run;
      run.dir = dir;
      run.setting = setting_of(dir);
      run.metrics = RunMetrics::read_csv(dir + "/metrics.csv");
      const RunConfig cfg = RunConfig::load_file(dir + "/config.txt");
      run.beta = cfg.prune.beta;
      run.finetune_steps = cfg.finetune_steps;
      for (const MetricRow& r : run.metrics.rows) {
        if (r.event == "final_accuracy") run.accuracy = r.loss;
      }
      runs.push_back(std::move(run));
      result.runs_read += 1;
    } catch (const std::exception& e) {
      std::cerr << "report: skipping " << dir << ": " << e.what() << "\n";
      result.runs_skipped += 1;
    }
  }
  if (runs.empty()) throw IoError("report: no readable run directories");

  // (a) settings x accuracy, mean +/- std over seeds.
  std::map<std::string, std::vector<double>> by_setting;
  for (const RunData& r : runs)
    if (!std::isnan(r.accuracy)) by_setting[r.setting].push_back(r.accuracy);
  {
    std::ofstream out(out_dir + "/summary.csv");
    out << "setting,mean_accuracy,std_accuracy,num_runs\n";
    for (const auto& [setting, accs] : by_setting) {
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double sd = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size())) : 0.0;
      out << setting << "," << format_double(mean) << "," << format_double(sd) << ","
          << accs.size() << "\n";
      result.summaries.push_back({setting, mean, sd, accs.size()});
    }
  }

  // (b) per-window expert-share series per layer.
  {
    std::ofstream out(out_dir + "/shares.csv");
    out << "run,layer,window,step,expert,share,survivors\n";
    for (const RunData& r : runs) {
      const std::string name = fs::path(r.dir).filename().string();
      for (const MetricRow& row : r.metrics.rows) {
        if (row.event != "window") continue;
        out << name << "," << row.layer << "," << row.window << "," << row.step << ","
            << row.expert << "," << format_double(row.share) << "," << row.survivors << "\n";
      }
    }
  }

  // (c) survivor count at the schedule midpoint vs beta.
  std::map<std::string, double> khalf_by_beta;
  std::map<std::string, std::size_t> khalf_counts;
  {
    std::ofstream out(out_dir + "/khalf.csv");
    out << "run,beta,layer,k_half\n";
    for (const RunData& r : runs) {
      const long half = static_cast<long>(r.finetune_steps / 2);
      std::map<int, int> per_layer;
      for (const MetricRow& row : r.metrics.rows) {
        if (row.event == "window" && row.step == half) per_layer[row.layer] += 1;
      }
      const std::string name = fs::path(r.dir).filename().string();
      for (const auto& [layer, k] : per_layer) {
        out << name << "," << format_double(r.beta) << "," << layer << "," << k << "\n";
        const std::string key = format_double(r.beta);
        khalf_by_beta[key] += k;
        khalf_counts[key] += 1;
      }
    }
  }

  // (d) final-window share histogram per layer.
  {
    std::ofstream out(out_dir + "/histogram.csv");
    out << "run,layer,expert,share\n";
    for (const RunData& r : runs) {
      std::map<int, int> last_window;
      for (const MetricRow& row : r.metrics.rows)
        if (row.event == "window") last_window[row.layer] = std::max(last_window[row.layer], row.window);
      const std::string name = fs::path(r.dir).filename().string();
      for (const MetricRow& row : r.metrics.rows) {
        if (row.event == "window" && row.window == last_window[row.layer]) {
          out << name << "," << row.layer << "," << row.expert << "," << format_double(row.share)
              << "\n";
        }
      }
    }
  }

  // Plots.
  {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& [beta, total] : khalf_by_beta) {
      labels.push_back(beta);
      values.push_back(total / static_cast<double>(khalf_counts[beta]));
    }
    if (!values.empty()) {
      svg_bar_chart(out_dir + "/khalf.svg", "survivors at half schedule vs beta", labels, values);
    }
  }
  {
    // Survivor-count trajectory per run (layer 0).
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const RunData& r : runs) {
      std::map<int, int> survivors_at_window;
      for (const MetricRow& row : r.metrics.rows)
        if (row.event == "window" && row.layer == 0) survivors_at_window[row.window] += 1;
      auto& pts = series[fs::path(r.dir).filename().string()];
      for (const auto& [w, k] : survivors_at_window)
        pts.emplace_back(static_cast<double>(w), static_cast<double>(k));
    }
    if (!series.empty()) {
      svg_line_chart(out_dir + "/survivors.svg", "survivor count per window (layer 0)", series);
    }
  }
  {
    // Final-window shares of the first run, layer 0.
    const RunData& r = runs.front();
    int lw = -1;
    for (const MetricRow& row : r.metrics.rows)
      if (row.event == "window" && row.layer == 0) lw = std::max(lw, row.window);
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const MetricRow& row : r.metrics.rows) {
      if (row.event == "window" && row.layer == 0 && row.window == lw) {
        labels.push_back("e" + std::to_string(row.expert));
        values.push_back(row.share);
      }
    }
    if (!values.empty()) {
      svg_bar_chart(out_dir + "/histogram.svg", "final-window expert shares (layer 0)", labels,
                    values);
    }
  }
  return result;
}

}  // namespace moep
