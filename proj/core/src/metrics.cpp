// SPDX-License-Identifier: Apache-2.0
#include "moep/metrics.hpp"

#include <fstream>
#include <sstream>

#include "moep/config.hpp"
#include "moep/errors.hpp"

namespace moep {

std::string csv_header() {
  return "step,phase,loss,lr,layer,window,expert,share,hits,survivors,event";
}

void RunMetrics::add_step(long step, const std::string& phase, double loss, double lr) {
  MetricRow r;
  r.step = step;
  r.phase = phase;
  r.loss = loss;
  r.lr = lr;
  rows.push_back(std::move(r));
}

void RunMetrics::add_window_share(long step, const std::string& phase, int layer, int window,
                                  int expert, double share, long hits, int survivors) {
  MetricRow r;
  r.step = step;
  r.phase = phase;
  r.layer = layer;
  r.window = window;
  r.expert = expert;
  r.share = share;
  r.hits = hits;
  r.survivors = survivors;
  r.event = "window";
  rows.push_back(std::move(r));
}

void RunMetrics::add_event(long step, const std::string& phase, int layer, int window,
                           int survivors, const std::string& event) {
  MetricRow r;
  r.step = step;
  r.phase = phase;
  r.layer = layer;
  r.window = window;
  r.survivors = survivors;
  r.event = event;
  rows.push_back(std::move(r));
}

void RunMetrics::add_eval(long step, const std::string& phase, double value,
                          const std::string& what) {
  MetricRow r;
  r.step = step;
  r.phase = phase;
  r.loss = value;  // the value column; `event` names what it is
  r.event = what;
  rows.push_back(std::move(r));
}

namespace {

void put_opt_f(std::ostream& os, double v) {
  if (!std::isnan(v)) os << format_double(v);
}
void put_opt_i(std::ostream& os, long v) {
  if (v >= 0) os << v;
}

}  // namespace

void RunMetrics::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics csv: " + path);
  out << csv_header() << "\n";
  for (const MetricRow& r : rows) {
    put_opt_i(out, r.step);
    out << "," << r.phase << ",";
    put_opt_f(out, r.loss);
    out << ",";
    put_opt_f(out, r.lr);
    out << ",";
    put_opt_i(out, r.layer);
    out << ",";
    put_opt_i(out, r.window);
    out << ",";
    put_opt_i(out, r.expert);
    out << ",";
    put_opt_f(out, r.share);
    out << ",";
    put_opt_i(out, r.hits);
    out << ",";
    put_opt_i(out, r.survivors);
    out << "," << r.event << "\n";
  }
}

RunMetrics RunMetrics::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw IoError("bad metrics csv header in " + path);
  }
  RunMetrics m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    while (cells.size() < 11) cells.emplace_back();
    MetricRow r;
    if (!cells[0].empty()) r.step = std::stol(cells[0]);
    r.phase = cells[1];
    if (!cells[2].empty()) r.loss = std::stod(cells[2]);
    if (!cells[3].empty()) r.lr = std::stod(cells[3]);
    if (!cells[4].empty()) r.layer = std::stoi(cells[4]);
    if (!cells[5].empty()) r.window = std::stoi(cells[5]);
    if (!cells[6].empty()) r.expert = std::stoi(cells[6]);
    if (!cells[7].empty()) r.share = std::stod(cells[7]);
    if (!cells[8].empty()) r.hits = std::stol(cells[8]);
    if (!cells[9].empty()) r.survivors = std::stoi(cells[9]);
    r.event = cells[10];
    m.rows.push_back(std::move(r));
  }
  return m;
}

}  // namespace moep
