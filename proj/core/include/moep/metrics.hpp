// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace moep {

/// One metrics CSV row. Unused fields stay at their sentinel values and
/// serialize as empty cells.
struct MetricRow {
  long step = -1;
  std::string phase;  // pretrain | finetune | eval
  double loss = NAN;
  double lr = NAN;
  int layer = -1;
  int window = -1;
  int expert = -1;
  double share = NAN;
  long hits = -1;
  int survivors = -1;
  std::string event;
};

struct RunMetrics {
  std::vector<MetricRow> rows;

  void add_step(long step, const std::string& phase, double loss, double lr);
  void add_window_share(long step, const std::string& phase, int layer, int window, int expert,
                        double share, long hits, int survivors);
  void add_event(long step, const std::string& phase, int layer, int window, int survivors,
                 const std::string& event);
  void add_eval(long step, const std::string& phase, double value, const std::string& what);

  void write_csv(const std::string& path) const;
  static RunMetrics read_csv(const std::string& path);
};

std::string csv_header();

}  // namespace moep
