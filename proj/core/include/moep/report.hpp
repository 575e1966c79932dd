// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace moep {

struct SettingSummary {
  std::string setting;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::size_t num_runs = 0;
};

struct ReportResult {
  std::vector<SettingSummary> summaries;
  std::size_t runs_read = 0;
  std::size_t runs_skipped = 0;
};

/// Aggregates metrics CSVs from run directories into summary tables and plot
/// data (CSV + standalone SVG). Runs are grouped into settings by directory
/// name with a trailing "-seed<k>" stripped. Missing or corrupt runs are
/// skipped with a warning; it is an error if none can be read.
ReportResult report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace moep
