// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moep/model.hpp"

namespace moep {

enum class PruneMode { kNone, kStaged, kEager };
enum class PruneCriterion { kAlpha, kHitRate };

std::string to_string(PruneMode m);
std::string to_string(PruneCriterion c);
PruneMode prune_mode_from_string(const std::string& s);
PruneCriterion prune_criterion_from_string(const std::string& s);

struct PruneConfig {
  PruneMode mode = PruneMode::kNone;
  PruneCriterion criterion = PruneCriterion::kAlpha;
  double beta = 1.0;
  double gamma = 1.0;
  std::size_t total_steps = 800;
  std::size_t num_experts = 8;

  /// Window length L = max(1, round(gamma * N / E)).
  std::size_t window_length() const;
  /// Final decision happens at step floor(N / 2).
  std::size_t force_drop_step() const { return total_steps / 2; }
  void validate() const;
};

/// Dynamic dropping threshold T = beta / Z.
double threshold(double beta, std::size_t num_active);

/// Per-layer accumulators of gate mass and top-1 hits for the current window.
struct LayerLedger {
  std::vector<double> alpha_sum;
  std::vector<std::size_t> hit_count;
  std::size_t token_count = 0;
};

struct ProficiencyLedger {
  std::vector<LayerLedger> layers;

  static ProficiencyLedger make(std::size_t num_layers, std::size_t num_experts);
  void reset();
};

/// Adds one step's gate results (one per MoE layer) to the ledger.
void accumulate(ProficiencyLedger& ledger, const std::vector<GateResult>& gates);

/// Normalized proficiency shares for one layer. Inactive experts get 0;
/// active shares sum to 1. Empty window -> nullopt (decision skipped).
std::optional<std::vector<double>> window_shares(const ProficiencyLedger& ledger,
                                                 std::size_t layer, PruneCriterion criterion,
                                                 const std::vector<bool>& active_mask);

struct PruneEvent {
  std::size_t step = 0;
  std::size_t layer = 0;
  std::string mode;  // "eager", "staged", "force", "skip"
  std::size_t window = 0;
  std::vector<std::size_t> survivors_before;
  std::vector<std::size_t> dropped;
  std::vector<double> shares;  // full length E, inactive = 0

  std::string serialize() const;  // newline-delimited record, 9-digit shares
  static PruneEvent parse(const std::string& line);
};

/// Deterministic state machine over per-layer survivor sets.
struct ScheduleState {
  std::size_t window_index = 0;
  std::vector<std::vector<bool>> survivors;  // per layer, length E
  std::vector<bool> finalized;               // size 1 survivor set
  std::vector<PruneEvent> events;
  std::size_t clamp_activations = 0;  // eager safety clamp fire count

  static ScheduleState make(std::size_t num_layers, std::size_t num_experts);

  std::size_t num_active(std::size_t layer) const;
  std::vector<std::size_t> active_ids(std::size_t layer) const;
  bool all_finalized() const;
};

/// Drops every active expert with share strictly below T; always retains the
/// argmax-share expert. Returns the dropped set.
std::vector<std::size_t> prune_eager(ScheduleState& state, std::size_t layer,
                                     const std::vector<double>& shares, double t);

/// Drops exactly the argmin-share active expert (ties -> lowest index).
/// No-op on a single survivor.
std::vector<std::size_t> prune_staged(ScheduleState& state, std::size_t layer,
                                      const std::vector<double>& shares);

/// Keeps only the argmax-share expert (ties -> lowest index) and finalizes.
std::vector<std::size_t> force_drop(ScheduleState& state, std::size_t layer,
                                    const std::vector<double>& shares);

/// True when `step` (1-based count of completed steps) is a decision point.
bool is_window_boundary(const PruneConfig& config, std::size_t step);

/// Computes shares per layer, dispatches the mode's rule (force at the
/// schedule midpoint), resets the ledger, appends events.
void on_window_end(ScheduleState& state, ProficiencyLedger& ledger, const PruneConfig& config,
                   std::size_t step);

std::string serialize_events(const std::vector<PruneEvent>& events);
std::vector<PruneEvent> parse_events(std::istream& in);

}  // namespace moep
