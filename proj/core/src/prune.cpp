// SPDX-License-Identifier: Apache-2.0
#include "moep/prune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "moep/errors.hpp"

namespace moep {

std::string to_string(PruneMode m) {
  switch (m) {
    case PruneMode::kNone: return "none";
    case PruneMode::kStaged: return "staged";
    case PruneMode::kEager: return "eager";
  }
  return "none";
}

std::string to_string(PruneCriterion c) {
  return c == PruneCriterion::kAlpha ? "alpha" : "hit_rate";
}

PruneMode prune_mode_from_string(const std::string& s) {
  if (s == "none") return PruneMode::kNone;
  if (s == "staged") return PruneMode::kStaged;
  if (s == "eager") return PruneMode::kEager;
  throw ConfigError("unknown prune mode: " + s);
}

PruneCriterion prune_criterion_from_string(const std::string& s) {
  if (s == "alpha") return PruneCriterion::kAlpha;
  if (s == "hit_rate") return PruneCriterion::kHitRate;
  throw ConfigError("unknown prune criterion: " + s);
}

std::size_t PruneConfig::window_length() const {
  const double l = gamma * static_cast<double>(total_steps) / static_cast<double>(num_experts);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(l)));
}

void PruneConfig::validate() const {
  if (beta < 0.0) throw ConfigError("prune config: beta must be >= 0");
  if (gamma <= 0.0) throw ConfigError("prune config: gamma must be > 0");
  if (total_steps < 1 || num_experts < 1) throw ConfigError("prune config: N and E must be >= 1");
}

double threshold(double beta, std::size_t num_active) {
  if (num_active < 1) throw ConfigError("threshold: Z must be >= 1");
  return beta / static_cast<double>(num_active);
}

ProficiencyLedger ProficiencyLedger::make(std::size_t num_layers, std::size_t num_experts) {
  ProficiencyLedger l;
  l.layers.resize(num_layers);
  for (LayerLedger& layer : l.layers) {
    layer.alpha_sum.assign(num_experts, 0.0);
    layer.hit_count.assign(num_experts, 0);
    layer.token_count = 0;
  }
  return l;
}

void ProficiencyLedger::reset() {
  for (LayerLedger& layer : layers) {
    std::fill(layer.alpha_sum.begin(), layer.alpha_sum.end(), 0.0);
    std::fill(layer.hit_count.begin(), layer.hit_count.end(), 0);
    layer.token_count = 0;
  }
}

void accumulate(ProficiencyLedger& ledger, const std::vector<GateResult>& gates) {
  if (gates.size() != ledger.layers.size()) {
    throw ConfigError("accumulate: gate result count " + std::to_string(gates.size()) +
                      " does not match ledger layer count " + std::to_string(ledger.layers.size()));
  }
  for (std::size_t l = 0; l < gates.size(); ++l) {
    const GateResult& g = gates[l];
    LayerLedger& ll = ledger.layers[l];
    const std::size_t n = g.alphas.rows();
    const std::size_t e = g.alphas.cols();
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < e; ++i) ll.alpha_sum[i] += g.alphas.at(t, i);
      ll.hit_count[static_cast<std::size_t>(g.top1[t])] += 1;
    }
    ll.token_count += n;
  }
}

std::optional<std::vector<double>> window_shares(const ProficiencyLedger& ledger,
                                                 std::size_t layer, PruneCriterion criterion,
                                                 const std::vector<bool>& active_mask) {
  const LayerLedger& ll = ledger.layers.at(layer);
  if (ll.token_count == 0) return std::nullopt;
  const std::size_t e = ll.alpha_sum.size();
  std::vector<double> shares(e, 0.0);
  if (criterion == PruneCriterion::kAlpha) {
    double total = 0.0;
    for (std::size_t i = 0; i < e; ++i)
      if (active_mask[i]) total += ll.alpha_sum[i];
    if (total <= 0.0) return std::nullopt;
    for (std::size_t i = 0; i < e; ++i)
      if (active_mask[i]) shares[i] = ll.alpha_sum[i] / total;
  } else {
    for (std::size_t i = 0; i < e; ++i)
      if (active_mask[i])
        shares[i] = static_cast<double>(ll.hit_count[i]) / static_cast<double>(ll.token_count);
  }
  return shares;
}

ScheduleState ScheduleState::make(std::size_t num_layers, std::size_t num_experts) {
  ScheduleState s;
  s.survivors.assign(num_layers, std::vector<bool>(num_experts, true));
  s.finalized.assign(num_layers, num_experts == 1);
  return s;
}

std::size_t ScheduleState::num_active(std::size_t layer) const {
  const auto& mask = survivors.at(layer);
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<std::size_t> ScheduleState::active_ids(std::size_t layer) const {
  std::vector<std::size_t> ids;
  const auto& mask = survivors.at(layer);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) ids.push_back(i);
  return ids;
}

bool ScheduleState::all_finalized() const {
  return std::all_of(finalized.begin(), finalized.end(), [](bool f) { return f; });
}

namespace {

void apply_drop(ScheduleState& state, std::size_t layer, const std::vector<std::size_t>& dropped) {
  for (std::size_t i : dropped) state.survivors[layer][i] = false;
  const std::size_t z = state.num_active(layer);
  if (z == 0) throw NumericError("pruning emptied a survivor set");
  if (z == 1) state.finalized[layer] = true;
}

std::size_t argmax_share(const std::vector<double>& shares, const std::vector<std::size_t>& ids) {
  std::size_t best = ids[0];
  for (std::size_t i : ids)
    if (shares[i] > shares[best]) best = i;  // tie -> lowest index (strict >)
  return best;
}

}  // namespace

std::vector<std::size_t> prune_eager(ScheduleState& state, std::size_t layer,
                                     const std::vector<double>& shares, double t) {
  const std::vector<std::size_t> ids = state.active_ids(layer);
  const std::size_t keep = argmax_share(shares, ids);
  std::vector<std::size_t> dropped;
  bool clamped = false;
  for (std::size_t i : ids) {
    if (shares[i] < t) {
      if (i == keep) {
        clamped = true;  // beta > 1 can push every share below T
        continue;
      }
      dropped.push_back(i);
    }
  }
  if (clamped) ++state.clamp_activations;
  apply_drop(state, layer, dropped);
  return dropped;
}

std::vector<std::size_t> prune_staged(ScheduleState& state, std::size_t layer,
                                      const std::vector<double>& shares) {
  const std::vector<std::size_t> ids = state.active_ids(layer);
  if (ids.size() <= 1) return {};
  std::size_t worst = ids[0];
  for (std::size_t i : ids)
    if (shares[i] < shares[worst]) worst = i;  // tie -> lowest index
  std::vector<std::size_t> dropped = {worst};
  apply_drop(state, layer, dropped);
  return dropped;
}

std::vector<std::size_t> force_drop(ScheduleState& state, std::size_t layer,
                                    const std::vector<double>& shares) {
  if (state.finalized[layer]) return {};
  const std::vector<std::size_t> ids = state.active_ids(layer);
  const std::size_t keep = argmax_share(shares, ids);
  std::vector<std::size_t> dropped;
  for (std::size_t i : ids)
    if (i != keep) dropped.push_back(i);
  apply_drop(state, layer, dropped);
  state.finalized[layer] = true;
  return dropped;
}

bool is_window_boundary(const PruneConfig& config, std::size_t step) {
  if (step == 0) return false;
  return step % config.window_length() == 0 || step == config.force_drop_step();
}

void on_window_end(ScheduleState& state, ProficiencyLedger& ledger, const PruneConfig& config,
                   std::size_t step) {
  for (std::size_t layer = 0; layer < state.survivors.size(); ++layer) {
    if (config.mode == PruneMode::kNone || state.finalized[layer]) continue;
    PruneEvent ev;
    ev.step = step;
    ev.layer = layer;
    ev.window = state.window_index;
    ev.survivors_before = state.active_ids(layer);

    auto shares = window_shares(ledger, layer, config.criterion, state.survivors[layer]);
    if (!shares) {
      ev.mode = "skip";
      ev.shares.assign(config.num_experts, 0.0);
      state.events.push_back(std::move(ev));
      continue;
    }
    ev.shares = *shares;
    if (step >= config.force_drop_step()) {
      ev.mode = "force";
      ev.dropped = force_drop(state, layer, *shares);
    } else if (config.mode == PruneMode::kEager) {
      ev.mode = "eager";
      ev.dropped = prune_eager(state, layer, *shares,
                               threshold(config.beta, ev.survivors_before.size()));
    } else {
      ev.mode = "staged";
      ev.dropped = prune_staged(state, layer, *shares);
    }
    state.events.push_back(std::move(ev));
  }
  state.window_index += 1;
  ledger.reset();
}

namespace {

std::string join_ids(const std::vector<std::size_t>& ids) {
  if (ids.empty()) return "-";
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ",";
    os << ids[i];
  }
  return os.str();
}

std::vector<std::size_t> split_ids(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "-") return out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

}  // namespace

std::string PruneEvent::serialize() const {
  std::ostringstream os;
  os << "step=" << step << " layer=" << layer << " mode=" << mode << " window=" << window
     << " survivors=" << join_ids(survivors_before) << " dropped=" << join_ids(dropped)
     << " shares=";
  os << std::fixed << std::setprecision(9);
  for (std::size_t i = 0; i < shares.size(); ++i) {
    if (i) os << ",";
    os << shares[i];
  }
  return os.str();
}

PruneEvent PruneEvent::parse(const std::string& line) {
  PruneEvent ev;
  std::istringstream is(line);
  std::string field;
  while (is >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw IoError("malformed event field: " + field);
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "step") ev.step = std::stoull(val);
    else if (key == "layer") ev.layer = std::stoull(val);
    else if (key == "mode") ev.mode = val;
    else if (key == "window") ev.window = std::stoull(val);
    else if (key == "survivors") ev.survivors_before = split_ids(val);
    else if (key == "dropped") ev.dropped = split_ids(val);
    else if (key == "shares") {
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) ev.shares.push_back(std::stod(tok));
    } else {
      throw IoError("unknown event field: " + key);
    }
  }
  return ev;
}

std::string serialize_events(const std::vector<PruneEvent>& events) {
  std::ostringstream os;
  for (const PruneEvent& ev : events) os << ev.serialize() << "\n";
  return os.str();
}

std::vector<PruneEvent> parse_events(std::istream& in) {
  std::vector<PruneEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(PruneEvent::parse(line));
  }
  return out;
}

}  // namespace moep
