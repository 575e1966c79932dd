// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "moep/prune.hpp"

using namespace moep;

namespace {

ProficiencyLedger ledger_from_shares(const std::vector<double>& alpha_mass,
                                     std::size_t tokens = 100) {
  ProficiencyLedger l = ProficiencyLedger::make(1, alpha_mass.size());
  l.layers[0].alpha_sum = alpha_mass;
  l.layers[0].token_count = tokens;
  return l;
}

}  // namespace

TEST_CASE("threshold is beta over active count") {
  CHECK(threshold(1.0, 32) == 0.03125);
  CHECK(threshold(1.0, 8) == 0.125);
  CHECK(threshold(0.5, 4) == 0.125);
  CHECK(threshold(2.0, 8) == 0.25);
  CHECK(threshold(0.0, 8) == 0.0);
  CHECK_THROWS_AS(threshold(1.0, 0), ConfigError);
}

TEST_CASE("window length arithmetic") {
  PruneConfig c;
  c.total_steps = 800;
  c.num_experts = 8;
  c.gamma = 1.0;
  CHECK(c.window_length() == 100);
  c.gamma = 0.5;
  CHECK(c.window_length() == 50);
  c.gamma = 0.001;
  CHECK(c.window_length() == 1);  // floor of 1
  c.gamma = 1.0;
  c.total_steps = 801;
  CHECK(c.window_length() == 100);  // round(100.125)
  CHECK(c.force_drop_step() == 400);
  c.total_steps = 800;
  CHECK(c.force_drop_step() == 400);
}

TEST_CASE("window boundaries include the force-drop midpoint") {
  PruneConfig c;
  c.total_steps = 300;
  c.num_experts = 4;
  c.gamma = 1.0;  // L = 75, force at 150 (multiple of 75 anyway)
  CHECK(!is_window_boundary(c, 0));
  CHECK(!is_window_boundary(c, 74));
  CHECK(is_window_boundary(c, 75));
  CHECK(is_window_boundary(c, 150));
  CHECK(is_window_boundary(c, 300));
  c.gamma = 0.9;  // L = 68; 150 is not a multiple but is the force step
  CHECK(is_window_boundary(c, 68));
  CHECK(!is_window_boundary(c, 149));
  CHECK(is_window_boundary(c, 150));
}

TEST_CASE("window shares normalize over active experts") {
  ProficiencyLedger l = ledger_from_shares({2.0, 1.0, 1.0, 0.0});
  auto s = window_shares(l, 0, PruneCriterion::kAlpha, {true, true, true, true});
  REQUIRE(s.has_value());
  CHECK((*s)[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK((*s)[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK((*s)[3] == 0.0);

  // Masked-out mass is excluded from the normalizer.
  auto s2 = window_shares(l, 0, PruneCriterion::kAlpha, {false, true, true, true});
  REQUIRE(s2.has_value());
  CHECK((*s2)[0] == 0.0);
  CHECK((*s2)[1] == doctest::Approx(0.5).epsilon(1e-15));

  // Empty window gives no decision.
  ProficiencyLedger empty = ProficiencyLedger::make(1, 4);
  CHECK(!window_shares(empty, 0, PruneCriterion::kAlpha, {true, true, true, true}).has_value());
}

TEST_CASE("hit-rate shares divide by token count") {
  ProficiencyLedger l = ProficiencyLedger::make(1, 3);
  l.layers[0].hit_count = {60, 30, 10};
  l.layers[0].token_count = 100;
  auto s = window_shares(l, 0, PruneCriterion::kHitRate, {true, true, true});
  REQUIRE(s.has_value());
  CHECK((*s)[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK((*s)[2] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("eager drops strictly-below-threshold experts") {
  ScheduleState st = ScheduleState::make(1, 4);
  auto dropped = prune_eager(st, 0, {0.5, 0.3, 0.15, 0.05}, threshold(1.0, 4));
  CHECK(dropped == std::vector<std::size_t>{2, 3});
  CHECK(st.active_ids(0) == std::vector<std::size_t>{0, 1});
  CHECK(!st.finalized[0]);
  CHECK(st.clamp_activations == 0);
}

TEST_CASE("eager keeps a uniform layer intact") {
  ScheduleState st = ScheduleState::make(1, 4);
  auto dropped = prune_eager(st, 0, {0.25, 0.25, 0.25, 0.25}, threshold(1.0, 4));
  CHECK(dropped.empty());
  CHECK(st.num_active(0) == 4);
}

TEST_CASE("eager clamp saves the argmax when beta pushes everyone under") {
  ScheduleState st = ScheduleState::make(1, 4);
  // T = 2/4 = 0.5 > every share; only the argmax survives, clamp fires.
  auto dropped = prune_eager(st, 0, {0.4, 0.3, 0.2, 0.1}, threshold(2.0, 4));
  CHECK(dropped == std::vector<std::size_t>{1, 2, 3});
  CHECK(st.active_ids(0) == std::vector<std::size_t>{0});
  CHECK(st.finalized[0]);
  CHECK(st.clamp_activations == 1);
}

TEST_CASE("staged drops exactly the argmin, ties to lowest index") {
  ScheduleState st = ScheduleState::make(1, 4);
  auto d1 = prune_staged(st, 0, {0.3, 0.1, 0.4, 0.2});
  CHECK(d1 == std::vector<std::size_t>{1});

  ScheduleState tie = ScheduleState::make(1, 3);
  auto d2 = prune_staged(tie, 0, {0.4, 0.3, 0.3});
  CHECK(d2 == std::vector<std::size_t>{1});

  // Single survivor: no-op.
  ScheduleState solo = ScheduleState::make(1, 1);
  CHECK(prune_staged(solo, 0, {1.0}).empty());
}

TEST_CASE("force keeps the argmax and finalizes, then is idempotent") {
  ScheduleState st = ScheduleState::make(1, 4);
  auto d = force_drop(st, 0, {0.1, 0.6, 0.2, 0.1});
  CHECK(d == std::vector<std::size_t>{0, 2, 3});
  CHECK(st.active_ids(0) == std::vector<std::size_t>{1});
  CHECK(st.finalized[0]);
  CHECK(force_drop(st, 0, {0.1, 0.6, 0.2, 0.1}).empty());
  CHECK(st.active_ids(0) == std::vector<std::size_t>{1});
}

TEST_CASE("survivor sets only shrink and never empty") {
  ScheduleState st = ScheduleState::make(1, 4);
  std::vector<double> shares = {0.4, 0.3, 0.2, 0.1};
  std::size_t prev = st.num_active(0);
  while (!st.finalized[0]) {
    prune_staged(st, 0, shares);
    const std::size_t now = st.num_active(0);
    CHECK(now >= 1);
    CHECK(now < prev);
    prev = now;
  }
  CHECK(st.num_active(0) == 1);
}

TEST_CASE("beta zero leaves eager inert until the forced decision") {
  PruneConfig c;
  c.mode = PruneMode::kEager;
  c.beta = 0.0;
  c.gamma = 1.0;
  c.total_steps = 400;
  c.num_experts = 4;  // L = 100, force at 200
  ScheduleState st = ScheduleState::make(1, 4);
  ProficiencyLedger l = ledger_from_shares({0.9, 0.05, 0.03, 0.02});
  on_window_end(st, l, c, 100);
  CHECK(st.num_active(0) == 4);  // nothing strictly below T = 0
  l = ledger_from_shares({0.9, 0.05, 0.03, 0.02});
  on_window_end(st, l, c, 200);
  CHECK(st.active_ids(0) == std::vector<std::size_t>{0});
  CHECK(st.finalized[0]);
  REQUIRE(st.events.size() == 2);
  CHECK(st.events[0].mode == "eager");
  CHECK(st.events[1].mode == "force");
}

TEST_CASE("staged trajectory walks 4 -> 3 -> 2 -> 1") {
  PruneConfig c;
  c.mode = PruneMode::kStaged;
  c.gamma = 0.5;
  c.total_steps = 800;
  c.num_experts = 4;  // L = 100, force at 400
  ScheduleState st = ScheduleState::make(1, 4);
  std::vector<std::size_t> trajectory = {st.num_active(0)};
  for (std::size_t step = 100; step <= 300; step += 100) {
    ProficiencyLedger l = ledger_from_shares({0.4, 0.3, 0.2, 0.1});
    on_window_end(st, l, c, step);
    trajectory.push_back(st.num_active(0));
  }
  CHECK(trajectory == std::vector<std::size_t>{4, 3, 2, 1});
  // Weakest first, then upward, argmax always last standing.
  REQUIRE(st.events.size() == 3);
  CHECK(st.events[0].dropped == std::vector<std::size_t>{3});
  CHECK(st.events[1].dropped == std::vector<std::size_t>{2});
  CHECK(st.events[2].dropped == std::vector<std::size_t>{1});
  CHECK(st.active_ids(0) == std::vector<std::size_t>{0});
}

TEST_CASE("empty windows are skipped without touching survivors") {
  PruneConfig c;
  c.mode = PruneMode::kStaged;
  c.total_steps = 400;
  c.num_experts = 4;
  ScheduleState st = ScheduleState::make(1, 4);
  ProficiencyLedger l = ProficiencyLedger::make(1, 4);
  on_window_end(st, l, c, 100);
  CHECK(st.num_active(0) == 4);
  REQUIRE(st.events.size() == 1);
  CHECK(st.events[0].mode == "skip");
  CHECK(st.events[0].dropped.empty());
}

TEST_CASE("mode none records nothing") {
  PruneConfig c;
  c.mode = PruneMode::kNone;
  c.total_steps = 400;
  c.num_experts = 4;
  ScheduleState st = ScheduleState::make(1, 4);
  ProficiencyLedger l = ledger_from_shares({0.4, 0.3, 0.2, 0.1});
  on_window_end(st, l, c, 200);
  CHECK(st.events.empty());
  CHECK(st.num_active(0) == 4);
  CHECK(st.window_index == 1);
}

TEST_CASE("events serialize and parse losslessly") {
  PruneEvent ev;
  ev.step = 300;
  ev.layer = 1;
  ev.mode = "eager";
  ev.window = 2;
  ev.survivors_before = {0, 2, 5};
  ev.dropped = {5};
  ev.shares = {0.5, 0.0, 0.375, 0.0, 0.0, 0.125};
  const std::string line = ev.serialize();
  PruneEvent back = PruneEvent::parse(line);
  CHECK(back.step == ev.step);
  CHECK(back.layer == ev.layer);
  CHECK(back.mode == ev.mode);
  CHECK(back.window == ev.window);
  CHECK(back.survivors_before == ev.survivors_before);
  CHECK(back.dropped == ev.dropped);
  REQUIRE(back.shares.size() == ev.shares.size());
  for (std::size_t i = 0; i < ev.shares.size(); ++i)
    CHECK(back.shares[i] == doctest::Approx(ev.shares[i]).epsilon(1e-9));
  // Round-trip of the serialized text itself is byte-stable.
  CHECK(back.serialize() == line);
}

TEST_CASE("event replay reconstructs the survivor sets exactly") {
  PruneConfig c;
  c.mode = PruneMode::kStaged;
  c.gamma = 0.5;
  c.total_steps = 800;
  c.num_experts = 4;
  ScheduleState st = ScheduleState::make(2, 4);
  for (std::size_t step = 100; step <= 400; step += 100) {
    ProficiencyLedger l = ProficiencyLedger::make(2, 4);
    l.layers[0] = ledger_from_shares({0.4, 0.3, 0.2, 0.1}).layers[0];
    l.layers[1] = ledger_from_shares({0.1, 0.2, 0.3, 0.4}).layers[0];
    on_window_end(st, l, c, step);
  }
  std::istringstream in(serialize_events(st.events));
  const std::vector<PruneEvent> replay = parse_events(in);
  ScheduleState rebuilt = ScheduleState::make(2, 4);
  for (const PruneEvent& ev : replay)
    for (std::size_t i : ev.dropped) rebuilt.survivors[ev.layer][i] = false;
  CHECK(rebuilt.survivors == st.survivors);
  CHECK(st.active_ids(0) == std::vector<std::size_t>{0});
  CHECK(st.active_ids(1) == std::vector<std::size_t>{3});
}

TEST_CASE("clamp only fires when beta exceeds one") {
  for (double beta : {0.0, 0.5, 1.0}) {
    ScheduleState st = ScheduleState::make(1, 4);
    prune_eager(st, 0, {0.25, 0.25, 0.25, 0.25}, threshold(beta, 4));
    prune_eager(st, 0, {0.7, 0.1, 0.1, 0.1}, threshold(beta, st.num_active(0)));
    CHECK(st.clamp_activations == 0);
  }
  ScheduleState st = ScheduleState::make(1, 4);
  prune_eager(st, 0, {0.25, 0.25, 0.25, 0.25}, threshold(4.0, 4));
  CHECK(st.clamp_activations == 1);
}

TEST_CASE("config validation") {
  PruneConfig c;
  c.beta = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.beta = 1.0;
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.gamma = 1.0;
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(prune_mode_from_string("bogus"), ConfigError);
  CHECK(prune_mode_from_string("eager") == PruneMode::kEager);
  CHECK(prune_criterion_from_string("hit_rate") == PruneCriterion::kHitRate);
}
