#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "labmate/errors.hpp"
#include "labmate/eval.hpp"
#include "labmate/sim.hpp"

using namespace labmate;
using nlohmann::json;

namespace {

ScenarioSpec spec_for(Scenario s, std::uint64_t count, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.scenario = s;
  spec.count = count;
  spec.seed = seed;
  return spec;
}

std::string dataset_text(const ScenarioSpec& spec) {
  std::ostringstream out;
  generate_dataset(spec, out);
  return out.str();
}

}  // namespace

TEST(Allocation, LargestRemainder) {
  const auto even = allocate_classes(3270, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_EQ(even, (std::array<std::uint64_t, 3>{1090, 1090, 1090}));
  const auto odd = allocate_classes(10, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_EQ(odd, (std::array<std::uint64_t, 3>{4, 3, 3}));
  const auto skew = allocate_classes(7, {0.5, 0.25, 0.25});
  EXPECT_EQ(skew[0] + skew[1] + skew[2], 7u);
  for (int c = 0; c < 3; ++c) {
    EXPECT_LE(std::abs(static_cast<double>(skew[c]) - 7 * std::array{0.5, 0.25, 0.25}[c]), 1.0);
  }
}

TEST(Generate, DatasetClassCounts) {
  for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
    std::istringstream in(dataset_text(spec_for(s, 3270, 5)));
    std::array<int, 3> counts{};
    for (const auto& rec : load_dataset(in)) {
      ++counts[static_cast<int>(to_class(rec.truth.obstruction, rec.truth.interaction))];
    }
    EXPECT_EQ(counts, (std::array<int, 3>{1090, 1090, 1090})) << to_string(s);
  }
}

TEST(Generate, SingleRecord) {
  const std::string text = dataset_text(spec_for(Scenario::S1, 1, 0));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST(Generate, UnwritableSink) {
  std::ostringstream bad;
  bad.setstate(std::ios::badbit);
  EXPECT_THROW(generate_dataset(spec_for(Scenario::S1, 2, 0), bad), IoError);
  EXPECT_THROW(generate_dataset(spec_for(Scenario::S1, 2, 0), "/nonexistent-dir/x.jsonl"), IoError);
}

TEST(Generate, Deterministic) {
  const auto spec = spec_for(Scenario::S3, 200, 42);
  EXPECT_EQ(dataset_text(spec), dataset_text(spec));
  auto other = spec;
  other.seed = 43;
  EXPECT_NE(dataset_text(spec), dataset_text(other));
  EXPECT_EQ(scene_to_json(generate_scene(spec, 17)).dump(),
            scene_to_json(generate_scene(spec, 17)).dump());
}

TEST(Generate, LabelFidelityOnCleanScenes) {
  for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
    auto spec = spec_for(s, 600, 9);
    spec.noise = {0.05, 0.05, 0.1};
    for (std::uint64_t i = 0; i < spec.count; ++i) {
      const GeneratedScene g = generate_scene_detailed(spec, i);
      const auto oracle = classify_scene(g.clean, spec.rules);
      ASSERT_TRUE(g.scene.truth.has_value());
      EXPECT_EQ(oracle.labels(), *g.scene.truth);
      EXPECT_EQ(to_class(oracle), g.cls);
      EXPECT_LE(g.scene.objects.size(), g.clean.objects.size());
    }
  }
}

TEST(Generate, ScenarioShapes) {
  auto spec = spec_for(Scenario::S1, 1, 1);
  const auto interact = generate_scene_with_class(spec, 0, ScenarioClass::ObstructInteract);
  const auto r = distance_matrix(interact.clean);
  ASSERT_EQ(r.humans().size(), 1u);
  EXPECT_LT(*r.humans()[0].human_equipment_m, spec.rules.t_interact_m);

  spec.scenario = Scenario::S2;
  const auto neither = generate_scene_with_class(spec, 0, ScenarioClass::Neither);
  EXPECT_EQ(neither.scene.truth, (TruthLabels{false, false}));

  spec.scenario = Scenario::S3;
  for (std::uint64_t i = 0; i < 50; ++i) {
    EXPECT_GE(generate_scene_detailed(spec, 0).clean.human_count(), 2u);
  }
}

TEST(Generate, SpecValidation) {
  auto spec = spec_for(Scenario::S1, 0, 1);
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.count = 1;
  spec.class_mix = {0.5, 0.5, 0.5};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.class_mix = {1, 0, 0};
  spec.noise.dropout_p = 2;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Episode, PassiveWaitsOutOccupancy) {
  auto spec = spec_for(Scenario::S1, 1, 3);
  spec.class_mix = {1, 0, 0};
  spec.occupancy_s = 60;
  const auto t = run_episode(spec, Policy::Passive, BackendConfig{});
  EXPECT_EQ(t.idle_s, 60.0);
  EXPECT_EQ(t.reallocated_s, 0.0);
  EXPECT_TRUE(t.arrived);
  EXPECT_TRUE(t.dialogue.empty());
}

TEST(Episode, ProactiveReallocates) {
  auto spec = spec_for(Scenario::S1, 1, 3);
  spec.class_mix = {1, 0, 0};
  spec.occupancy_s = 60;
  EpisodeConfig cfg;
  cfg.replies = {"yes, wait"};
  cfg.fsm.reallocation_delay_s = 5;
  const auto t = run_episode(spec, Policy::Proactive, BackendConfig{}, cfg);
  EXPECT_EQ(t.idle_s, 5.0);
  EXPECT_EQ(t.reallocated_s, 55.0);
  EXPECT_TRUE(t.arrived);
  ASSERT_EQ(t.dialogue.size(), 2u);
  EXPECT_EQ(t.dialogue[0].second,
            "You seem to be using the " +
                std::string(t.dialogue[0].second.find("fumehood") != std::string::npos
                                ? "fumehood"
                                : "instrument") +
                ". Shall I wait until you are done?");
  EXPECT_LE(t.idle_s + t.reallocated_s, t.duration_s);
  for (std::size_t i = 1; i < t.transitions.size(); ++i) {
    EXPECT_LE(t.transitions[i - 1].t, t.transitions[i].t);
  }
}

TEST(Episode, NoHumansNoIdle) {
  auto spec = spec_for(Scenario::S2, 1, 3);
  spec.occupancy_s = 0;
  for (Policy p : {Policy::Proactive, Policy::Passive}) {
    const auto t = run_episode(spec, p, BackendConfig{});
    EXPECT_EQ(t.idle_s, 0.0);
    EXPECT_TRUE(t.arrived);
  }
}

TEST(Episode, TraceJsonDeterministic) {
  auto spec = spec_for(Scenario::S3, 5, 8);
  BackendConfig b;
  b.epsilon = 0.3;
  EpisodeConfig cfg;
  cfg.index = 4;
  EXPECT_EQ(trace_to_json(run_episode(spec, Policy::Proactive, b, cfg)).dump(),
            trace_to_json(run_episode(spec, Policy::Proactive, b, cfg)).dump());
}

TEST(Compare, MeanSavedIsFiftyFiveWhenAlwaysBlocked) {
  auto spec = spec_for(Scenario::S1, 1, 12);
  spec.class_mix = {0.5, 0.0, 0.5};
  const auto c = compare_policies(spec, BackendConfig{}, 100, {}, 2);
  EXPECT_EQ(c.mean_saved, 55.0);
  EXPECT_EQ(c.dominance_violations, 0u);
}

TEST(Compare, OccupancyZeroSavesNothing) {
  auto spec = spec_for(Scenario::S2, 1, 12);
  spec.occupancy_s = 0;
  const auto c = compare_policies(spec, BackendConfig{}, 50, {}, 2);
  EXPECT_EQ(c.mean_saved, 0.0);
}

TEST(Compare, NoisyBackendNeverLosesOnIdle) {
  BackendConfig b;
  b.epsilon = 0.5;
  for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
    const auto c = compare_policies(spec_for(s, 1, 21), b, 1000, {}, 0);
    EXPECT_EQ(c.dominance_violations, 0u);
    EXPECT_GE(c.min_saved, 0.0);
    EXPECT_GE(c.mean_saved, 0.0);
  }
}

TEST(Compare, ScheduleIndependent) {
  BackendConfig b;
  b.epsilon = 0.2;
  const auto spec = spec_for(Scenario::S3, 1, 2);
  const auto one = compare_policies(spec, b, 200, {}, 1);
  const auto four = compare_policies(spec, b, 200, {}, 4);
  EXPECT_EQ(one.saved, four.saved);
  EXPECT_EQ(comparison_to_json(one).dump(), comparison_to_json(four).dump());
}
