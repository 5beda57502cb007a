#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "labmate/errors.hpp"
#include "labmate/rules.hpp"

using namespace labmate;

namespace {

Scene scene_with(std::vector<SceneObject> objects, std::optional<Position3> goal) {
  Scene s;
  s.scene_id = "r";
  s.objects = std::move(objects);
  s.goal = goal;
  return s;
}

// Random scene: 1-3 humans and 1-3 pieces of equipment in an 8 x 6 room.
Scene random_scene(std::mt19937_64& g) {
  std::uniform_real_distribution<double> x(0, 8), y(-3, 3);
  std::uniform_int_distribution<int> count(1, 3);
  std::vector<SceneObject> objs;
  const int humans = count(g), equipment = count(g);
  for (int i = 0; i < humans; ++i) objs.push_back({ClassLabel::HumanChemist, i, {x(g), y(g), 0}});
  for (int i = 0; i < equipment; ++i) {
    objs.push_back({i % 2 ? ClassLabel::Instrument : ClassLabel::Fumehood, i / 2, {x(g), y(g), 0}});
  }
  std::optional<Position3> goal;
  if (g() % 4 != 0) goal = Position3{x(g), y(g), 0};
  return scene_with(objs, goal);
}

}  // namespace

TEST(Classify, HumanAtFumehoodInteractsAndObstructs) {
  const Scene s = scene_with({{ClassLabel::HumanChemist, 0, {5, 2.4, 0}},
                              {ClassLabel::Fumehood, 0, {5, 2.0, 0}}},
                             Position3{5, -2, 0});
  const auto j = classify_scene(s, RuleConfig{});
  EXPECT_TRUE(j.obstruction);
  EXPECT_TRUE(j.interaction);
  EXPECT_EQ(j.source, JudgmentSource::Oracle);
}

TEST(Classify, FarFieldIsNeither) {
  const Scene s = scene_with({{ClassLabel::HumanChemist, 0, {0, 5, 0}},
                              {ClassLabel::Fumehood, 0, {5, -2, 0}}},
                             Position3{5, -1, 0});
  const auto j = classify_scene(s, RuleConfig{});
  EXPECT_FALSE(j.obstruction);
  EXPECT_FALSE(j.interaction);
}

TEST(Classify, HumanNearCorridorObstructsOnly) {
  // 0.3 m off the segment (0,0,0)-(6,0,0), 2 m or more from the equipment
  const Scene s = scene_with({{ClassLabel::HumanChemist, 0, {3, 0.3, 0}},
                              {ClassLabel::Fumehood, 0, {7, 0, 0}},
                              {ClassLabel::Instrument, 0, {3, 2.3, 0}}},
                             Position3{6, 0, 0});
  const auto j = classify_scene(s, RuleConfig{});
  EXPECT_TRUE(j.obstruction);
  EXPECT_FALSE(j.interaction);
}

TEST(Classify, ThresholdsAreStrict) {
  RuleConfig cfg;
  cfg.t_interact_m = 0.5;
  cfg.corridor_halfwidth_m = 0.25;
  // human exactly 0.5 from the instrument and exactly 0.25 from the path
  const Scene s = scene_with({{ClassLabel::HumanChemist, 0, {3, 0.25, 0}},
                              {ClassLabel::Instrument, 0, {3, 0.75, 0}}},
                             Position3{6, 0, 0});
  auto j = classify_scene(s, cfg);
  EXPECT_FALSE(j.interaction);
  EXPECT_FALSE(j.obstruction);
  cfg.t_interact_m = std::nextafter(0.5, 1.0);
  j = classify_scene(s, cfg);
  EXPECT_TRUE(j.interaction);
  EXPECT_TRUE(j.obstruction);
}

TEST(Classify, GoalFallbackUsesHumanRobotDistance) {
  const Scene near = scene_with({{ClassLabel::HumanChemist, 0, {1.0, 0, 0}},
                                 {ClassLabel::Fumehood, 0, {7, 2, 0}}},
                                std::nullopt);
  EXPECT_TRUE(classify_scene(near, RuleConfig{}).obstruction);
  RuleConfig no_fallback;
  no_fallback.t_obstruct_m.reset();
  EXPECT_THROW(classify_scene(near, no_fallback), NoGoal);
}

TEST(Classify, NeverEmitsFourthClass) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> t(0.05, 2.5);
  for (int i = 0; i < 5000; ++i) {
    RuleConfig cfg;
    cfg.t_interact_m = t(g);
    cfg.corridor_halfwidth_m = t(g);
    const auto j = classify_scene(random_scene(g), cfg);
    EXPECT_FALSE(!j.obstruction && j.interaction);
    EXPECT_TRUE(j.consistent);
  }
}

TEST(Classify, MonotoneInThresholds) {
  std::mt19937_64 g(4);
  for (int i = 0; i < 3000; ++i) {
    const Scene s = random_scene(g);
    RuleConfig small, big;
    small.t_interact_m = 0.5;
    big.t_interact_m = 1.5;
    small.corridor_halfwidth_m = 0.3;
    big.corridor_halfwidth_m = 0.9;
    const auto a = classify_scene(s, small), b = classify_scene(s, big);
    EXPECT_TRUE(!a.interaction || b.interaction);
    EXPECT_TRUE(!a.obstruction || b.obstruction);
  }
}

TEST(PointSegment, Examples) {
  EXPECT_EQ(point_segment_distance({0, 1, 0}, {-1, 0, 0}, {1, 0, 0}), 1.0);
  EXPECT_EQ(point_segment_distance({2, 0, 0}, {0, 0, 0}, {1, 0, 0}), 1.0);
  EXPECT_EQ(point_segment_distance({0, 3, 4}, {0, 0, 0}, {0, 0, 0}), 5.0);
}

TEST(PointSegment, MatchesDenseSampling) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const Position3 p{u(g), u(g), u(g)}, a{u(g), u(g), u(g)}, b{u(g), u(g), u(g)};
    double best = INFINITY;
    for (int k = 0; k <= 10000; ++k) {
      const double t = k * 1e-4;
      const double x = a.x + t * (b.x - a.x) - p.x;
      const double y = a.y + t * (b.y - a.y) - p.y;
      const double z = a.z + t * (b.z - a.z) - p.z;
      best = std::min(best, std::sqrt(x * x + y * y + z * z));
    }
    const double d = point_segment_distance(p, a, b);
    EXPECT_NEAR(d, best, 1e-3);
    EXPECT_LE(d, best + 1e-12);
  }
}

TEST(Classes, BijectionAndInconsistency) {
  for (ScenarioClass c : kAllClasses) {
    const TruthLabels l = labels_of(c);
    EXPECT_EQ(to_class(l.obstruction, l.interaction), c);
  }
  EXPECT_EQ(to_class(true, true), ScenarioClass::ObstructInteract);
  EXPECT_EQ(to_class(false, false), ScenarioClass::Neither);
  EXPECT_EQ(to_class(true, false), ScenarioClass::ObstructOnly);
  EXPECT_THROW(to_class(false, true), InconsistentLabels);
  const auto j = SceneJudgment::make(false, true, "", JudgmentSource::Mock);
  EXPECT_FALSE(j.consistent);
}

TEST(RuleConfigText, ParsesAndRejects) {
  const RuleConfig cfg = parse_rule_config("# thresholds\nt_interact_m = 1.0\nt_obstruct_m=none\n");
  EXPECT_EQ(cfg.t_interact_m, 1.0);
  EXPECT_EQ(cfg.corridor_halfwidth_m, 0.6);
  EXPECT_FALSE(cfg.t_obstruct_m.has_value());
  EXPECT_THROW(parse_rule_config("t_unknown = 1"), ConfigError);
  EXPECT_THROW(parse_rule_config("t_interact_m = -1"), ConfigError);
  EXPECT_THROW(parse_rule_config("t_interact_m = abc"), ConfigError);
}

TEST(FocusEquipment, NearestToHuman) {
  const Scene s = scene_with({{ClassLabel::HumanChemist, 0, {3, 1, 0}},
                              {ClassLabel::Fumehood, 0, {7, 0, 0}},
                              {ClassLabel::Instrument, 0, {3, 1.5, 0}}},
                             Position3{6, 0, 0});
  EXPECT_EQ(focus_equipment(s, distance_matrix(s)), ClassLabel::Instrument);
}
