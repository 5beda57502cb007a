#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "labmate/perception.hpp"

namespace labmate {

/// Distance thresholds for the geometric oracle. Comparisons are strict: a
/// distance exactly equal to a threshold does not trigger the label.
struct RuleConfig {
  double t_interact_m = 0.8;
  double corridor_halfwidth_m = 0.6;
  /// Human-robot distance used for obstruction when a scene has no goal.
  std::optional<double> t_obstruct_m = 1.2;

  void validate() const;
};

/// Parses a `key = value` table. Blank lines and `#` comments are skipped;
/// unknown keys are errors. `t_obstruct_m = none` clears the fallback.
RuleConfig parse_rule_config(std::string_view text, RuleConfig base = {});
void apply_rule_setting(RuleConfig& cfg, const std::string& key, const std::string& value);

enum class JudgmentSource { Oracle, Mock, Live };

std::string_view to_string(JudgmentSource source);

struct SceneJudgment {
  bool obstruction = false;
  bool interaction = false;
  std::string message;
  JudgmentSource source = JudgmentSource::Oracle;
  bool consistent = true;

  static SceneJudgment make(bool obstruction, bool interaction, std::string message,
                            JudgmentSource source);
  TruthLabels labels() const { return {obstruction, interaction}; }
};

enum class ScenarioClass { ObstructInteract, Neither, ObstructOnly };

inline constexpr std::array<ScenarioClass, 3> kAllClasses = {
    ScenarioClass::ObstructInteract, ScenarioClass::Neither, ScenarioClass::ObstructOnly};

std::string_view to_string(ScenarioClass cls);
ScenarioClass to_class(bool obstruction, bool interaction);
ScenarioClass to_class(const SceneJudgment& judgment);
TruthLabels labels_of(ScenarioClass cls);

double point_segment_distance(const Position3& p, const Position3& a, const Position3& b);

SceneJudgment classify_scene(const Scene& scene, const RuleConfig& cfg);
/// Equipment nearest to any human; the subject of an interaction message.
/// Falls back to the fumehood when the scene has no equipment or no human.
ClassLabel focus_equipment(const Scene& scene, const DistanceReport& report);
SceneJudgment classify_scene(const Scene& scene, const DistanceReport& report,
                             const RuleConfig& cfg);

}  // namespace labmate
