#include "labmate/rules.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "labmate/errors.hpp"
#include "labmate/text.hpp"

namespace labmate {

void RuleConfig::validate() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(t_interact_m)) throw ConfigError("t_interact_m must be > 0");
  if (!positive(corridor_halfwidth_m)) throw ConfigError("corridor_halfwidth_m must be > 0");
  if (t_obstruct_m && !positive(*t_obstruct_m)) throw ConfigError("t_obstruct_m must be > 0");
}

void apply_rule_setting(RuleConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "t_obstruct_m" && text::to_lower(value) == "none") {
    cfg.t_obstruct_m.reset();
    return;
  }
  const double v = text::parse_double(value, key);
  if (key == "t_interact_m") {
    cfg.t_interact_m = v;
  } else if (key == "corridor_halfwidth_m") {
    cfg.corridor_halfwidth_m = v;
  } else if (key == "t_obstruct_m") {
    cfg.t_obstruct_m = v;
  } else {
    throw ConfigError("unknown rule key '" + key + "'");
  }
}

RuleConfig parse_rule_config(std::string_view text_in, RuleConfig base) {
  for (const auto& [key, value] : text::parse_key_values(text_in)) {
    apply_rule_setting(base, key, value);
  }
  base.validate();
  return base;
}

std::string_view to_string(JudgmentSource source) {
  switch (source) {
    case JudgmentSource::Oracle:
      return "oracle";
    case JudgmentSource::Mock:
      return "mock";
    case JudgmentSource::Live:
      return "live";
  }
  return "unknown";
}

SceneJudgment SceneJudgment::make(bool obstruction, bool interaction, std::string message,
                                  JudgmentSource source) {
  return {obstruction, interaction, std::move(message), source, !(interaction && !obstruction)};
}

std::string_view to_string(ScenarioClass cls) {
  switch (cls) {
    case ScenarioClass::ObstructInteract:
      return "obstruct_interact";
    case ScenarioClass::Neither:
      return "neither";
    case ScenarioClass::ObstructOnly:
      return "obstruct_only";
  }
  return "unknown";
}

ScenarioClass to_class(bool obstruction, bool interaction) {
  if (obstruction && interaction) return ScenarioClass::ObstructInteract;
  if (obstruction) return ScenarioClass::ObstructOnly;
  if (!interaction) return ScenarioClass::Neither;
  throw InconsistentLabels();
}

ScenarioClass to_class(const SceneJudgment& judgment) {
  return to_class(judgment.obstruction, judgment.interaction);
}

TruthLabels labels_of(ScenarioClass cls) {
  switch (cls) {
    case ScenarioClass::ObstructInteract:
      return {true, true};
    case ScenarioClass::Neither:
      return {false, false};
    case ScenarioClass::ObstructOnly:
      return {true, false};
  }
  return {};
}

double point_segment_distance(const Position3& p, const Position3& a, const Position3& b) {
  const Position3 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) {
    return distance(p, a);
  }
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

SceneJudgment classify_scene(const Scene& scene, const RuleConfig& cfg) {
  return classify_scene(scene, distance_matrix(scene), cfg);
}

SceneJudgment classify_scene(const Scene& scene, const DistanceReport& report,
                             const RuleConfig& cfg) {
  if (!scene.goal && !cfg.t_obstruct_m) {
    throw NoGoal();
  }
  bool interaction = false;
  bool in_path = false;
  for (const auto& human : report.humans()) {
    if (human.human_equipment_m && *human.human_equipment_m < cfg.t_interact_m) {
      interaction = true;
    }
    if (scene.goal) {
      const Position3& p = report.positions()[human.node];
      if (point_segment_distance(p, Position3{}, *scene.goal) < cfg.corridor_halfwidth_m) {
        in_path = true;
      }
    } else if (human.human_robot_m < *cfg.t_obstruct_m) {
      in_path = true;
    }
  }
  return SceneJudgment::make(interaction || in_path, interaction, "", JudgmentSource::Oracle);
}

ClassLabel focus_equipment(const Scene& scene, const DistanceReport& report) {
  ClassLabel best = ClassLabel::Fumehood;
  double best_d = 0.0;
  bool found = false;
  for (const auto& human : report.humans()) {
    for (std::size_t m = 0; m < scene.objects.size(); ++m) {
      if (!is_equipment(scene.objects[m].label)) continue;
      const double d = report.at(human.node, m + 1);
      if (!found || d < best_d) {
        best = scene.objects[m].label;
        best_d = d;
        found = true;
      }
    }
  }
  return best;
}

}  // namespace labmate
