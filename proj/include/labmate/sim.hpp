#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "labmate/decision.hpp"
#include "labmate/perception.hpp"
#include "labmate/reasoning.hpp"
#include "labmate/rules.hpp"

namespace labmate {

struct NoiseModel {
  double pos_sigma_m = 0.0;
  double depth_sigma_m = 0.0;
  double dropout_p = 0.0;

  void validate() const;
};

/// Room footprint in the robot frame: x in [0, length_m], y in
/// [-width_m / 2, width_m / 2]. The robot starts at the origin facing +x.
struct RoomBounds {
  double length_m = 8.0;
  double width_m = 6.0;
};

struct ScenarioSpec {
  Scenario scenario = Scenario::S1;
  std::uint64_t count = 1;
  std::uint64_t seed = 0;
  NoiseModel noise{};
  double occupancy_s = 60.0;
  /// Probabilities in kAllClasses order: obstruct+interact, neither, obstruct-only.
  std::array<double, 3> class_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  RoomBounds room{};
  RuleConfig rules{};

  void validate() const;
};

/// Largest-remainder allocation of `count` records over the class mix; ties
/// in the fractional part go to the earlier class.
std::array<std::uint64_t, 3> allocate_classes(std::uint64_t count,
                                              const std::array<double, 3>& mix);

/// Class assigned to every index of the spec, in index order.
std::vector<ScenarioClass> class_schedule(const ScenarioSpec& spec);

struct GeneratedScene {
  Scene scene;  ///< what the sensors report: noisy, possibly with dropouts
  Scene clean;  ///< the world; truth labels were computed from this
  ScenarioClass cls = ScenarioClass::Neither;
};

GeneratedScene generate_scene_with_class(const ScenarioSpec& spec, std::uint64_t index,
                                         ScenarioClass cls);
GeneratedScene generate_scene_detailed(const ScenarioSpec& spec, std::uint64_t index);
/// The emitted (sensor) scene, with truth populated.
Scene generate_scene(const ScenarioSpec& spec, std::uint64_t index);

std::uint64_t generate_dataset(const ScenarioSpec& spec, std::ostream& out);
std::uint64_t generate_dataset(const ScenarioSpec& spec, const std::string& path);

struct EpisodeConfig {
  FsmConfig fsm{};
  /// Scripted human replies, consumed one per robot question.
  std::vector<std::string> replies{"Yes, please wait a moment."};
  double travel_s = 10.0;
  double reply_latency_s = 0.0;
  double horizon_s = 100000.0;
  std::uint64_t index = 0;
};

struct TraceEntry {
  double t = 0.0;
  RobotState state = RobotState::Navigating;
  std::string event;
};

struct EpisodeTrace {
  Policy policy = Policy::Proactive;
  std::string scene_id;
  std::vector<TraceEntry> transitions;
  std::vector<std::pair<std::string, std::string>> dialogue;  ///< (speaker, text)
  double idle_s = 0.0;
  double reallocated_s = 0.0;
  double querying_s = 0.0;
  double duration_s = 0.0;
  bool arrived = false;
};

/// 1 Hz discrete-event episode: the robot perceives at each tick while
/// navigating, judges humans through the backend and drives the FSM; every
/// human leaves after `spec.occupancy_s`.
EpisodeTrace run_episode(const ScenarioSpec& spec, Policy policy, const BackendConfig& backend,
                         const EpisodeConfig& cfg = {});

nlohmann::json trace_to_json(const EpisodeTrace& trace);

struct PolicyComparison {
  std::uint64_t episodes = 0;
  double mean_idle_proactive = 0.0;
  double mean_idle_passive = 0.0;
  double mean_reallocated_proactive = 0.0;
  double mean_saved = 0.0;
  double sd_saved = 0.0;
  double min_saved = 0.0;
  std::uint64_t dominance_violations = 0;
  /// Pairs in which the passive robot waited at all, and their mean saving.
  std::uint64_t blocked_pairs = 0;
  double mean_saved_blocked = 0.0;
  std::vector<double> saved;  ///< per matched pair, passive idle minus proactive idle
};

/// Runs matched (same world, same backend seed) proactive/passive pairs for
/// indices 0..episodes-1. `jobs == 0` uses the hardware concurrency.
PolicyComparison compare_policies(const ScenarioSpec& spec, const BackendConfig& backend,
                                  std::uint64_t episodes, const EpisodeConfig& cfg = {},
                                  unsigned jobs = 0);

nlohmann::json comparison_to_json(const PolicyComparison& summary);

}  // namespace labmate
