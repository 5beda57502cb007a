#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "labmate/perception.hpp"
#include "labmate/rules.hpp"

namespace labmate {

enum class RobotState {
  Navigating,
  Querying,
  WaitingOnHuman,
  Reallocated,
  PassiveWaiting,
  Proceeding,
  Arrived,
};

inline constexpr RobotState kAllStates[] = {
    RobotState::Navigating,     RobotState::Querying,   RobotState::WaitingOnHuman,
    RobotState::Reallocated,    RobotState::PassiveWaiting, RobotState::Proceeding,
    RobotState::Arrived};

std::string_view to_string(RobotState state);
bool is_waiting(RobotState state);
bool is_moving(RobotState state);

enum class Policy { Proactive, Passive };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view name);

/// Which question the robot asked; decides how a bare "yes"/"no" is read.
enum class QueryKind { OccupiedEquipment, PassageRequest };

namespace event {
struct Judgment {
  SceneJudgment judgment;
  ClassLabel equipment = ClassLabel::Fumehood;
};
struct HumanReply {
  std::string text;
};
struct Timeout {};
struct PathClear {};
struct GoalReached {};
}  // namespace event

using DecisionEvent = std::variant<event::Judgment, event::HumanReply, event::Timeout,
                                   event::PathClear, event::GoalReached>;

std::string describe(const DecisionEvent& ev);

enum class ActionKind {
  EmitMessage,   ///< say `text` to the human
  StartTimer,    ///< arm a timeout `seconds` from now (replaces any armed timer)
  Reallocate,    ///< switch to other work until the path clears
  Resume,        ///< continue toward the goal
  ReducedSpeed,  ///< continue, but slowly: the human is still close
};

struct Action {
  ActionKind kind = ActionKind::EmitMessage;
  std::string text;
  double seconds = 0.0;

  friend bool operator==(const Action&, const Action&) = default;
};

struct FsmConfig {
  double timeout_s = 30.0;
  double reallocation_delay_s = 5.0;
};

/// Machine state: the robot state plus the little dialogue memory the
/// transition table needs (which question is pending, and whether the robot
/// has already re-asked once).
struct FsmState {
  RobotState state = RobotState::Navigating;
  QueryKind query = QueryKind::OccupiedEquipment;
  bool reasked = false;

  friend bool operator==(const FsmState&, const FsmState&) = default;
};

struct StepResult {
  FsmState next;
  std::vector<Action> actions;
};

/// Pure transition function. Throws UndefinedTransition for states the policy
/// can never occupy (dialogue states under Passive).
StepResult step_fsm(const FsmState& state, const DecisionEvent& ev, Policy policy,
                    const FsmConfig& cfg = {});
StepResult step_fsm(RobotState state, const DecisionEvent& ev, Policy policy,
                    const FsmConfig& cfg = {});

std::string compose_message(bool obstruction, bool interaction, ClassLabel equipment);

enum class ReplyIntent { WaitRequested, ProceedGranted, Unclear };

std::string_view to_string(ReplyIntent intent);
ReplyIntent interpret_reply(std::string_view text,
                            QueryKind context = QueryKind::OccupiedEquipment);

inline constexpr std::string_view kReaskMessage =
    "Sorry, I did not understand. Should I wait, or may I go ahead?";

}  // namespace labmate
