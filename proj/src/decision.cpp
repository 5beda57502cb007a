#include "labmate/decision.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "labmate/errors.hpp"
#include "labmate/text.hpp"

namespace labmate {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array kNegatedWait = {"no need to wait", "don't wait", "dont wait",
                                     "do not wait", "needn't wait", "need not wait"};
constexpr std::array kWait = {"wait",   "moment", "minute", "hold on", "hold", "busy",
                              "not yet", "later", "sec",   "second",  "stay"};
constexpr std::array kProceed = {"go ahead", "go on",   "proceed",  "carry on", "come through",
                                 "pass",     "go",      "continue", "all clear", "done",
                                 "finished", "you can", "be my guest"};
constexpr std::array kAffirm = {"yes", "yeah", "yep", "sure", "ok", "okay", "certainly", "please"};
constexpr std::array kNegative = {"no", "nope", "nah"};

std::string normalize(std::string_view in) {
  std::string out = " ";
  for (unsigned char c : in) {
    if (std::isalnum(c) || c == '\'') {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (out.back() != ' ') {
      out.push_back(' ');
    }
  }
  if (out.back() != ' ') out.push_back(' ');
  return out;
}

template <std::size_t N>
bool any_phrase(const std::string& norm, const std::array<const char*, N>& phrases) {
  return std::any_of(phrases.begin(), phrases.end(), [&](const char* p) {
    return norm.find(" " + std::string(p) + " ") != std::string::npos;
  });
}

std::string equipment_name(ClassLabel equipment) {
  std::string name(to_string(equipment));
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

[[noreturn]] void undefined(const FsmState& s, const DecisionEvent& ev, Policy policy) {
  throw UndefinedTransition("no transition from " + std::string(to_string(s.state)) + " on " +
                            describe(ev) + " under " + std::string(to_string(policy)) +
                            " policy");
}

StepResult stay(const FsmState& s) { return {s, {}}; }

StepResult to(RobotState next, std::vector<Action> actions = {}) {
  return {FsmState{next, QueryKind::OccupiedEquipment, false}, std::move(actions)};
}

StepResult on_judgment_while_moving(const event::Judgment& j, Policy policy,
                                    const FsmConfig& cfg) {
  // An inconsistent (no obstruction, interaction) pair is treated as an
  // occupied-equipment judgment: the human is at the equipment the robot needs.
  const bool blocked = j.judgment.obstruction || j.judgment.interaction;
  if (!blocked) {
    return to(RobotState::Proceeding);
  }
  if (policy == Policy::Passive) {
    return to(RobotState::PassiveWaiting);
  }
  const bool occupied = j.judgment.interaction;
  const QueryKind kind = occupied ? QueryKind::OccupiedEquipment : QueryKind::PassageRequest;
  const std::string message = compose_message(true, occupied, j.equipment);
  return {FsmState{RobotState::Querying, kind, false},
          {Action{ActionKind::EmitMessage, message, 0.0},
           Action{ActionKind::StartTimer, "", cfg.timeout_s}}};
}

StepResult on_reply_while_querying(const FsmState& s, const event::HumanReply& r,
                                   const FsmConfig& cfg) {
  switch (interpret_reply(r.text, s.query)) {
    case ReplyIntent::WaitRequested:
      return to(RobotState::WaitingOnHuman,
                {Action{ActionKind::StartTimer, "", cfg.reallocation_delay_s}});
    case ReplyIntent::ProceedGranted:
      return to(RobotState::Proceeding, {Action{ActionKind::ReducedSpeed, "", 0.0}});
    case ReplyIntent::Unclear:
      if (s.reasked) {
        return to(RobotState::PassiveWaiting);
      }
      return {FsmState{RobotState::Querying, s.query, true},
              {Action{ActionKind::EmitMessage, std::string(kReaskMessage), 0.0},
               Action{ActionKind::StartTimer, "", cfg.timeout_s}}};
  }
  return stay(s);
}

}  // namespace

std::string_view to_string(RobotState state) {
  switch (state) {
    case RobotState::Navigating:
      return "navigating";
    case RobotState::Querying:
      return "querying";
    case RobotState::WaitingOnHuman:
      return "waiting_on_human";
    case RobotState::Reallocated:
      return "reallocated";
    case RobotState::PassiveWaiting:
      return "passive_waiting";
    case RobotState::Proceeding:
      return "proceeding";
    case RobotState::Arrived:
      return "arrived";
  }
  return "unknown";
}

bool is_waiting(RobotState state) {
  return state == RobotState::Querying || state == RobotState::WaitingOnHuman ||
         state == RobotState::Reallocated || state == RobotState::PassiveWaiting;
}

bool is_moving(RobotState state) {
  return state == RobotState::Navigating || state == RobotState::Proceeding;
}

std::string_view to_string(Policy policy) {
  return policy == Policy::Proactive ? "proactive" : "passive";
}

Policy parse_policy(std::string_view name) {
  const std::string lower = text::to_lower(name);
  if (lower == "proactive") return Policy::Proactive;
  if (lower == "passive") return Policy::Passive;
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

std::string describe(const DecisionEvent& ev) {
  return std::visit(
      overloaded{[](const event::Judgment& j) {
                   return std::string("judgment(") + (j.judgment.obstruction ? "T" : "F") + "," +
                          (j.judgment.interaction ? "T" : "F") + ")";
                 },
                 [](const event::HumanReply& r) { return "reply(\"" + r.text + "\")"; },
                 [](const event::Timeout&) { return std::string("timeout"); },
                 [](const event::PathClear&) { return std::string("path_clear"); },
                 [](const event::GoalReached&) { return std::string("goal_reached"); }},
      ev);
}

StepResult step_fsm(RobotState state, const DecisionEvent& ev, Policy policy,
                    const FsmConfig& cfg) {
  return step_fsm(FsmState{state}, ev, policy, cfg);
}

StepResult step_fsm(const FsmState& s, const DecisionEvent& ev, Policy policy,
                    const FsmConfig& cfg) {
  if (policy == Policy::Passive &&
      (s.state == RobotState::Querying || s.state == RobotState::WaitingOnHuman ||
       s.state == RobotState::Reallocated)) {
    undefined(s, ev, policy);
  }
  if (s.state == RobotState::Arrived) {
    return stay(s);
  }
  if (std::holds_alternative<event::GoalReached>(ev)) {
    return to(RobotState::Arrived);
  }

  switch (s.state) {
    case RobotState::Navigating:
    case RobotState::Proceeding:
      if (const auto* j = std::get_if<event::Judgment>(&ev)) {
        return on_judgment_while_moving(*j, policy, cfg);
      }
      return stay(s);

    case RobotState::Querying:
      if (const auto* r = std::get_if<event::HumanReply>(&ev)) {
        return on_reply_while_querying(s, *r, cfg);
      }
      if (std::holds_alternative<event::Timeout>(ev)) {
        return to(RobotState::PassiveWaiting);
      }
      if (std::holds_alternative<event::PathClear>(ev)) {
        return to(RobotState::Navigating, {Action{ActionKind::Resume, "", 0.0}});
      }
      return stay(s);

    case RobotState::WaitingOnHuman:
      if (std::holds_alternative<event::Timeout>(ev)) {
        return to(RobotState::Reallocated, {Action{ActionKind::Reallocate, "", 0.0}});
      }
      if (std::holds_alternative<event::PathClear>(ev)) {
        return to(RobotState::Navigating, {Action{ActionKind::Resume, "", 0.0}});
      }
      return stay(s);

    case RobotState::Reallocated:
    case RobotState::PassiveWaiting:
      if (std::holds_alternative<event::PathClear>(ev)) {
        return to(RobotState::Navigating, {Action{ActionKind::Resume, "", 0.0}});
      }
      return stay(s);

    case RobotState::Arrived:
      break;
  }
  return stay(s);
}

std::string compose_message(bool obstruction, bool interaction, ClassLabel equipment) {
  if (!obstruction) {
    throw NoMessageNeeded();
  }
  if (interaction) {
    return "You seem to be using the " + equipment_name(equipment) +
           ". Shall I wait until you are done?";
  }
  return "Excuse me \xE2\x80\x94 may I pass to reach the " + equipment_name(equipment) + "?";
}

std::string_view to_string(ReplyIntent intent) {
  switch (intent) {
    case ReplyIntent::WaitRequested:
      return "wait_requested";
    case ReplyIntent::ProceedGranted:
      return "proceed_granted";
    case ReplyIntent::Unclear:
      return "unclear";
  }
  return "unclear";
}

ReplyIntent interpret_reply(std::string_view reply, QueryKind context) {
  const std::string norm = normalize(reply);
  if (any_phrase(norm, kNegatedWait)) {
    return ReplyIntent::ProceedGranted;
  }
  const bool wait = any_phrase(norm, kWait);
  const bool proceed = any_phrase(norm, kProceed);
  if (wait != proceed) {
    return wait ? ReplyIntent::WaitRequested : ReplyIntent::ProceedGranted;
  }
  if (wait && proceed) {
    return ReplyIntent::Unclear;
  }
  const bool yes = any_phrase(norm, kAffirm);
  const bool no = any_phrase(norm, kNegative);
  if (yes == no) {
    return ReplyIntent::Unclear;
  }
  // "Shall I wait?" and "May I pass?" invert the meaning of a bare yes.
  const bool wants_wait = (context == QueryKind::OccupiedEquipment) == yes;
  return wants_wait ? ReplyIntent::WaitRequested : ReplyIntent::ProceedGranted;
}

}  // namespace labmate
