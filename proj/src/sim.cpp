#include "labmate/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "labmate/errors.hpp"
#include "labmate/parallel.hpp"
#include "labmate/rng.hpp"

namespace labmate {
namespace {

using json = nlohmann::json;

// Generated humans keep this clearance from every threshold so that rounding
// the emitted coordinates can never change a label.
constexpr double kMargin = 0.05;
constexpr int kMaxAttempts = 4000;
constexpr double kStandoff = 0.9;
constexpr double kWallInset = 0.4;

enum class Role { Interact, Corridor, Away };

double round6(double v) {
  const double r = std::round(v * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;
}

Position3 round6(const Position3& p) { return {round6(p.x), round6(p.y), round6(p.z)}; }

bool inside(const Position3& p, const RoomBounds& room) {
  return p.x >= 0.3 && p.x <= room.length_m - 0.2 && std::abs(p.y) <= room.width_m / 2 - 0.2;
}

/// Point `standoff` metres in front of a piece of equipment, on the line back
/// toward the robot.
Position3 front_of(const Position3& e, double standoff) {
  const double r = std::hypot(e.x, e.y);
  return {e.x - standoff * e.x / r, e.y - standoff * e.y / r, 0.0};
}

std::uint64_t scene_seed(const ScenarioSpec& spec, std::uint64_t index) {
  return rng::mix(rng::mix(spec.seed, static_cast<std::uint64_t>(spec.scenario) + 1), index);
}

struct Layout {
  std::vector<SceneObject> equipment;
  Position3 goal;
  /// Equipment a human "uses" in an Interact placement; -1 picks at random.
  int interact_subject = -1;
};

Layout make_layout(const ScenarioSpec& spec, rng::Engine& g) {
  const RoomBounds& room = spec.room;
  const double half = room.width_m / 2;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Layout layout;
    const SceneObject hood{ClassLabel::Fumehood, 0,
                           {room.length_m - kWallInset, rng::uniform(g, -half + 1.0, half - 1.0),
                            0.0}};
    const double side = rng::uniform01(g) < 0.5 ? -1.0 : 1.0;
    const SceneObject bench{ClassLabel::Instrument, 0,
                            {rng::uniform(g, 2.5, room.length_m - 1.5), side * (half - kWallInset),
                             0.0}};
    switch (spec.scenario) {
      case Scenario::S1: {
        const bool hood_target = rng::uniform01(g) < 0.5;
        layout.equipment = {hood, bench};
        layout.interact_subject = hood_target ? 0 : 1;
        layout.goal = front_of(layout.equipment[layout.interact_subject].position, kStandoff);
        break;
      }
      case Scenario::S2: {
        layout.goal = front_of(hood.position, kStandoff);
        // An instrument beside the corridor, partway to the fumehood.
        const double s = rng::uniform(g, 0.35, 0.65);
        const double offset = rng::uniform(g, 1.0, 1.5) * side;
        const double len = std::hypot(layout.goal.x, layout.goal.y);
        const Position3 normal{-layout.goal.y / len, layout.goal.x / len, 0.0};
        SceneObject beside{ClassLabel::Instrument, 0, s * layout.goal + offset * normal};
        layout.equipment = {hood, beside};
        layout.interact_subject = 1;
        break;
      }
      case Scenario::S3:
      case Scenario::Unknown: {
        layout.equipment = {hood, bench};
        if (rng::uniform01(g) < 0.5) {
          layout.equipment.push_back(SceneObject{
              ClassLabel::Instrument, 1,
              {rng::uniform(g, 2.5, room.length_m - 1.5), -side * (half - kWallInset), 0.0}});
        }
        const auto target = rng::below(g, layout.equipment.size());
        layout.goal = front_of(layout.equipment[target].position, kStandoff);
        layout.interact_subject = -1;
        break;
      }
    }
    const bool ok = std::all_of(layout.equipment.begin(), layout.equipment.end(),
                                [&](const SceneObject& e) { return inside(e.position, room); });
    if (ok && inside(layout.goal, room)) {
      return layout;
    }
  }
  throw InfeasiblePlacement("could not lay out equipment in the configured room");
}

struct Placement {
  double equipment_m;
  double path_m;
};

Placement measure(const Position3& p, const Layout& layout) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : layout.equipment) best = std::min(best, distance(p, e.position));
  return {best, point_segment_distance(p, Position3{}, layout.goal)};
}

bool role_holds(Role role, const Placement& m, const RuleConfig& rules) {
  if (std::abs(m.equipment_m - rules.t_interact_m) < kMargin ||
      std::abs(m.path_m - rules.corridor_halfwidth_m) < kMargin) {
    return false;
  }
  const bool interacting = m.equipment_m < rules.t_interact_m;
  const bool in_path = m.path_m < rules.corridor_halfwidth_m;
  switch (role) {
    case Role::Interact:
      return interacting;
    case Role::Corridor:
      return in_path && !interacting;
    case Role::Away:
      return !in_path && !interacting;
  }
  return false;
}

Position3 propose(Role role, const Layout& layout, const ScenarioSpec& spec, rng::Engine& g) {
  const RuleConfig& rules = spec.rules;
  switch (role) {
    case Role::Interact: {
      const auto subject = layout.interact_subject >= 0
                               ? static_cast<std::size_t>(layout.interact_subject)
                               : rng::below(g, layout.equipment.size());
      const Position3& e = layout.equipment[subject].position;
      const double theta = rng::uniform(g, 0.0, 6.283185307179586);
      const double r = rng::uniform(g, 0.25, std::max(0.25, rules.t_interact_m - kMargin));
      return {e.x + r * std::cos(theta), e.y + r * std::sin(theta), 0.0};
    }
    case Role::Corridor: {
      const double s = rng::uniform(g, 0.15, 0.95);
      const double w = std::max(0.0, rules.corridor_halfwidth_m - kMargin);
      const double lateral = rng::uniform(g, -w, w);
      const double len = std::hypot(layout.goal.x, layout.goal.y);
      const Position3 normal{-layout.goal.y / len, layout.goal.x / len, 0.0};
      return s * layout.goal + lateral * normal;
    }
    case Role::Away:
      return {rng::uniform(g, 0.5, spec.room.length_m - 0.3),
              rng::uniform(g, -spec.room.width_m / 2 + 0.3, spec.room.width_m / 2 - 0.3), 0.0};
  }
  return {};
}

std::vector<Role> roles_for(const ScenarioSpec& spec, ScenarioClass cls, rng::Engine& g) {
  const std::size_t humans = spec.scenario == Scenario::S3 ? 2 + rng::below(g, 2) : 1;
  std::vector<Role> roles;
  switch (cls) {
    case ScenarioClass::ObstructInteract:
      roles.push_back(Role::Interact);
      while (roles.size() < humans) {
        roles.push_back(static_cast<Role>(rng::below(g, 3)));
      }
      break;
    case ScenarioClass::ObstructOnly:
      roles.push_back(Role::Corridor);
      while (roles.size() < humans) {
        roles.push_back(rng::below(g, 2) == 0 ? Role::Corridor : Role::Away);
      }
      break;
    case ScenarioClass::Neither:
      roles.assign(humans, Role::Away);
      break;
  }
  rng::shuffle(roles.begin(), roles.end(), g);
  return roles;
}

std::string make_scene_id(const ScenarioSpec& spec, std::uint64_t index) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s-%llu-%06llu", std::string(to_string(spec.scenario)).c_str(),
                static_cast<unsigned long long>(spec.seed),
                static_cast<unsigned long long>(index));
  return buf;
}

Scene apply_noise(const Scene& clean, const NoiseModel& noise, rng::Engine& g) {
  Scene out = clean;
  out.objects.clear();
  for (const auto& o : clean.objects) {
    // Draw every variate unconditionally so the streams do not depend on
    // which knobs are zero.
    const bool dropped = rng::uniform01(g) < noise.dropout_p;
    const Position3 jitter{rng::normal(g), rng::normal(g), rng::normal(g)};
    const double radial = rng::normal(g);
    if (dropped) {
      continue;
    }
    Position3 p = o.position + noise.pos_sigma_m * jitter;
    const double r = p.norm();
    if (r > 0.0) {
      p = p + (noise.depth_sigma_m * radial / r) * p;
    }
    out.objects.push_back({o.label, o.instance_id, round6(p)});
  }
  return out;
}

}  // namespace

void NoiseModel::validate() const {
  if (!(pos_sigma_m >= 0.0) || !(depth_sigma_m >= 0.0)) {
    throw ConfigError("noise standard deviations must be >= 0");
  }
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0)) {
    throw ConfigError("dropout_p must lie in [0, 1]");
  }
}

void ScenarioSpec::validate() const {
  if (count < 1) throw ConfigError("count must be >= 1");
  if (scenario == Scenario::Unknown) throw ConfigError("scenario must be s1, s2 or s3");
  noise.validate();
  rules.validate();
  if (!(occupancy_s >= 0.0)) throw ConfigError("occupancy_s must be >= 0");
  double sum = 0.0;
  for (double p : class_mix) {
    if (!(p >= 0.0)) throw ConfigError("class_mix entries must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class_mix must sum to 1");
  if (room.length_m < 3.0 || room.width_m < 2.5) throw ConfigError("room is too small");
}

std::array<std::uint64_t, 3> allocate_classes(std::uint64_t count,
                                              const std::array<double, 3>& mix) {
  std::array<std::uint64_t, 3> out{};
  std::array<double, 3> frac{};
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(count) * mix[i];
    out[i] = static_cast<std::uint64_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < count; k = (k + 1) % 3) {
    ++out[order[k]];
    ++assigned;
  }
  return out;
}

std::vector<ScenarioClass> class_schedule(const ScenarioSpec& spec) {
  const auto counts = allocate_classes(spec.count, spec.class_mix);
  std::vector<ScenarioClass> schedule;
  schedule.reserve(spec.count);
  for (std::size_t c = 0; c < 3; ++c) {
    schedule.insert(schedule.end(), counts[c], kAllClasses[c]);
  }
  rng::Engine g(rng::mix(scene_seed(spec, ~std::uint64_t{0}), 0xC1A55E5ULL));
  rng::shuffle(schedule.begin(), schedule.end(), g);
  return schedule;
}

GeneratedScene generate_scene_with_class(const ScenarioSpec& spec, std::uint64_t index,
                                         ScenarioClass cls) {
  spec.validate();
  const std::uint64_t seed = scene_seed(spec, index);
  rng::Engine g(seed);
  const Layout layout = make_layout(spec, g);
  const std::vector<Role> roles = roles_for(spec, cls, g);

  std::vector<Position3> humans;
  for (Role role : roles) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const Position3 p = propose(role, layout, spec, g);
      if (!inside(p, spec.room) || !role_holds(role, measure(p, layout), spec.rules)) {
        continue;
      }
      const bool crowded = std::any_of(humans.begin(), humans.end(),
                                       [&](const Position3& h) { return distance(h, p) < 0.4; });
      if (crowded) {
        continue;
      }
      humans.push_back(p);
      placed = true;
    }
    if (!placed) {
      throw InfeasiblePlacement("cannot place a human for class " + std::string(to_string(cls)) +
                                " in " + std::string(to_string(spec.scenario)) +
                                " with the configured thresholds and room");
    }
  }

  GeneratedScene out;
  out.cls = cls;
  Scene& clean = out.clean;
  clean.scene_id = make_scene_id(spec, index);
  clean.scenario = spec.scenario;
  clean.goal = round6(layout.goal);
  for (std::size_t h = 0; h < humans.size(); ++h) {
    clean.objects.push_back({ClassLabel::HumanChemist, static_cast<int>(h), round6(humans[h])});
  }
  for (const auto& e : layout.equipment) {
    clean.objects.push_back({e.label, e.instance_id, round6(e.position)});
  }
  const TruthLabels truth = classify_scene(clean, spec.rules).labels();
  if (!(truth == labels_of(cls))) {
    throw std::logic_error("generated scene " + clean.scene_id + " disagrees with its class");
  }
  clean.truth = truth;

  rng::Engine noise_gen(rng::mix(seed, 0x0015EULL));
  out.scene = apply_noise(clean, spec.noise, noise_gen);
  return out;
}

GeneratedScene generate_scene_detailed(const ScenarioSpec& spec, std::uint64_t index) {
  if (index >= spec.count) {
    throw std::out_of_range("scene index " + std::to_string(index) + " >= count " +
                            std::to_string(spec.count));
  }
  return generate_scene_with_class(spec, index, class_schedule(spec)[index]);
}

Scene generate_scene(const ScenarioSpec& spec, std::uint64_t index) {
  return generate_scene_detailed(spec, index).scene;
}

std::uint64_t generate_dataset(const ScenarioSpec& spec, std::ostream& out) {
  spec.validate();
  if (!out) {
    throw IoError("dataset sink is not writable");
  }
  const auto schedule = class_schedule(spec);
  std::uint64_t written = 0;
  for (std::uint64_t i = 0; i < spec.count; ++i) {
    const GeneratedScene g = generate_scene_with_class(spec, i, schedule[i]);
    out << scene_to_json(g.scene).dump() << '\n';
    if (!out) {
      throw IoError("write failed after " + std::to_string(written) + " records");
    }
    ++written;
  }
  out.flush();
  if (!out) {
    throw IoError("flush failed");
  }
  return written;
}

std::uint64_t generate_dataset(const ScenarioSpec& spec, const std::string& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  return generate_dataset(spec, file);
}

namespace {

class EpisodeRunner {
 public:
  EpisodeRunner(const ScenarioSpec& spec, Policy policy, const BackendConfig& backend,
                const EpisodeConfig& cfg)
      : spec_(spec),
        policy_(policy),
        cfg_(cfg),
        world_(generate_scene_detailed(spec, cfg.index)),
        backend_(make_backend(backend, spec.rules)) {
    trace_.policy = policy;
    trace_.scene_id = world_.scene.scene_id;
  }

  EpisodeTrace run() {
    for (long tick = 0;; ++tick) {
      t_ = static_cast<double>(tick);
      if (t_ > cfg_.horizon_s) {
        throw Error("episode " + trace_.scene_id + " did not reach its goal within " +
                    std::to_string(cfg_.horizon_s) + " s");
      }
      if (is_moving(fsm_.state) && progress_ >= cfg_.travel_s - 1e-9) {
        apply(event::GoalReached{});
        trace_.arrived = true;
        trace_.duration_s = t_;
        return trace_;
      }
      if (is_waiting(fsm_.state) && !blocked()) {
        apply(event::PathClear{});
      }
      if (deadline_ && t_ >= *deadline_ - 1e-9) {
        deadline_.reset();
        apply(event::Timeout{});
      }
      drain_replies();

      if (fsm_.state == RobotState::Navigating && humans_present()) {
        apply(event::Judgment{perceive(), focus_});
        drain_replies();
      }
      if (is_moving(fsm_.state) && blocked()) {
        // Safety scanner stop: the path is physically blocked.
        apply(event::Judgment{SceneJudgment::make(true, false, "", JudgmentSource::Oracle),
                              focus_});
        drain_replies();
      }

      if (is_moving(fsm_.state) && !blocked()) {
        progress_ += reduced_speed_ ? 0.5 : 1.0;
      }
      account(1.0);
    }
  }

 private:
  bool humans_present() const {
    return t_ < spec_.occupancy_s && world_.clean.human_count() > 0;
  }

  bool blocked() const { return humans_present() && world_.clean.truth->obstruction; }

  SceneJudgment perceive() {
    Scene view = world_.scene;
    view.scene_id += "@t" + std::to_string(static_cast<long>(t_));
    const DistanceReport report = distance_matrix(view);
    focus_ = focus_equipment(view, report);
    try {
      const PromptBundle bundle = build_prompt(view, report, PromptVariant::VisionOnly, spec_.rules);
      return backend_->query(bundle, view).to_judgment(backend_->source());
    } catch (const Error& e) {
      throw BackendError(t_, e.what());
    }
  }

  void apply(const DecisionEvent& ev) {
    const StepResult r = step_fsm(fsm_, ev, policy_, cfg_.fsm);
    if (!(r.next == fsm_)) {
      deadline_.reset();
      pending_.reset();
    }
    if (r.next.state != RobotState::Proceeding) {
      reduced_speed_ = false;
    }
    fsm_ = r.next;
    trace_.transitions.push_back({t_, fsm_.state, describe(ev)});
    for (const Action& a : r.actions) {
      switch (a.kind) {
        case ActionKind::EmitMessage:
          trace_.dialogue.emplace_back("robot", a.text);
          if (next_reply_ < cfg_.replies.size()) {
            pending_ = std::make_pair(t_ + cfg_.reply_latency_s, cfg_.replies[next_reply_++]);
          }
          break;
        case ActionKind::StartTimer:
          deadline_ = t_ + a.seconds;
          break;
        case ActionKind::ReducedSpeed:
          reduced_speed_ = true;
          break;
        case ActionKind::Reallocate:
        case ActionKind::Resume:
          break;
      }
    }
  }

  void drain_replies() {
    while (pending_ && pending_->first <= t_ + 1e-9) {
      const std::string reply = pending_->second;
      pending_.reset();
      trace_.dialogue.emplace_back("human", reply);
      apply(event::HumanReply{reply});
    }
  }

  void account(double dt) {
    switch (fsm_.state) {
      case RobotState::WaitingOnHuman:
      case RobotState::PassiveWaiting:
        trace_.idle_s += dt;
        break;
      case RobotState::Reallocated:
        trace_.reallocated_s += dt;
        break;
      case RobotState::Querying:
        trace_.querying_s += dt;
        break;
      default:
        break;
    }
  }

  const ScenarioSpec& spec_;
  Policy policy_;
  const EpisodeConfig& cfg_;
  GeneratedScene world_;
  std::unique_ptr<Backend> backend_;
  EpisodeTrace trace_;
  FsmState fsm_{};
  double t_ = 0.0;
  double progress_ = 0.0;
  bool reduced_speed_ = false;
  ClassLabel focus_ = ClassLabel::Fumehood;
  std::optional<double> deadline_;
  std::optional<std::pair<double, std::string>> pending_;
  std::size_t next_reply_ = 0;
};

}  // namespace

EpisodeTrace run_episode(const ScenarioSpec& spec, Policy policy, const BackendConfig& backend,
                         const EpisodeConfig& cfg) {
  spec.validate();
  return EpisodeRunner(spec, policy, backend, cfg).run();
}

json trace_to_json(const EpisodeTrace& trace) {
  json transitions = json::array();
  for (const auto& e : trace.transitions) {
    transitions.push_back(
        {{"t", e.t}, {"state", std::string(to_string(e.state))}, {"event", e.event}});
  }
  json dialogue = json::array();
  for (const auto& [speaker, line] : trace.dialogue) {
    dialogue.push_back({{"speaker", speaker}, {"text", line}});
  }
  return {{"scene_id", trace.scene_id},
          {"policy", std::string(to_string(trace.policy))},
          {"arrived", trace.arrived},
          {"duration_s", trace.duration_s},
          {"idle_s", trace.idle_s},
          {"reallocated_s", trace.reallocated_s},
          {"querying_s", trace.querying_s},
          {"transitions", std::move(transitions)},
          {"dialogue", std::move(dialogue)}};
}

PolicyComparison compare_policies(const ScenarioSpec& spec, const BackendConfig& backend,
                                  std::uint64_t episodes, const EpisodeConfig& cfg,
                                  unsigned jobs) {
  if (episodes < 1) {
    throw ConfigError("episodes must be >= 1");
  }
  ScenarioSpec world = spec;
  world.count = episodes;
  world.validate();

  std::vector<double> proactive(episodes), passive(episodes), reallocated(episodes);
  parallel_for(episodes, jobs, [&](std::size_t i) {
    EpisodeConfig local = cfg;
    local.index = i;
    const EpisodeTrace a = run_episode(world, Policy::Proactive, backend, local);
    const EpisodeTrace b = run_episode(world, Policy::Passive, backend, local);
    proactive[i] = a.idle_s;
    reallocated[i] = a.reallocated_s;
    passive[i] = b.idle_s;
  });

  PolicyComparison out;
  out.episodes = episodes;
  out.saved.resize(episodes);
  const double n = static_cast<double>(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    out.saved[i] = passive[i] - proactive[i];
    out.mean_idle_proactive += proactive[i] / n;
    out.mean_idle_passive += passive[i] / n;
    out.mean_reallocated_proactive += reallocated[i] / n;
    if (out.saved[i] < 0.0) ++out.dominance_violations;
  }
  out.mean_saved = std::accumulate(out.saved.begin(), out.saved.end(), 0.0) / n;
  double blocked_total = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    if (passive[i] > 0.0) {
      ++out.blocked_pairs;
      blocked_total += out.saved[i];
    }
  }
  if (out.blocked_pairs > 0) {
    out.mean_saved_blocked = blocked_total / static_cast<double>(out.blocked_pairs);
  }
  out.min_saved = *std::min_element(out.saved.begin(), out.saved.end());
  if (episodes > 1) {
    double ss = 0.0;
    for (double s : out.saved) ss += (s - out.mean_saved) * (s - out.mean_saved);
    out.sd_saved = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

json comparison_to_json(const PolicyComparison& s) {
  return {{"episodes", s.episodes},
          {"mean_idle_proactive_s", s.mean_idle_proactive},
          {"mean_idle_passive_s", s.mean_idle_passive},
          {"mean_reallocated_proactive_s", s.mean_reallocated_proactive},
          {"mean_saved_s", s.mean_saved},
          {"blocked_pairs", s.blocked_pairs},
          {"mean_saved_blocked_s", s.mean_saved_blocked},
          {"sd_saved_s", s.sd_saved},
          {"min_saved_s", s.min_saved},
          {"dominance_violations", s.dominance_violations}};
}

}  // namespace labmate
