#include "labmate/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "labmate/decision.hpp"
#include "labmate/errors.hpp"
#include "labmate/eval.hpp"
#include "labmate/text.hpp"

namespace labmate {
namespace {

using json = nlohmann::json;
using Applier = std::function<void(GlobalConfig&)>;

/// Flag whose value is applied on top of the file config, and only when given.
template <class T, class Fn>
CLI::Option* bind_flag(CLI::App* app, std::vector<Applier>& appliers, const std::string& name,
                  const std::string& help, Fn apply) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app->add_option(name, *value, help);
  appliers.push_back([opt, value, apply](GlobalConfig& g) {
    if (opt->count() > 0) apply(g, *value);
  });
  return opt;
}

void add_rule_flags(CLI::App* app, std::vector<Applier>& a) {
  bind_flag<double>(app, a, "--t-interact", "human-equipment interaction threshold in meters (0.8)",
               [](GlobalConfig& g, double v) { g.rules.t_interact_m = v; });
  bind_flag<double>(app, a, "--corridor", "obstruction corridor half-width in meters (0.6)",
               [](GlobalConfig& g, double v) { g.rules.corridor_halfwidth_m = v; });
  bind_flag<std::string>(app, a, "--t-obstruct",
                    "human-robot obstruction threshold without a goal, or 'none' (1.2)",
                    [](GlobalConfig& g, const std::string& v) {
                      apply_rule_setting(g.rules, "t_obstruct_m", v);
                    });
}

void add_backend_flags(CLI::App* app, std::vector<Applier>& a) {
  bind_flag<std::string>(app, a, "--backend", "language-model backend: mock|http",
                    [](GlobalConfig& g, const std::string& v) {
                      g.backend.kind = parse_backend_kind(v);
                    });
  bind_flag<double>(app, a, "--epsilon", "mock label flip probability in [0,1]",
               [](GlobalConfig& g, double v) { g.backend.epsilon = v; });
  bind_flag<std::uint64_t>(app, a, "--mock-seed", "mock backend seed",
                      [](GlobalConfig& g, std::uint64_t v) { g.backend.seed = v; });
  bind_flag<std::string>(app, a, "--endpoint", "chat-completions URL for the http backend",
                    [](GlobalConfig& g, const std::string& v) { g.backend.endpoint_url = v; });
  bind_flag<std::string>(app, a, "--model", "model name sent to the http backend",
                    [](GlobalConfig& g, const std::string& v) { g.backend.model_name = v; });
  bind_flag<int>(app, a, "--timeout-ms", "http request timeout in milliseconds",
            [](GlobalConfig& g, int v) { g.backend.timeout_ms = v; });
  bind_flag<int>(app, a, "--max-retries", "http retries on transport failure",
            [](GlobalConfig& g, int v) { g.backend.max_retries = v; });
  bind_flag<int>(app, a, "--max-in-flight", "cap on concurrent http requests",
            [](GlobalConfig& g, int v) { g.backend.max_in_flight = v; });
  bind_flag<std::string>(app, a, "--backend-name", "label for this backend in reports",
                    [](GlobalConfig& g, const std::string& v) { g.backend.name = v; });
  auto lenient = std::make_shared<bool>(false);
  CLI::Option* opt = app->add_flag("--lenient", *lenient,
                                   "accept bare yes/no answers when the structured reply fails");
  a.push_back([opt, lenient](GlobalConfig& g) {
    if (opt->count() > 0) g.backend.lenient_parse = *lenient;
  });
}

void add_episode_flags(CLI::App* app, std::vector<Applier>& a) {
  bind_flag<double>(app, a, "--occupancy", "seconds the human stays at the equipment",
               [](GlobalConfig& g, double v) { g.sim.occupancy_s = v; });
  bind_flag<std::string>(app, a, "--replies", "scripted human replies as a JSON array",
                    [](GlobalConfig& g, const std::string& v) {
                      g.episode.replies = parse_reply_script(v);
                    });
  bind_flag<double>(app, a, "--travel", "seconds of unobstructed travel to the goal",
               [](GlobalConfig& g, double v) { g.episode.travel_s = v; });
  bind_flag<double>(app, a, "--timeout", "seconds before an unanswered question times out",
               [](GlobalConfig& g, double v) { g.episode.fsm.timeout_s = v; });
  bind_flag<double>(app, a, "--realloc-delay", "seconds of waiting before reallocating",
               [](GlobalConfig& g, double v) { g.episode.fsm.reallocation_delay_s = v; });
  bind_flag<double>(app, a, "--reply-latency", "seconds between a question and its reply",
               [](GlobalConfig& g, double v) { g.episode.reply_latency_s = v; });
}

void add_scenario_flags(CLI::App* app, std::vector<Applier>& a) {
  bind_flag<std::string>(app, a, "--scenario", "scenario: s1|s2|s3",
                    [](GlobalConfig& g, const std::string& v) {
                      g.sim.scenario = parse_scenario(v);
                    });
  bind_flag<std::uint64_t>(app, a, "--seed", "generator seed",
                      [](GlobalConfig& g, std::uint64_t v) { g.sim.seed = v; });
  bind_flag<std::string>(app, a, "--class-mix",
                    "class probabilities obstruct+interact,neither,obstruct-only",
                    [](GlobalConfig& g, const std::string& v) {
                      g.sim.class_mix = parse_class_mix(v);
                    });
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << contents;
  if (!f) throw IoError("write to '" + path + "' failed");
}

Scene read_scene_file(const std::string& path, const IngestOptions& options) {
  const std::string content = read_file(path);
  const json doc = json::parse(content, nullptr, false);
  if (!doc.is_discarded()) {
    return ingest_scene(doc, options);
  }
  // JSONL: take the first non-empty line.
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    if (!text::trim(line).empty()) return ingest_scene_line(line, options);
  }
  throw SchemaError("$", "no scene record in '" + path + "'");
}

void apply_episode_spec(GlobalConfig& g, const json& doc, std::uint64_t& episodes,
                        std::string& policy) {
  static const std::set<std::string> kKeys = {
      "scenario", "seed",     "index",        "occupancy_s", "class_mix",
      "replies",  "timeout_s", "reallocation_delay_s", "travel_s", "reply_latency_s",
      "episodes", "epsilon",  "backend",      "endpoint_url", "policy", "mock_seed"};
  if (!doc.is_object()) throw SchemaError("$", "episode spec must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (kKeys.count(key) == 0) throw SchemaError(key, "unknown episode spec key");
      if (key == "scenario") g.sim.scenario = parse_scenario(v.get<std::string>());
      if (key == "seed") g.sim.seed = v.get<std::uint64_t>();
      if (key == "index") g.episode.index = v.get<std::uint64_t>();
      if (key == "occupancy_s") g.sim.occupancy_s = v.get<double>();
      if (key == "class_mix") g.sim.class_mix = v.get<std::array<double, 3>>();
      if (key == "replies") g.episode.replies = v.get<std::vector<std::string>>();
      if (key == "timeout_s") g.episode.fsm.timeout_s = v.get<double>();
      if (key == "reallocation_delay_s") g.episode.fsm.reallocation_delay_s = v.get<double>();
      if (key == "travel_s") g.episode.travel_s = v.get<double>();
      if (key == "reply_latency_s") g.episode.reply_latency_s = v.get<double>();
      if (key == "episodes") episodes = v.get<std::uint64_t>();
      if (key == "epsilon") g.backend.epsilon = v.get<double>();
      if (key == "mock_seed") g.backend.seed = v.get<std::uint64_t>();
      if (key == "backend") g.backend.kind = parse_backend_kind(v.get<std::string>());
      if (key == "endpoint_url") g.backend.endpoint_url = v.get<std::string>();
      if (key == "policy") policy = v.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw SchemaError("episode spec", e.what());
  }
}

struct Context {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  bool json_out = false;
  GlobalConfig cfg;
};

int run_gen(Context& ctx) {
  ScenarioSpec spec = ctx.cfg.sim;
  spec.rules = ctx.cfg.rules;
  const std::string& path = ctx.cfg.out_path;
  if (path.empty() || path == "-") {
    generate_dataset(spec, ctx.out);
    return 0;
  }
  const auto written = generate_dataset(spec, path);
  if (ctx.json_out) {
    ctx.out << json{{"written", written}, {"path", path}}.dump() << '\n';
  } else {
    ctx.out << "wrote " << written << " records to " << path << '\n';
  }
  return 0;
}

int run_label(Context& ctx, bool strict) {
  if (ctx.cfg.dataset_path.empty()) throw ConfigError("label needs --dataset");
  std::ifstream in(ctx.cfg.dataset_path);
  if (!in) throw IoError("cannot open dataset '" + ctx.cfg.dataset_path + "'");
  const bool to_file = !ctx.cfg.out_path.empty() && ctx.cfg.out_path != "-";
  std::ofstream file;
  if (to_file) {
    file.open(ctx.cfg.out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write '" + ctx.cfg.out_path + "'");
  }
  std::ostream& sink = to_file ? static_cast<std::ostream&>(file) : ctx.out;

  std::size_t labeled = 0, with_truth = 0, agree = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const Scene scene = ingest_scene_line(line, IngestOptions{strict});
    const SceneJudgment j = classify_scene(scene, ctx.cfg.rules);
    json rec = {{"scene_id", scene.scene_id},
                {"obstruction", j.obstruction},
                {"interaction", j.interaction},
                {"class", std::string(to_string(to_class(j)))},
                {"source", std::string(to_string(j.source))}};
    if (scene.truth) {
      ++with_truth;
      const bool match = *scene.truth == j.labels();
      agree += match ? 1 : 0;
      rec["matches_truth"] = match;
    }
    sink << rec.dump() << '\n';
    ++labeled;
  }
  if (to_file) {
    json summary = {{"labeled", labeled}, {"path", ctx.cfg.out_path}};
    summary["truth_agreement"] =
        with_truth ? json(100.0 * static_cast<double>(agree) / static_cast<double>(with_truth))
                   : json(nullptr);
    if (ctx.json_out) {
      ctx.out << summary.dump() << '\n';
    } else {
      ctx.out << "labeled " << labeled << " scenes into " << ctx.cfg.out_path << '\n';
    }
  }
  return 0;
}

int run_decide(Context& ctx, const std::string& scene_path, const std::string& variant_name,
               const std::string& policy_name, bool interactive, bool print_prompt,
               const std::vector<std::string>& scripted, bool strict) {
  if (scene_path.empty()) throw ConfigError("decide needs --scene");
  const Scene scene = read_scene_file(scene_path, IngestOptions{strict});
  const PromptVariant variant = parse_variant(variant_name);
  const Policy policy = parse_policy(policy_name);

  const DistanceReport report = distance_matrix(scene);
  const PromptBundle bundle = build_prompt(scene, report, variant, ctx.cfg.rules);
  const auto backend = make_backend(ctx.cfg.backend, ctx.cfg.rules);
  const VlmResponse response = backend->query(bundle, scene);
  const SceneJudgment judgment = response.to_judgment(backend->source());

  std::ostream& talk = ctx.json_out ? ctx.err : ctx.out;
  if (print_prompt && !ctx.json_out) ctx.out << "prompt: " << bundle.text << '\n';
  if (!ctx.json_out) {
    ctx.out << "judgment: " << format_response(judgment.obstruction, judgment.interaction, "")
            << (judgment.consistent ? "" : " (inconsistent)") << '\n';
  }

  json states = json::array();
  json dialogue = json::array();
  StepResult step = step_fsm(FsmState{}, event::Judgment{judgment, focus_equipment(scene, report)},
                             policy);
  states.push_back(std::string(to_string(step.next.state)));
  std::size_t next_script = 0;
  for (;;) {
    for (const Action& a : step.actions) {
      if (a.kind == ActionKind::EmitMessage) {
        talk << "robot: " << a.text << '\n';
        dialogue.push_back({{"speaker", "robot"}, {"text", a.text}});
      }
    }
    if (step.next.state != RobotState::Querying) break;

    std::optional<std::string> reply;
    if (interactive) {
      talk << "> " << std::flush;
      std::string line;
      if (std::getline(ctx.in, line)) reply = line;
    } else if (next_script < scripted.size()) {
      reply = scripted[next_script++];
    } else {
      break;  // nobody answers; the robot keeps querying until its timer fires
    }
    if (reply) {
      dialogue.push_back({{"speaker", "human"}, {"text", *reply}});
      step = step_fsm(step.next, event::HumanReply{*reply}, policy);
    } else {
      step = step_fsm(step.next, event::Timeout{}, policy);
    }
    states.push_back(std::string(to_string(step.next.state)));
  }

  if (ctx.json_out) {
    json doc = {{"scene_id", scene.scene_id},
                {"variant", std::string(to_string(variant))},
                {"prompt", bundle.text},
                {"response",
                 {{"obstruction", response.obstruction},
                  {"interaction", response.interaction},
                  {"message", response.message},
                  {"raw", response.raw}}},
                {"consistent", judgment.consistent},
                {"states", states},
                {"dialogue", dialogue},
                {"final_state", std::string(to_string(step.next.state))}};
    for (const Action& a : step.actions) {
      if (a.kind == ActionKind::ReducedSpeed) doc["reduced_speed"] = true;
    }
    ctx.out << doc.dump() << '\n';
  } else {
    ctx.out << "state: " << to_string(step.next.state) << '\n';
  }
  return 0;
}

int run_episode_cmd(Context& ctx, std::uint64_t episodes, const std::string& policy_name,
                    unsigned jobs) {
  ScenarioSpec spec = ctx.cfg.sim;
  spec.rules = ctx.cfg.rules;
  const std::string policy = text::to_lower(policy_name);

  json doc;
  if (episodes > 1) {
    const PolicyComparison summary =
        compare_policies(spec, ctx.cfg.backend, episodes, ctx.cfg.episode, jobs);
    doc = comparison_to_json(summary);
    if (!ctx.json_out) {
      ctx.out << "episodes: " << summary.episodes << '\n'
              << "mean idle proactive: " << text::fixed(summary.mean_idle_proactive, 3) << " s\n"
              << "mean idle passive:   " << text::fixed(summary.mean_idle_passive, 3) << " s\n"
              << "mean saved:          " << text::fixed(summary.mean_saved, 3) << " s (sd "
              << text::fixed(summary.sd_saved, 3) << ")\n"
              << "blocked pairs:       " << summary.blocked_pairs << ", mean saved "
              << text::fixed(summary.mean_saved_blocked, 3) << " s\n";
    }
  } else {
    std::vector<Policy> policies;
    if (policy == "both") {
      policies = {Policy::Proactive, Policy::Passive};
    } else {
      policies = {parse_policy(policy)};
    }
    spec.count = std::max<std::uint64_t>(spec.count, ctx.cfg.episode.index + 1);
    doc = json::array();
    for (Policy p : policies) {
      const EpisodeTrace trace = run_episode(spec, p, ctx.cfg.backend, ctx.cfg.episode);
      doc.push_back(trace_to_json(trace));
      if (!ctx.json_out) {
        ctx.out << to_string(p) << ": idle " << text::fixed(trace.idle_s, 1) << " s, reallocated "
                << text::fixed(trace.reallocated_s, 1) << " s, arrived at t="
                << text::fixed(trace.duration_s, 1) << " s\n";
        for (const auto& [speaker, line] : trace.dialogue) {
          ctx.out << "  " << speaker << ": " << line << '\n';
        }
      }
    }
  }
  if (!ctx.cfg.out_path.empty()) write_file(ctx.cfg.out_path, doc.dump(2) + "\n");
  if (ctx.json_out) ctx.out << doc.dump() << '\n';
  return 0;
}

int run_eval_cmd(Context& ctx, const std::vector<std::string>& variant_names, int folds,
                 std::uint64_t seed, unsigned jobs, bool strict) {
  if (ctx.cfg.dataset_path.empty()) throw ConfigError("eval needs --dataset");
  std::vector<PromptVariant> variants;
  for (const auto& v : variant_names) {
    if (text::to_lower(v) == "both") {
      variants = {PromptVariant::VisionOnly, PromptVariant::VisionPlusDepth};
      break;
    }
    const PromptVariant parsed = parse_variant(v);
    if (std::find(variants.begin(), variants.end(), parsed) == variants.end()) {
      variants.push_back(parsed);
    }
  }
  if (variants.empty()) variants = {PromptVariant::VisionOnly};

  const auto dataset = load_dataset(ctx.cfg.dataset_path, IngestOptions{strict});
  EvalOptions options;
  options.k = folds;
  options.seed = seed;
  options.rules = ctx.cfg.rules;
  options.jobs = jobs;
  const EvalReport report = run_eval(dataset, {ctx.cfg.backend}, variants, options);
  const json doc = report_to_json(report);
  if (!ctx.cfg.report_path.empty()) write_file(ctx.cfg.report_path, doc.dump(2) + "\n");
  if (ctx.json_out) {
    ctx.out << doc.dump() << '\n';
  } else {
    ctx.out << format_report_table(report);
  }
  return 0;
}

int run_report(Context& ctx, const std::string& cells_path, const std::string& base,
               const std::string& tuned) {
  if (!cells_path.empty()) {
    const json doc = json::parse(read_file(cells_path));
    const CellTable cells = parse_cell_table(doc);
    std::set<Scenario> present;
    for (const auto& [key, _] : cells) present.insert(key.scenario);
    const Deltas d = delta_table(cells, {present.begin(), present.end()}, base, tuned);
    json out = {{"finetune_gain", json::object()}, {"depth_delta", json::object()}};
    for (const auto& [s, v] : d.finetune_gain) out["finetune_gain"][std::string(to_string(s))] = v;
    for (const auto& [s, v] : d.depth_delta) out["depth_delta"][std::string(to_string(s))] = v;
    if (ctx.json_out) {
      ctx.out << out.dump() << '\n';
    } else {
      for (const auto& [s, v] : d.finetune_gain) {
        ctx.out << "gain " << to_string(s) << " (" << tuned << " - " << base
                << "): " << (v > 0 ? "+" : "") << v << " pp\n";
      }
      for (const auto& [s, v] : d.depth_delta) {
        ctx.out << "depth " << to_string(s) << " (vision+depth - vision): " << (v > 0 ? "+" : "")
                << v << " pp\n";
      }
    }
    return 0;
  }
  if (ctx.cfg.report_path.empty()) throw ConfigError("report needs --report or --cells");
  const EvalReport report = report_from_json(json::parse(read_file(ctx.cfg.report_path)));
  if (ctx.json_out) {
    ctx.out << report_to_json(report).dump() << '\n';
  } else {
    ctx.out << format_report_table(report);
  }
  return 0;
}

}  // namespace

std::array<double, 3> parse_class_mix(std::string_view text_in) {
  std::array<double, 3> mix{};
  std::size_t i = 0;
  std::string_view rest = text_in;
  while (true) {
    const auto comma = rest.find(',');
    if (i >= 3) throw ConfigError("class mix needs exactly three values");
    mix[i++] = text::parse_double(rest.substr(0, comma), "class_mix");
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (i != 3) throw ConfigError("class mix needs exactly three values");
  return mix;
}

std::vector<std::string> parse_reply_script(std::string_view json_array) {
  const json doc = json::parse(json_array.begin(), json_array.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw ConfigError("replies must be a JSON array of strings");
  }
  std::vector<std::string> out;
  for (const auto& r : doc) {
    if (!r.is_string() || r.get<std::string>().empty()) {
      throw ConfigError("replies must be non-empty strings");
    }
    out.push_back(r.get<std::string>());
  }
  return out;
}

GlobalConfig parse_global_config(std::string_view text_in, GlobalConfig g) {
  for (const auto& s : text::parse_settings(text_in)) {
    const std::string& k = s.key;
    const std::string& v = s.value;
    const auto unknown = [&] {
      return ConfigError("line " + std::to_string(s.line) + ": unknown key '" +
                         (s.section.empty() ? k : s.section + "." + k) + "'");
    };
    if (s.section.empty()) {
      if (k != "verbosity") throw unknown();
      g.verbosity = static_cast<int>(text::parse_int(v, k));
    } else if (s.section == "rules") {
      apply_rule_setting(g.rules, k, v);
    } else if (s.section == "backend") {
      if (k == "kind") g.backend.kind = parse_backend_kind(v);
      else if (k == "name") g.backend.name = v;
      else if (k == "endpoint_url") g.backend.endpoint_url = v;
      else if (k == "model_name") g.backend.model_name = v;
      else if (k == "timeout_ms") g.backend.timeout_ms = static_cast<int>(text::parse_int(v, k));
      else if (k == "max_retries") g.backend.max_retries = static_cast<int>(text::parse_int(v, k));
      else if (k == "backoff_ms") g.backend.backoff_ms = static_cast<int>(text::parse_int(v, k));
      else if (k == "max_in_flight") g.backend.max_in_flight = static_cast<int>(text::parse_int(v, k));
      else if (k == "attach_images") g.backend.attach_images = text::parse_bool(v, k);
      else if (k == "lenient_parse") g.backend.lenient_parse = text::parse_bool(v, k);
      else if (k == "epsilon") g.backend.epsilon = text::parse_double(v, k);
      else if (k == "seed") g.backend.seed = static_cast<std::uint64_t>(text::parse_int(v, k));
      else throw unknown();
    } else if (s.section == "sim") {
      if (k == "scenario") g.sim.scenario = parse_scenario(v);
      else if (k == "count") g.sim.count = static_cast<std::uint64_t>(text::parse_int(v, k));
      else if (k == "seed") g.sim.seed = static_cast<std::uint64_t>(text::parse_int(v, k));
      else if (k == "occupancy_s") g.sim.occupancy_s = text::parse_double(v, k);
      else if (k == "class_mix") g.sim.class_mix = parse_class_mix(v);
      else if (k == "pos_sigma_m") g.sim.noise.pos_sigma_m = text::parse_double(v, k);
      else if (k == "depth_sigma_m") g.sim.noise.depth_sigma_m = text::parse_double(v, k);
      else if (k == "dropout_p") g.sim.noise.dropout_p = text::parse_double(v, k);
      else if (k == "room_length_m") g.sim.room.length_m = text::parse_double(v, k);
      else if (k == "room_width_m") g.sim.room.width_m = text::parse_double(v, k);
      else throw unknown();
    } else if (s.section == "episode") {
      if (k == "timeout_s") g.episode.fsm.timeout_s = text::parse_double(v, k);
      else if (k == "reallocation_delay_s") g.episode.fsm.reallocation_delay_s = text::parse_double(v, k);
      else if (k == "travel_s") g.episode.travel_s = text::parse_double(v, k);
      else if (k == "reply_latency_s") g.episode.reply_latency_s = text::parse_double(v, k);
      else if (k == "replies") g.episode.replies = parse_reply_script(v);
      else throw unknown();
    } else if (s.section == "paths") {
      if (k == "dataset") g.dataset_path = v;
      else if (k == "report") g.report_path = v;
      else if (k == "out") g.out_path = v;
      else throw unknown();
    } else {
      throw ConfigError("line " + std::to_string(s.line) + ": unknown section '" + s.section +
                        "'");
    }
  }
  return g;
}

GlobalConfig load_global_config(const std::string& path, GlobalConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return parse_global_config(s.str(), std::move(base));
}

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Human-aware decision pipeline for mobile robots in shared laboratories",
               "labmate"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json_out = false;
  std::string config_path;
  int verbose = 0;
  app.add_flag("--json", json_out, "machine-readable JSON on stdout");
  app.add_option("--config", config_path, "config file (also $LABMATE_CONFIG)");
  app.add_flag("-v,--verbose", verbose, "more diagnostics on stderr");

  std::vector<Applier> common;
  const auto paths = [](CLI::App* sub, std::vector<Applier>& a, const std::string& flag,
                        const std::string& help, std::string GlobalConfig::*field) {
    bind_flag<std::string>(sub, a, flag, help,
                      [field](GlobalConfig& g, const std::string& v) { g.*field = v; });
  };

  // gen
  std::vector<Applier> gen_a;
  CLI::App* gen = app.add_subcommand("gen", "generate a seeded synthetic scene dataset (JSONL)");
  add_scenario_flags(gen, gen_a);
  bind_flag<std::uint64_t>(gen, gen_a, "--count", "number of scenes",
                      [](GlobalConfig& g, std::uint64_t v) { g.sim.count = v; });
  bind_flag<double>(gen, gen_a, "--pos-sigma", "position jitter std-dev in meters",
               [](GlobalConfig& g, double v) { g.sim.noise.pos_sigma_m = v; });
  bind_flag<double>(gen, gen_a, "--depth-sigma", "depth noise std-dev in meters",
               [](GlobalConfig& g, double v) { g.sim.noise.depth_sigma_m = v; });
  bind_flag<double>(gen, gen_a, "--dropout", "probability a detection is missing",
               [](GlobalConfig& g, double v) { g.sim.noise.dropout_p = v; });
  bind_flag<double>(gen, gen_a, "--room-length", "room length in meters (8)",
               [](GlobalConfig& g, double v) { g.sim.room.length_m = v; });
  bind_flag<double>(gen, gen_a, "--room-width", "room width in meters (6)",
               [](GlobalConfig& g, double v) { g.sim.room.width_m = v; });
  paths(gen, gen_a, "--out", "output JSONL path ('-' for stdout)", &GlobalConfig::out_path);
  add_rule_flags(gen, gen_a);

  // label
  std::vector<Applier> label_a;
  bool label_strict = false;
  CLI::App* label = app.add_subcommand("label", "label scenes with the geometric rule oracle");
  paths(label, label_a, "--dataset", "input scene JSONL", &GlobalConfig::dataset_path);
  paths(label, label_a, "--out", "output JSONL path ('-' for stdout)", &GlobalConfig::out_path);
  label->add_flag("--strict", label_strict, "reject unknown record keys");
  add_rule_flags(label, label_a);

  // decide
  std::vector<Applier> decide_a;
  std::string scene_path, decide_variant = "vision", decide_policy = "proactive";
  bool interactive = false, print_prompt = false, decide_strict = false;
  std::vector<std::string> scripted;
  CLI::App* decide = app.add_subcommand("decide", "judge one scene and run the robot dialogue");
  decide->add_option("--scene", scene_path, "scene record (JSON or first JSONL line)");
  decide->add_option("--variant", decide_variant, "prompt variant: vision|vision+depth");
  decide->add_option("--policy", decide_policy, "decision policy: proactive|passive");
  decide->add_flag("--interactive", interactive, "read human replies from standard input");
  decide->add_option("--reply", scripted, "scripted human reply (repeatable)");
  decide->add_flag("--print-prompt", print_prompt, "show the prompt sent to the backend");
  decide->add_flag("--strict", decide_strict, "reject unknown record keys");
  bind_flag<std::uint64_t>(decide, decide_a, "--seed", "mock backend seed",
                      [](GlobalConfig& g, std::uint64_t v) { g.backend.seed = v; });
  add_backend_flags(decide, decide_a);
  add_rule_flags(decide, decide_a);

  // episode
  std::vector<Applier> episode_a;
  std::string spec_path, episode_policy = "both";
  std::uint64_t episodes = 1;
  unsigned episode_jobs = 0;
  CLI::Option* episodes_opt = nullptr;
  CLI::Option* policy_opt = nullptr;
  CLI::App* episode = app.add_subcommand("episode", "simulate proactive vs passive episodes");
  episode->add_option("--spec", spec_path, "episode spec JSON file");
  add_scenario_flags(episode, episode_a);
  bind_flag<std::uint64_t>(episode, episode_a, "--index", "scene index within the seeded world",
                      [](GlobalConfig& g, std::uint64_t v) { g.episode.index = v; });
  policy_opt = episode->add_option("--policy", episode_policy, "proactive|passive|both");
  episodes_opt = episode->add_option("--episodes", episodes, "matched episode pairs to compare");
  episode->add_option("--jobs", episode_jobs, "worker threads (default: logical cores)");
  paths(episode, episode_a, "--out", "write the trace or summary JSON here",
        &GlobalConfig::out_path);
  add_episode_flags(episode, episode_a);
  add_backend_flags(episode, episode_a);
  add_rule_flags(episode, episode_a);

  // eval
  std::vector<Applier> eval_a;
  std::vector<std::string> variants;
  int folds = 5;
  std::uint64_t eval_seed = 0;
  unsigned eval_jobs = 0;
  bool eval_strict = false;
  CLI::App* eval = app.add_subcommand("eval", "k-fold joint-label evaluation of a backend");
  paths(eval, eval_a, "--dataset", "labelled scene JSONL", &GlobalConfig::dataset_path);
  eval->add_option("--variant", variants, "vision|vision+depth|both (repeatable)");
  eval->add_option("--folds", folds, "number of folds (5)");
  eval->add_option("--seed", eval_seed, "fold assignment seed");
  eval->add_option("--jobs", eval_jobs, "worker threads (default: logical cores)");
  eval->add_flag("--strict", eval_strict, "reject unknown record keys");
  paths(eval, eval_a, "--report", "write the report JSON here", &GlobalConfig::report_path);
  add_backend_flags(eval, eval_a);
  add_rule_flags(eval, eval_a);

  // report
  std::vector<Applier> report_a;
  std::string cells_path, base = "base", tuned = "fine-tuned";
  CLI::App* report = app.add_subcommand("report", "print an evaluation report or delta table");
  paths(report, report_a, "--report", "report JSON produced by eval", &GlobalConfig::report_path);
  report->add_option("--cells", cells_path, "accuracy cell fixture JSON for the delta table");
  report->add_option("--base", base, "base backend label (base)");
  report->add_option("--tuned", tuned, "tuned backend label (fine-tuned)");

  std::vector<const char*> argv;
  argv.push_back("labmate");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (CLI::App* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* target = &app;
    for (CLI::App* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return 2;
  }

  Context ctx{in, out, err, json_out, {}};
  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') {
        config_path = env;
      }
    }
    if (!config_path.empty()) ctx.cfg = load_global_config(config_path);
    ctx.cfg.verbosity += verbose;

    CLI::App* sub = app.get_subcommands().front();
    const auto apply = [&](const std::vector<Applier>& appliers) {
      for (const auto& f : appliers) f(ctx.cfg);
    };

    if (sub == episode && !spec_path.empty()) {
      std::string spec_policy;
      std::uint64_t spec_episodes = episodes;
      apply_episode_spec(ctx.cfg, json::parse(read_file(spec_path)), spec_episodes, spec_policy);
      if (episodes_opt->count() == 0) episodes = spec_episodes;
      if (policy_opt->count() == 0 && !spec_policy.empty()) episode_policy = spec_policy;
    }

    if (sub == gen) apply(gen_a);
    if (sub == label) apply(label_a);
    if (sub == decide) apply(decide_a);
    if (sub == episode) apply(episode_a);
    if (sub == eval) apply(eval_a);
    if (sub == report) apply(report_a);
    ctx.cfg.rules.validate();
    if (sub != gen && sub != label && sub != report) ctx.cfg.backend.validate();
    if (ctx.cfg.verbosity > 0) err << "labmate: running " << sub->get_name() << '\n';

    if (sub == gen) return run_gen(ctx);
    if (sub == label) return run_label(ctx, label_strict);
    if (sub == decide) {
      return run_decide(ctx, scene_path, decide_variant, decide_policy, interactive, print_prompt,
                        scripted, decide_strict);
    }
    if (sub == episode) return run_episode_cmd(ctx, episodes, episode_policy, episode_jobs);
    if (sub == eval) return run_eval_cmd(ctx, variants, folds, eval_seed, eval_jobs, eval_strict);
    if (sub == report) return run_report(ctx, cells_path, base, tuned);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace labmate
