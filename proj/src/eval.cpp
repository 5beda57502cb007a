#include "labmate/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "labmate/errors.hpp"
#include "labmate/parallel.hpp"
#include "labmate/rng.hpp"
#include "labmate/text.hpp"

namespace labmate {
namespace {

using json = nlohmann::json;

enum class Outcome { Ok, ParseFailure, BackendFailure };

std::string cell_name(Scenario s, PromptVariant v, const std::string& backend) {
  return std::string(to_string(s)) + "/" + std::string(to_string(v)) + "/" + backend;
}

long long cell(const CellTable& cells, Scenario s, PromptVariant v, const std::string& backend) {
  auto it = cells.find(CellKey{s, v, backend});
  if (it == cells.end()) {
    throw MissingCell("missing cell " + cell_name(s, v, backend));
  }
  return it->second;
}

bool has(const CellTable& cells, Scenario s, PromptVariant v, const std::string& backend) {
  return cells.count(CellKey{s, v, backend}) != 0;
}

}  // namespace

std::vector<DatasetRecord> load_dataset(std::istream& in, const IngestOptions& options) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    Scene scene;
    try {
      scene = ingest_scene_line(line, options);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.field(), e.what());
    }
    if (!scene.truth) {
      throw SchemaError("line " + std::to_string(line_no) + ": truth",
                        "evaluation records need truth labels");
    }
    DatasetRecord rec{scene, *scene.truth, scene.scenario};
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset '" + path + "'");
  }
  return load_dataset(in, options);
}

std::vector<std::size_t> FoldSplit::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldSplit::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

FoldSplit kfold_split(std::size_t n, int k, std::uint64_t seed, const std::vector<int>& strata) {
  if (k < 1) {
    throw ConfigError("fold count must be >= 1");
  }
  if (n < static_cast<std::size_t>(k)) {
    throw TooFewRecords(std::to_string(n) + " records cannot fill " + std::to_string(k) +
                        " folds");
  }
  if (!strata.empty() && strata.size() != n) {
    throw LengthMismatch("strata length " + std::to_string(strata.size()) + " != " +
                         std::to_string(n));
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    groups[strata.empty() ? 0 : strata[i]].push_back(i);
  }
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.assignments.assign(n, -1);
  std::size_t cursor = 0;
  for (auto& [stratum, members] : groups) {
    rng::Engine g(rng::mix(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(stratum))));
    rng::shuffle(members.begin(), members.end(), g);
    for (std::size_t idx : members) {
      split.assignments[idx] = static_cast<int>(cursor % static_cast<std::size_t>(k));
      ++cursor;
    }
  }
  return split;
}

double joint_accuracy(const std::vector<Prediction>& predictions,
                      const std::vector<TruthLabels>& truths) {
  if (predictions.size() != truths.size()) {
    throw LengthMismatch(std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) {
    throw EmptyInput();
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] && predictions[i]->labels() == truths[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double joint_accuracy(const std::vector<SceneJudgment>& predictions,
                      const std::vector<TruthLabels>& truths) {
  return joint_accuracy(std::vector<Prediction>(predictions.begin(), predictions.end()), truths);
}

FoldAggregate aggregate_folds(const std::vector<double>& accs) {
  if (accs.size() < 2) {
    throw TooFewFolds();
  }
  const double n = static_cast<double>(accs.size());
  FoldAggregate out;
  for (double a : accs) out.raw_mean += a;
  out.raw_mean /= n;
  double ss = 0.0;
  for (double a : accs) ss += (a - out.raw_mean) * (a - out.raw_mean);
  out.raw_variance = ss / (n - 1.0);
  out.raw_sd = std::sqrt(out.raw_variance);
  out.mean = std::llround(out.raw_mean);
  out.spread = std::llround(out.raw_sd);
  return out;
}

Deltas delta_table(const CellTable& cells, const std::vector<Scenario>& scenarios,
                   const std::string& base_backend, const std::string& tuned_backend) {
  Deltas d;
  for (Scenario s : scenarios) {
    const long long tuned_vision = cell(cells, s, PromptVariant::VisionOnly, tuned_backend);
    d.finetune_gain[s] = tuned_vision - cell(cells, s, PromptVariant::VisionOnly, base_backend);
    d.depth_delta[s] = cell(cells, s, PromptVariant::VisionPlusDepth, tuned_backend) - tuned_vision;
  }
  return d;
}

CellTable parse_cell_table(const json& doc) {
  if (!doc.is_object() || !doc.contains("cells") || !doc["cells"].is_array()) {
    throw SchemaError("cells", "expected an array of cells");
  }
  CellTable out;
  for (const auto& c : doc["cells"]) {
    if (!c.is_object() || !c.contains("scenario") || !c.contains("variant") ||
        !c.contains("backend") || !c.contains("mean")) {
      throw SchemaError("cells[]", "each cell needs scenario, variant, backend and mean");
    }
    if (c["mean"].is_null()) continue;
    if (!c["mean"].is_number()) throw SchemaError("cells[].mean", "expected a number");
    const CellKey key{parse_scenario(c["scenario"].get<std::string>()),
                      parse_variant(c["variant"].get<std::string>()),
                      c["backend"].get<std::string>()};
    out[key] = std::llround(c["mean"].get<double>());
  }
  return out;
}

const CellResult* EvalReport::find(Scenario s, PromptVariant v, const std::string& backend) const {
  for (const auto& c : cells) {
    if (c.key == CellKey{s, v, backend}) return &c;
  }
  return nullptr;
}

CellTable EvalReport::rounded_cells() const {
  CellTable out;
  for (const auto& c : cells) {
    if (c.aggregate) out[c.key] = c.aggregate->mean;
  }
  return out;
}

EvalReport run_eval(const std::vector<DatasetRecord>& dataset,
                    const std::vector<BackendConfig>& backends,
                    const std::vector<PromptVariant>& variants, const EvalOptions& options) {
  if (options.k < 2) throw ConfigError("evaluation needs at least 2 folds");
  if (dataset.empty()) throw EmptyInput();
  if (backends.empty()) throw ConfigError("no backends configured");
  if (variants.empty()) throw ConfigError("no prompt variants configured");
  options.rules.validate();

  std::set<std::string> labels;
  for (const auto& b : backends) {
    b.validate();
    if (!labels.insert(b.label()).second) {
      throw ConfigError("duplicate backend label '" + b.label() + "'");
    }
  }

  const std::size_t n = dataset.size();
  std::vector<int> strata(n);
  std::set<Scenario> scenarios;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = to_class(dataset[i].truth.obstruction, dataset[i].truth.interaction);
    strata[i] = static_cast<int>(dataset[i].scenario) * 3 + static_cast<int>(cls);
    scenarios.insert(dataset[i].scenario);
  }
  const FoldSplit split = kfold_split(n, options.k, options.seed, strata);

  std::vector<DistanceReport> reports(n);
  parallel_for(n, options.jobs, [&](std::size_t i) { reports[i] = distance_matrix(dataset[i].scene); });

  EvalReport report;
  report.k = options.k;
  report.seed = options.seed;
  std::size_t total = 0, parse_failures = 0, backend_errors = 0, inconsistent = 0;

  for (const auto& backend_cfg : backends) {
    const auto backend = make_backend(backend_cfg, options.rules);
    for (PromptVariant variant : variants) {
      std::vector<Prediction> predictions(n);
      std::vector<Outcome> outcomes(n, Outcome::Ok);
      parallel_for(n, options.jobs, [&](std::size_t i) {
        const Scene& scene = dataset[i].scene;
        PromptBundle bundle;
        try {
          bundle = build_prompt(scene, reports[i], variant, options.rules);
        } catch (const EmptyScene&) {
          if (backend_cfg.kind == BackendKind::Http) {
            outcomes[i] = Outcome::BackendFailure;
            return;
          }
        }
        try {
          predictions[i] = backend->query(bundle, scene).to_judgment(backend->source());
        } catch (const ParseError&) {
          outcomes[i] = Outcome::ParseFailure;
        } catch (const Error&) {
          outcomes[i] = Outcome::BackendFailure;
        }
      });

      for (Scenario s : scenarios) {
        CellResult c;
        c.key = CellKey{s, variant, backend_cfg.label()};
        for (int fold = 0; fold < options.k; ++fold) {
          std::vector<Prediction> preds;
          std::vector<TruthLabels> truths;
          for (std::size_t i : split.test_indices(fold)) {
            if (dataset[i].scenario != s) continue;
            preds.push_back(predictions[i]);
            truths.push_back(dataset[i].truth);
          }
          if (!preds.empty()) c.fold_accuracies.push_back(joint_accuracy(preds, truths));
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (dataset[i].scenario != s) continue;
          ++c.n;
          if (outcomes[i] == Outcome::ParseFailure) ++c.parse_failures;
          if (outcomes[i] == Outcome::BackendFailure) ++c.backend_errors;
          if (predictions[i] && !predictions[i]->consistent) ++c.inconsistent;
        }
        if (c.fold_accuracies.size() >= 2) c.aggregate = aggregate_folds(c.fold_accuracies);
        total += c.n;
        parse_failures += c.parse_failures;
        backend_errors += c.backend_errors;
        inconsistent += c.inconsistent;
        report.cells.push_back(std::move(c));
      }
    }
  }
  std::sort(report.cells.begin(), report.cells.end(),
            [](const CellResult& a, const CellResult& b) { return a.key < b.key; });

  const double denom = static_cast<double>(std::max<std::size_t>(total, 1));
  report.parse_failure_rate = static_cast<double>(parse_failures) / denom;
  report.backend_error_rate = static_cast<double>(backend_errors) / denom;
  report.inconsistent_prediction_rate = static_cast<double>(inconsistent) / denom;

  // Deltas: whichever operands exist. Gains need a base and a tuned backend.
  const CellTable cells = report.rounded_cells();
  report.tuned_backend = backends.size() >= 2 ? backends[1].label() : backends[0].label();
  report.base_backend = backends.size() >= 2 ? backends[0].label() : "";
  Deltas d;
  bool any = false;
  for (Scenario s : scenarios) {
    const auto& tuned = report.tuned_backend;
    if (!report.base_backend.empty() && has(cells, s, PromptVariant::VisionOnly, tuned) &&
        has(cells, s, PromptVariant::VisionOnly, report.base_backend)) {
      d.finetune_gain[s] = cell(cells, s, PromptVariant::VisionOnly, tuned) -
                           cell(cells, s, PromptVariant::VisionOnly, report.base_backend);
      any = true;
    }
    if (has(cells, s, PromptVariant::VisionOnly, tuned) &&
        has(cells, s, PromptVariant::VisionPlusDepth, tuned)) {
      d.depth_delta[s] = cell(cells, s, PromptVariant::VisionPlusDepth, tuned) -
                         cell(cells, s, PromptVariant::VisionOnly, tuned);
      any = true;
    }
  }
  if (any) report.deltas = d;
  return report;
}

json report_to_json(const EvalReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json cell = {{"scenario", std::string(to_string(c.key.scenario))},
                 {"variant", std::string(to_string(c.key.variant))},
                 {"backend", c.key.backend},
                 {"n", c.n},
                 {"fold_accuracies", c.fold_accuracies},
                 {"parse_failures", c.parse_failures},
                 {"backend_errors", c.backend_errors},
                 {"inconsistent", c.inconsistent}};
    if (c.aggregate) {
      cell["mean"] = c.aggregate->mean;
      cell["spread"] = c.aggregate->spread;
      cell["mean_raw"] = c.aggregate->raw_mean;
      cell["sd_raw"] = c.aggregate->raw_sd;
      cell["variance_raw"] = c.aggregate->raw_variance;
    } else {
      cell["mean"] = nullptr;
      cell["spread"] = nullptr;
    }
    cells.push_back(std::move(cell));
  }
  json deltas = nullptr;
  if (report.deltas) {
    json gain = json::object();
    json depth = json::object();
    for (const auto& [s, v] : report.deltas->finetune_gain) gain[std::string(to_string(s))] = v;
    for (const auto& [s, v] : report.deltas->depth_delta) depth[std::string(to_string(s))] = v;
    deltas = {{"finetune_gain", gain}, {"depth_delta", depth}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"folds", report.k},
          {"seed", report.seed},
          {"base_backend", report.base_backend},
          {"tuned_backend", report.tuned_backend},
          {"cells", std::move(cells)},
          {"deltas", std::move(deltas)},
          {"rates",
           {{"inconsistent_prediction", report.inconsistent_prediction_rate},
            {"parse_failure", report.parse_failure_rate},
            {"backend_error", report.backend_error_rate}}}};
}

EvalReport report_from_json(const json& doc) {
  if (!doc.is_object() || doc.value("schema_version", 0) != kReportSchemaVersion) {
    throw SchemaError("schema_version", "expected report schema version " +
                                            std::to_string(kReportSchemaVersion));
  }
  EvalReport r;
  try {
    r.k = doc.at("folds").get<int>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.base_backend = doc.value("base_backend", "");
    r.tuned_backend = doc.value("tuned_backend", "");
    for (const auto& c : doc.at("cells")) {
      CellResult cell;
      cell.key = CellKey{parse_scenario(c.at("scenario").get<std::string>()),
                         parse_variant(c.at("variant").get<std::string>()),
                         c.at("backend").get<std::string>()};
      cell.fold_accuracies = c.at("fold_accuracies").get<std::vector<double>>();
      cell.n = c.at("n").get<std::size_t>();
      cell.parse_failures = c.at("parse_failures").get<std::size_t>();
      cell.backend_errors = c.at("backend_errors").get<std::size_t>();
      cell.inconsistent = c.at("inconsistent").get<std::size_t>();
      if (!c.at("mean").is_null()) {
        FoldAggregate a;
        a.mean = c.at("mean").get<long long>();
        a.spread = c.at("spread").get<long long>();
        a.raw_mean = c.at("mean_raw").get<double>();
        a.raw_sd = c.at("sd_raw").get<double>();
        a.raw_variance = c.at("variance_raw").get<double>();
        cell.aggregate = a;
      }
      r.cells.push_back(std::move(cell));
    }
    if (doc.contains("deltas") && !doc["deltas"].is_null()) {
      Deltas d;
      for (const auto& [s, v] : doc["deltas"].at("finetune_gain").items()) {
        d.finetune_gain[parse_scenario(s)] = v.get<long long>();
      }
      for (const auto& [s, v] : doc["deltas"].at("depth_delta").items()) {
        d.depth_delta[parse_scenario(s)] = v.get<long long>();
      }
      r.deltas = d;
    }
    const json& rates = doc.at("rates");
    r.inconsistent_prediction_rate = rates.at("inconsistent_prediction").get<double>();
    r.parse_failure_rate = rates.at("parse_failure").get<double>();
    r.backend_error_rate = rates.at("backend_error").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError("report", e.what());
  }
  return r;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << "Scenario  Modality      Backend                 Accuracy (%)   n\n";
  for (const auto& c : report.cells) {
    std::string scenario = text::to_lower(to_string(c.key.scenario));
    scenario[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(scenario[0])));
    std::string acc = c.aggregate ? std::to_string(c.aggregate->mean) + "\xC2\xB1" +
                                        std::to_string(c.aggregate->spread)
                                  : "n/a";
    char line[256];
    std::snprintf(line, sizeof(line), "%-9s %-13s %-23s %-14s %zu\n", scenario.c_str(),
                  std::string(to_string(c.key.variant)).c_str(), c.key.backend.c_str(),
                  acc.c_str(), c.n);
    out << line;
  }
  if (report.deltas) {
    const auto signed_pp = [](long long v) { return (v > 0 ? "+" : "") + std::to_string(v); };
    for (const auto& [s, v] : report.deltas->finetune_gain) {
      out << "gain " << to_string(s) << " (" << report.tuned_backend << " - "
          << report.base_backend << "): " << signed_pp(v) << " pp\n";
    }
    for (const auto& [s, v] : report.deltas->depth_delta) {
      out << "depth " << to_string(s) << " (vision+depth - vision): " << signed_pp(v) << " pp\n";
    }
  }
  out << "parse failures: " << text::fixed(100.0 * report.parse_failure_rate, 2)
      << "%  backend errors: " << text::fixed(100.0 * report.backend_error_rate, 2)
      << "%  inconsistent predictions: "
      << text::fixed(100.0 * report.inconsistent_prediction_rate, 2) << "%\n";
  return out.str();
}

}  // namespace labmate
