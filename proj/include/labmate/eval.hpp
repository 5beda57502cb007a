#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labmate/perception.hpp"
#include "labmate/reasoning.hpp"
#include "labmate/rules.hpp"

namespace labmate {

inline constexpr int kReportSchemaVersion = 1;

struct DatasetRecord {
  Scene scene;
  TruthLabels truth;
  Scenario scenario = Scenario::Unknown;
};

/// Reads a JSONL dataset; every record must carry consistent truth labels.
std::vector<DatasetRecord> load_dataset(std::istream& in, const IngestOptions& options = {});
std::vector<DatasetRecord> load_dataset(const std::string& path, const IngestOptions& options = {});

struct FoldSplit {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;  ///< record index -> test fold

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Stratified k-fold partition: indices are shuffled within each stratum and
/// dealt round-robin with a fold cursor that carries across strata, so fold
/// sizes differ by at most one overall and within every stratum.
FoldSplit kfold_split(std::size_t n, int k, std::uint64_t seed, const std::vector<int>& strata = {});

/// A prediction is absent when the backend failed or its text did not parse.
using Prediction = std::optional<SceneJudgment>;

double joint_accuracy(const std::vector<Prediction>& predictions,
                      const std::vector<TruthLabels>& truths);
double joint_accuracy(const std::vector<SceneJudgment>& predictions,
                      const std::vector<TruthLabels>& truths);

struct FoldAggregate {
  double raw_mean = 0.0;
  double raw_sd = 0.0;        ///< sample standard deviation (n - 1)
  double raw_variance = 0.0;  ///< sample variance (n - 1)
  long long mean = 0;         ///< rounded half away from zero
  long long spread = 0;       ///< rounded sample standard deviation
};

FoldAggregate aggregate_folds(const std::vector<double>& accuracies);

/// (scenario, variant, backend label) -> rounded accuracy cell.
struct CellKey {
  Scenario scenario = Scenario::Unknown;
  PromptVariant variant = PromptVariant::VisionOnly;
  std::string backend;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

using CellTable = std::map<CellKey, long long>;

struct Deltas {
  std::map<Scenario, long long> finetune_gain;  ///< tuned - base, vision prompt
  std::map<Scenario, long long> depth_delta;    ///< vision+depth - vision, tuned backend
};

/// Signed percentage-point differences per scenario. Throws MissingCell when
/// an operand is absent.
Deltas delta_table(const CellTable& cells, const std::vector<Scenario>& scenarios,
                   const std::string& base_backend, const std::string& tuned_backend);

/// Parses a cell fixture: {"cells": [{"scenario", "variant", "backend", "mean", "spread"?}]}.
CellTable parse_cell_table(const nlohmann::json& doc);

struct CellResult {
  CellKey key;
  std::vector<double> fold_accuracies;
  std::optional<FoldAggregate> aggregate;
  std::size_t n = 0;
  std::size_t parse_failures = 0;
  std::size_t backend_errors = 0;
  std::size_t inconsistent = 0;
};

struct EvalReport {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;  ///< sorted by key
  std::optional<Deltas> deltas;
  std::string base_backend;
  std::string tuned_backend;
  double inconsistent_prediction_rate = 0.0;
  double parse_failure_rate = 0.0;
  double backend_error_rate = 0.0;

  const CellResult* find(Scenario s, PromptVariant v, const std::string& backend) const;
  CellTable rounded_cells() const;
};

struct EvalOptions {
  int k = 5;
  std::uint64_t seed = 0;
  RuleConfig rules{};
  unsigned jobs = 0;
};

/// End-to-end protocol: prompt -> backend -> parse -> score on every test
/// fold, aggregated per (scenario, variant, backend). With two or more
/// backends the first is treated as the base model and the second as the
/// tuned model for the gain deltas.
EvalReport run_eval(const std::vector<DatasetRecord>& dataset,
                    const std::vector<BackendConfig>& backends,
                    const std::vector<PromptVariant>& variants, const EvalOptions& options);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Human-readable accuracy table: one row per cell, "mean±spread".
std::string format_report_table(const EvalReport& report);

}  // namespace labmate
