#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "labmate/errors.hpp"
#include "labmate/eval.hpp"
#include "labmate/sim.hpp"

using namespace labmate;
using nlohmann::json;

namespace {

std::vector<DatasetRecord> make_dataset(Scenario s, std::uint64_t count, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.scenario = s;
  spec.count = count;
  spec.seed = seed;
  std::stringstream buf;
  generate_dataset(spec, buf);
  return load_dataset(buf);
}

json load_fixture(const std::string& name) {
  std::ifstream in(std::string(LABMATE_FIXTURES) + "/" + name);
  return json::parse(in);
}

SceneJudgment judged(bool o, bool i) { return SceneJudgment::make(o, i, "", JudgmentSource::Mock); }

}  // namespace

TEST(KFold, TenRecordsFiveFolds) {
  const auto split = kfold_split(10, 5, 1);
  std::multiset<std::size_t> seen;
  for (int f = 0; f < 5; ++f) {
    const auto test = split.test_indices(f);
    EXPECT_EQ(test.size(), 2u);
    seen.insert(test.begin(), test.end());
    EXPECT_EQ(split.train_indices(f).size(), 8u);
  }
  EXPECT_EQ(seen.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
}

TEST(KFold, Errors) {
  EXPECT_THROW(kfold_split(3, 5, 1), TooFewRecords);
  EXPECT_THROW(kfold_split(10, 5, 1, {1, 2}), LengthMismatch);
}

TEST(KFold, StratifiedBalance) {
  std::vector<int> strata;
  for (int i = 0; i < 103; ++i) strata.push_back(i % 7 == 0 ? 0 : (i % 3));
  const auto split = kfold_split(strata.size(), 5, 77, strata);
  EXPECT_EQ(split.assignments, kfold_split(strata.size(), 5, 77, strata).assignments);
  std::map<int, std::array<int, 5>> per;
  std::array<int, 5> total{};
  for (std::size_t i = 0; i < strata.size(); ++i) {
    ++per[strata[i]][split.assignments[i]];
    ++total[split.assignments[i]];
  }
  EXPECT_LE(*std::max_element(total.begin(), total.end()) -
                *std::min_element(total.begin(), total.end()),
            1);
  for (const auto& [s, sizes] : per) {
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) -
                  *std::min_element(sizes.begin(), sizes.end()),
              1)
        << "stratum " << s;
  }
}

TEST(Joint, Examples) {
  std::vector<SceneJudgment> preds(10, judged(true, true));
  std::vector<TruthLabels> truth(10, TruthLabels{true, true});
  preds[3] = judged(true, false);
  EXPECT_DOUBLE_EQ(joint_accuracy(preds, truth), 90.0);
  EXPECT_DOUBLE_EQ(joint_accuracy(std::vector{judged(true, false)}, {TruthLabels{true, true}}), 0.0);
  EXPECT_THROW(joint_accuracy(std::vector<SceneJudgment>{}, {}), EmptyInput);
  EXPECT_THROW(joint_accuracy(preds, {TruthLabels{}}), LengthMismatch);
}

TEST(Joint, MissingPredictionsScoreZero) {
  std::vector<Prediction> preds{judged(false, false), std::nullopt};
  EXPECT_DOUBLE_EQ(joint_accuracy(preds, {TruthLabels{}, TruthLabels{}}), 50.0);
}

TEST(Aggregate, Examples) {
  const auto a = aggregate_folds({90, 92, 94, 96, 98});
  EXPECT_EQ(a.mean, 94);
  EXPECT_EQ(a.spread, 3);
  EXPECT_DOUBLE_EQ(a.raw_variance, 10.0);
  EXPECT_DOUBLE_EQ(a.raw_sd, std::sqrt(10.0));
  const auto c = aggregate_folds({88, 88, 88, 88, 88});
  EXPECT_EQ(c.mean, 88);
  EXPECT_EQ(c.spread, 0);
  EXPECT_THROW(aggregate_folds({20}), TooFewFolds);
  EXPECT_EQ(aggregate_folds({92.5, 92.5}).mean, 93);
}

TEST(Deltas, PublishedCells) {
  const CellTable cells = parse_cell_table(load_fixture("published_cells.json"));
  EXPECT_EQ(cells.size(), 9u);
  const auto d = delta_table(cells, {Scenario::S1, Scenario::S2, Scenario::S3}, "base",
                             "fine-tuned");
  EXPECT_EQ(d.finetune_gain.at(Scenario::S1), 59);
  EXPECT_EQ(d.finetune_gain.at(Scenario::S2), 74);
  EXPECT_EQ(d.finetune_gain.at(Scenario::S3), 47);
  EXPECT_EQ(d.depth_delta.at(Scenario::S1), -18);
  EXPECT_EQ(d.depth_delta.at(Scenario::S2), 0);
  EXPECT_EQ(d.depth_delta.at(Scenario::S3), -8);
}

TEST(Deltas, MissingCell) {
  CellTable cells;
  cells[{Scenario::S1, PromptVariant::VisionOnly, "base"}] = 50;
  EXPECT_THROW(delta_table(cells, {Scenario::S1}, "base", "fine-tuned"), MissingCell);
  cells[{Scenario::S1, PromptVariant::VisionOnly, "fine-tuned"}] = 50;
  cells[{Scenario::S1, PromptVariant::VisionPlusDepth, "fine-tuned"}] = 50;
  const auto d = delta_table(cells, {Scenario::S1}, "base", "fine-tuned");
  EXPECT_EQ(d.finetune_gain.at(Scenario::S1), 0);
  EXPECT_EQ(d.depth_delta.at(Scenario::S1), 0);
}

TEST(RunEval, PerfectMockScoresHundred) {
  const auto data = make_dataset(Scenario::S2, 100, 4);
  BackendConfig b;
  const auto report = run_eval(data, {b}, {PromptVariant::VisionOnly, PromptVariant::VisionPlusDepth},
                               EvalOptions{5, 1, {}, 2});
  ASSERT_EQ(report.cells.size(), 2u);
  for (const auto& c : report.cells) {
    ASSERT_TRUE(c.aggregate.has_value());
    EXPECT_EQ(c.aggregate->mean, 100);
    EXPECT_EQ(c.aggregate->spread, 0);
  }
  EXPECT_EQ(report.parse_failure_rate, 0.0);
}

TEST(RunEval, NoisyMockNearEightyEight) {
  // (1 - eps)^2 = 0.88
  BackendConfig b;
  b.epsilon = 1.0 - std::sqrt(0.88);
  for (Scenario s : {Scenario::S1, Scenario::S2, Scenario::S3}) {
    const auto data = make_dataset(s, 1000, 10 + static_cast<int>(s));
    const auto report = run_eval(data, {b}, {PromptVariant::VisionOnly}, EvalOptions{5, 3, {}, 0});
    const auto* cell = report.find(s, PromptVariant::VisionOnly, b.label());
    ASSERT_NE(cell, nullptr);
    EXPECT_NEAR(cell->aggregate->raw_mean, 88.0, 3.0) << to_string(s);
  }
}

TEST(RunEval, MonotoneInNoise) {
  const auto data = make_dataset(Scenario::S3, 2000, 6);
  double previous = 101.0;
  for (double eps : {0.0, 0.05, 0.1, 0.2, 0.35, 0.5}) {
    BackendConfig b;
    b.epsilon = eps;
    const auto r = run_eval(data, {b}, {PromptVariant::VisionOnly}, EvalOptions{5, 3, {}, 0});
    const double acc = r.cells.at(0).aggregate->raw_mean;
    const double se = 100.0 * std::sqrt(0.25 / 2000.0);
    EXPECT_LE(acc, previous + se) << eps;
    previous = acc;
  }
}

TEST(RunEval, ReportDeterministicAndRoundTrips) {
  const auto data = make_dataset(Scenario::S1, 150, 2);
  BackendConfig base, tuned;
  base.name = "base";
  base.epsilon = 0.4;
  tuned.name = "fine-tuned";
  tuned.epsilon = 0.05;
  const std::vector<PromptVariant> variants{PromptVariant::VisionOnly,
                                            PromptVariant::VisionPlusDepth};
  const auto a = run_eval(data, {base, tuned}, variants, EvalOptions{5, 9, {}, 1});
  const auto b = run_eval(data, {base, tuned}, variants, EvalOptions{5, 9, {}, 3});
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(report_to_json(a)["schema_version"], kReportSchemaVersion);
  ASSERT_TRUE(a.deltas.has_value());
  EXPECT_GT(a.deltas->finetune_gain.at(Scenario::S1), 0);
  const auto back = report_from_json(report_to_json(a));
  EXPECT_EQ(report_to_json(back).dump(), report_to_json(a).dump());
  EXPECT_NE(format_report_table(a).find("S1"), std::string::npos);
}

TEST(RunEval, DuplicateBackendLabels) {
  const auto data = make_dataset(Scenario::S1, 20, 2);
  BackendConfig b;
  EXPECT_THROW(run_eval(data, {b, b}, {PromptVariant::VisionOnly}, EvalOptions{}), ConfigError);
}

TEST(RunEval, HttpFailuresAreTallied) {
  const auto data = make_dataset(Scenario::S1, 10, 2);
  BackendConfig b;
  b.kind = BackendKind::Http;
  b.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
  b.max_retries = 0;
  b.timeout_ms = 500;
  const auto r = run_eval(data, {b}, {PromptVariant::VisionOnly}, EvalOptions{5, 1, {}, 1});
  EXPECT_EQ(r.backend_error_rate, 1.0);
  EXPECT_EQ(r.cells.at(0).aggregate->mean, 0);
}

TEST(Dataset, RequiresTruth) {
  std::istringstream in(R"({"scene_id":"a","objects":[{"label":"fumehood","position":[1,0,0]}]})");
  EXPECT_THROW(load_dataset(in), SchemaError);
}
