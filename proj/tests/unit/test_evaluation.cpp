// Copyright 2026 The pcosdx Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <random>

#include "pcosdx/errors.hpp"
#include "pcosdx/evaluation.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "support.hpp"

namespace pcosdx {
namespace {

namespace fs = std::filesystem;
using testing::data_path;

const ThresholdConfig& cfg() {
  static ThresholdConfig c = testing::shipped_thresholds();
  return c;
}

// Closed-form oracle, computed without the library.
struct Expected {
  double acc, pre, rec, f1;
};
Expected oracle(double tp, double fp, double fn, double tn) {
  double pre = tp / (tp + fp), rec = tp / (tp + fn);
  return {(tp + tn) / (tp + fp + fn + tn), pre, rec, 2 * tp / (2 * tp + fp + fn)};
}

TEST(Metrics, ClosedFormExample) {
  auto m = metrics_from_counts(45, 5, 10, 40);
  ASSERT_TRUE(m.accuracy && m.precision && m.recall && m.f1);
  EXPECT_NEAR(*m.accuracy, 0.85, 1e-9);
  EXPECT_NEAR(*m.precision, 0.90, 1e-9);
  EXPECT_NEAR(*m.recall, 45.0 / 55.0, 1e-9);
  EXPECT_NEAR(*m.f1, 90.0 / 105.0, 1e-9);
  EXPECT_NEAR(*m.recall, 0.81818, 1e-5);
  EXPECT_NEAR(*m.f1, 0.85714, 1e-5);
}

TEST(Metrics, RandomTuplesMatchOracle) {
  std::mt19937_64 rng(314);
  std::uniform_int_distribution<std::size_t> d(0, 500);
  int checked = 0;
  while (checked < 200) {
    std::size_t tp = d(rng) + 1, fp = d(rng), fn = d(rng), tn = d(rng);
    auto m = metrics_from_counts(tp, fp, fn, tn);
    auto e = oracle(double(tp), double(fp), double(fn), double(tn));
    ASSERT_TRUE(m.accuracy && m.precision && m.recall && m.f1);
    EXPECT_NEAR(*m.accuracy, e.acc, 1e-9);
    EXPECT_NEAR(*m.precision, e.pre, 1e-9);
    EXPECT_NEAR(*m.recall, e.rec, 1e-9);
    EXPECT_NEAR(*m.f1, e.f1, 1e-9);
    ++checked;
  }
}

TEST(Metrics, PerfectPredictor) {
  auto m = metrics_from_counts(7, 0, 0, 9);
  EXPECT_EQ(*m.accuracy, 1.0);
  EXPECT_EQ(*m.precision, 1.0);
  EXPECT_EQ(*m.recall, 1.0);
  EXPECT_EQ(*m.f1, 1.0);
}

TEST(Metrics, UndefinedRatiosStayUndefined) {
  auto m = metrics_from_counts(0, 0, 0, 12);
  EXPECT_EQ(*m.accuracy, 1.0);
  EXPECT_FALSE(m.precision.has_value());
  EXPECT_FALSE(m.recall.has_value());
  EXPECT_FALSE(m.f1.has_value());
  EXPECT_TRUE(to_json(m).at("precision").is_null());

  auto empty = metrics_from_counts(0, 0, 0, 0);
  EXPECT_FALSE(empty.accuracy.has_value());

  auto zero_tp = metrics_from_counts(0, 3, 4, 5);
  EXPECT_EQ(*zero_tp.precision, 0.0);
  EXPECT_EQ(*zero_tp.recall, 0.0);
  EXPECT_FALSE(zero_tp.f1.has_value());
}

TEST(Metrics, JsonRoundTrip) {
  auto m = metrics_from_counts(45, 5, 10, 40);
  m.label = "x";
  m.mean_tokens = 12.5;
  auto back = metrics_from_json(to_json(m));
  EXPECT_EQ(to_json(back), to_json(m));
}

MetricsReport run_of(const char* label, std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                     std::size_t ind, std::size_t fail, double tok, double wall) {
  auto m = metrics_from_counts(tp, fp, fn, tn);
  m.label = label;
  m.indeterminate = ind;
  m.failures = fail;
  m.total = tp + fp + fn + tn + ind + fail;
  m.mean_tokens = tok;
  m.mean_wall_seconds = wall;
  return m;
}

TEST(CompareRuns, GoldenTable) {
  std::vector<MetricsReport> runs{run_of("rule-oracle", 45, 5, 10, 40, 0, 0, 0.0, 0.0),
                                  run_of("replay-a", 50, 10, 5, 35, 2, 1, 10913.0, 39.8),
                                  run_of("baseline", 45, 5, 10, 40, 0, 0, 812.25, 1.5)};
  EXPECT_EQ(compare_runs(runs), testing::read_text(data_path("golden/compare_runs.md")));
  std::reverse(runs.begin(), runs.end());
  EXPECT_EQ(compare_runs(runs), testing::read_text(data_path("golden/compare_runs.md")));
}

TEST(CompareRuns, SingleRunAndTies) {
  auto one = compare_runs({run_of("only", 1, 1, 1, 1, 0, 0, 0, 0)});
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 3);
  auto two = compare_runs({run_of("a", 45, 5, 10, 40, 0, 0, 0, 0), run_of("b", 45, 5, 10, 40, 0, 0, 0, 0)});
  EXPECT_NE(two.find("| a | 85.00* | 90.00* | 81.82* | 85.71* |"), std::string::npos);
  EXPECT_NE(two.find("| b | 85.00* | 90.00* | 81.82* | 85.71* |"), std::string::npos);
}

// Throws for records whose typical maximum cycle length is 77 days.
class PoisonedBackend : public AgentBackend {
 public:
  PoisonedBackend() : oracle_(cfg()) {}
  BackendInfo info() const override { return oracle_.info(); }
  Completion complete(const PromptSpec& p) override {
    if (p.task_input.find("\"typical_cycle_max_days\":77") != std::string::npos) throw BackendError("poisoned");
    return oracle_.complete(p);
  }

 private:
  RuleOracleBackend oracle_;
};

const LabeledCohort& cohort60() {
  static LabeledCohort c = load_cohort_jsonl(data_path("fixtures/cohort60.jsonl"), "label");
  return c;
}

TEST(Evaluate, Cohort60IsPerfectWithRuleOracle) {
  RuleOracleBackend oracle(cfg());
  EvalOptions opts;
  opts.label = "rule";
  auto start = std::chrono::steady_clock::now();
  auto m = evaluate_cohort(cohort60(), cfg(), oracle, nullptr, {}, opts);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(m.total, 60u);
  EXPECT_EQ(m.fp + m.fn + m.indeterminate + m.failures, 0u);
  ASSERT_TRUE(m.accuracy.has_value());
  EXPECT_EQ(*m.accuracy, 1.0);
  EXPECT_EQ(*m.f1, 1.0);
  EXPECT_LT(secs, 10.0);
}

TEST(Evaluate, CsvCohortMatchesJsonl) {
  auto csv = load_cohort_csv(data_path("fixtures/cohort60.csv"), load_mapping(data_path("fixtures/cohort60_mapping.json")),
                             "pcos");
  ASSERT_EQ(csv.records.size(), 60u);
  RuleOracleBackend oracle(cfg());
  auto a = evaluate_cohort(csv, cfg(), oracle, nullptr, {}, {});
  auto b = evaluate_cohort(cohort60(), cfg(), oracle, nullptr, {}, {});
  EXPECT_EQ(a.tp, b.tp);
  EXPECT_EQ(a.tn, b.tn);
  EXPECT_EQ(*a.accuracy, 1.0);
  EXPECT_EQ(a.outcome_counts, b.outcome_counts);
}

TEST(Evaluate, ParallelInvariance) {
  RuleOracleBackend oracle(cfg());
  auto graph = load_graph(data_path("kg/kg.json"));
  HashEmbedder embedder;
  RetrievalIndex index(graph, embedder);
  auto dir = fs::temp_directory_path() / "pcosdx_eval_par";
  fs::create_directories(dir);
  EvalOptions one, four;
  one.per_case_path = (dir / "one.jsonl").string();
  four.jobs = 4;
  four.per_case_path = (dir / "four.jsonl").string();
  auto a = evaluate_cohort(cohort60(), cfg(), oracle, &index, {}, one);
  auto b = evaluate_cohort(cohort60(), cfg(), oracle, &index, {}, four);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(testing::read_text(one.per_case_path), testing::read_text(four.per_case_path));
  fs::remove_all(dir);
}

TEST(Evaluate, ConservationWithFailuresAndIndeterminates) {
  LabeledCohort c = cohort60();
  for (std::size_t i = 0; i < c.records.size(); i += 10) c.records[i].menstrual.typical_cycle_max_days = 77;
  for (std::size_t i = 5; i < c.records.size(); i += 20) {
    c.records[i].biochemistry = {};
    c.records[i].imaging = {};
    c.records[i].clinical_signs = {};
  }
  PoisonedBackend b;
  WorkflowOptions strict;
  strict.policy = UncertainPolicy::Strict;
  auto dir = fs::temp_directory_path() / "pcosdx_eval_cons";
  fs::create_directories(dir);
  EvalOptions opts;
  opts.per_case_path = (dir / "cases.jsonl").string();
  opts.jobs = 3;
  auto m = evaluate_cohort(c, cfg(), b, nullptr, strict, opts);
  EXPECT_EQ(m.failures, 6u);
  EXPECT_EQ(m.outcome_counts.at("FAILED"), 6u);
  EXPECT_GT(m.indeterminate, 0u);
  EXPECT_EQ(m.tp + m.fp + m.fn + m.tn + m.indeterminate + m.failures, c.records.size());
  std::size_t sum = 0;
  for (const auto& [k, v] : m.outcome_counts) sum += v;
  EXPECT_EQ(sum, c.records.size());
  auto lines = testing::read_text(opts.per_case_path);
  EXPECT_EQ(static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n')), c.records.size());
  fs::remove_all(dir);
}

TEST(Evaluate, FailureCeilingAborts) {
  LabeledCohort c = cohort60();
  for (std::size_t i = 0; i < 20; ++i) c.records[i].menstrual.typical_cycle_max_days = 77;
  PoisonedBackend b;
  EvalOptions opts;
  opts.failure_ceiling = 0.2;
  EXPECT_THROW(evaluate_cohort(c, cfg(), b, nullptr, {}, opts), EvaluationAborted);
  opts.failure_ceiling = 0.5;
  EXPECT_EQ(evaluate_cohort(c, cfg(), b, nullptr, {}, opts).failures, 20u);
}

TEST(Evaluate, InvalidCohortRejected) {
  LabeledCohort c = cohort60();
  c.records.push_back(c.records.front());
  RuleOracleBackend oracle(cfg());
  EXPECT_THROW(evaluate_cohort(c, cfg(), oracle, nullptr, {}, {}), Error);
  LabeledCohort d = cohort60();
  d.labels.erase(d.records.back().patient_id);
  EXPECT_THROW(d.validate(), Error);
}

TEST(Evaluate, LabelParsing) {
  for (const char* yes : {"1", "yes", "Y", "true", "positive", "PCOS"}) EXPECT_TRUE(parse_label(yes)) << yes;
  for (const char* no : {"0", "no", "N", "false", "negative"}) EXPECT_FALSE(parse_label(no)) << no;
  EXPECT_THROW(parse_label("perhaps"), Error);
}

}  // namespace
}  // namespace pcosdx
