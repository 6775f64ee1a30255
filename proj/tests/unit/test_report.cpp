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

#include <random>

#include "pcosdx/canonical.hpp"
#include "pcosdx/diagnosis.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "pcosdx/report.hpp"
#include "pcosdx/workflow.hpp"
#include "support.hpp"

namespace pcosdx {
namespace {

using testing::data_path;
using testing::normal_record;
using testing::ScriptedBackend;
using S = CriterionStatus;

const ThresholdConfig& cfg() {
  static ThresholdConfig c = testing::shipped_thresholds();
  return c;
}

struct Kg {
  KnowledgeGraph graph = load_graph(data_path("kg/kg.json"));
  HashEmbedder embedder;
  RetrievalIndex index{graph, embedder};
};

const RetrievalIndex& index() {
  static Kg kg;
  return kg.index;
}

// Sums, in call order, the usage it hands out.
class TallyBackend : public AgentBackend {
 public:
  explicit TallyBackend(AgentBackend& inner) : inner_(inner) {}
  BackendInfo info() const override { return inner_.info(); }
  Completion complete(const PromptSpec& prompt) override {
    Completion c = inner_.complete(prompt);
    tally += c.usage;
    ++calls;
    return c;
  }
  Usage tally;
  std::size_t calls = 0;

 private:
  AgentBackend& inner_;
};

DiagnosisRun run(AgentBackend& b, const PatientRecord& p, const RetrievalIndex* idx = &index()) {
  WorkflowContext ctx{cfg(), b, idx, {}};
  return run_diagnosis(p, ctx);
}

const CriterionRow& row(const std::vector<CriterionRow>& t, CriterionId id) {
  return *std::find_if(t.begin(), t.end(), [&](const CriterionRow& r) { return r.id == id; });
}

TEST(Report, CaseOneConfirmedWithTwoMetCriteria) {
  RuleOracleBackend oracle(cfg());
  auto r = run(oracle, testing::fixture_record("fixtures/case1.json")).report;
  EXPECT_EQ(r.outcome.kind, OutcomeKind::Confirmed);
  EXPECT_EQ(r.met_components, (std::vector<std::string>{"cycles", "hyperandrogenism"}));
  EXPECT_EQ(row(r.criteria_table, CriterionId::IrregularCycles).result->status, S::Yes);
  EXPECT_EQ(row(r.criteria_table, CriterionId::ClinicalHA).result->status, S::No);
  EXPECT_EQ(row(r.criteria_table, CriterionId::BiochemicalHA).result->status, S::Yes);
  EXPECT_TRUE(row(r.criteria_table, CriterionId::PCOM).skipped);
  EXPECT_FALSE(row(r.criteria_table, CriterionId::PCOM).result.has_value());
  for (const auto& x : r.exclusion_table) EXPECT_EQ(x.result->status, S::No);
  ASSERT_TRUE(r.assessment.has_value());
  EXPECT_EQ(r.assessment->status, S::Yes);
  EXPECT_FALSE(r.kg_manifest_hash.empty());
}

TEST(Report, EarlyTerminationMarksSkippedRows) {
  ScriptedBackend b(cfg(), {});
  auto r = run(b, normal_record()).report;
  EXPECT_EQ(r.outcome.kind, OutcomeKind::Excluded);
  EXPECT_TRUE(row(r.criteria_table, CriterionId::PCOM).skipped);
  for (const auto& x : r.exclusion_table) EXPECT_TRUE(x.skipped);
  EXPECT_FALSE(row(r.criteria_table, CriterionId::IrregularCycles).skipped);
}

TEST(Report, TemplateDefaultsWithoutGraph) {
  RuleOracleBackend oracle(cfg());
  auto r = run(oracle, testing::fixture_record("fixtures/case1.json"), nullptr).report;
  EXPECT_EQ(r.outcome.kind, OutcomeKind::Confirmed);
  ASSERT_FALSE(r.recommendations.empty());
  for (const auto& rec : r.recommendations) {
    EXPECT_TRUE(rec.template_default);
    EXPECT_TRUE(rec.citations.empty());
  }
  EXPECT_TRUE(r.kg_manifest_hash.empty());
  EXPECT_NE(std::find_if(r.risk_flags.begin(), r.risk_flags.end(),
                         [](const std::string& f) { return f.find("template defaults") != std::string::npos; }),
            r.risk_flags.end());
}

TEST(Report, BorderlineFlag) {
  RuleOracleBackend oracle(cfg());
  auto p = normal_record();
  p.biochemistry.prolactin->value = 24;  // within 10% of 25
  auto r = run(oracle, p).report;
  EXPECT_NE(std::find_if(r.risk_flags.begin(), r.risk_flags.end(),
                         [](const std::string& f) { return f.rfind("borderline:", 0) == 0; }),
            r.risk_flags.end());
}

// Property: across random scripted sessions every report is internally
// consistent and its citations resolve in the graph it names.
TEST(Report, ConsistencyAndNoFabrication) {
  std::mt19937_64 rng(99);
  const auto& g = index().graph();
  for (int i = 0; i < 300; ++i) {
    std::map<std::string, S> script;
    for (const char* k : {"Irregular_cycles", "Clinical_hyperandrogenism", "Biochemical_hyperandrogenism",
                          "Polycystic_ovarian_morphology", "NCCAH", "Thyroid_dysfunction", "Hyperprolactinemia"})
      script[k] = testing::kAllStatuses[rng() % 3];
    ScriptedBackend b(cfg(), script);
    auto r = run(b, normal_record("r" + std::to_string(i))).report;
    auto st = [&](CriterionId id) {
      const auto& x = row(r.criteria_table, id);
      return x.skipped ? S::Yes : x.result->status;  // unevaluated counts as optimistic
    };
    if (r.outcome.kind == OutcomeKind::Confirmed)
      EXPECT_TRUE(testing::oracle_two_of_three(st(CriterionId::IrregularCycles), st(CriterionId::ClinicalHA),
                                               st(CriterionId::BiochemicalHA), st(CriterionId::PCOM)));
    if (r.outcome.kind == OutcomeKind::Confirmed || r.outcome.kind == OutcomeKind::Alternative)
      for (const auto& x : r.exclusion_table) EXPECT_FALSE(x.skipped);
    for (const auto& x : r.criteria_table)
      if (!x.skipped) EXPECT_EQ(x.result->id, x.id);
    for (const auto& rec : r.recommendations) {
      EXPECT_TRUE(rec.template_default || !rec.citations.empty());
      for (const auto& c : rec.citations) EXPECT_NE(g.find_chunk(c), nullptr) << c;
    }
    for (const auto& c : r.evidence_citations) {
      const Chunk* chunk = g.find_chunk(c.chunk_id);
      ASSERT_NE(chunk, nullptr) << c.chunk_id;
      EXPECT_EQ(chunk->doc_id, c.doc_id);
      EXPECT_NE(chunk->text.find(c.text_excerpt), std::string::npos);
    }
    EXPECT_EQ(r.kg_manifest_hash, g.manifest_hash());
  }
}

TEST(Report, CostEqualsLoggedUsage) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::map<std::string, S> script;
    for (const char* k : {"Irregular_cycles", "Clinical_hyperandrogenism", "Biochemical_hyperandrogenism",
                          "Polycystic_ovarian_morphology", "NCCAH", "Thyroid_dysfunction", "Hyperprolactinemia"})
      script[k] = testing::kAllStatuses[rng() % 3];
    ScriptedBackend scripted(cfg(), script);
    TallyBackend tally(scripted);
    auto result = run(tally, normal_record("c" + std::to_string(i)));
    const auto& cost = result.report.cost;

    Usage events;
    std::size_t calls = 0;
    for (const auto& e : result.state.events)
      if (e.event == "agent_call") {
        events += e.usage;
        ++calls;
      }
    EXPECT_EQ(calls, tally.calls);
    EXPECT_EQ(events, tally.tally);
    EXPECT_EQ(cost.prompt_tokens, tally.tally.prompt_tokens);
    EXPECT_EQ(cost.completion_tokens, tally.tally.completion_tokens);
    EXPECT_EQ(cost.total_tokens, tally.tally.total_tokens());
    EXPECT_EQ(cost.wall_seconds, tally.tally.wall_seconds);

    std::int64_t step_tokens = 0;
    std::size_t step_calls = 0;
    for (const auto& s : cost.per_step) {
      step_tokens += s.usage.total_tokens();
      step_calls += s.calls;
    }
    EXPECT_EQ(step_tokens, cost.total_tokens);
    EXPECT_EQ(step_calls, calls);
    EXPECT_GT(cost.total_tokens, 0);
  }
}

TEST(Render, JsonRoundTripAndDeterminism) {
  RuleOracleBackend oracle(cfg());
  for (const char* f : {"fixtures/case1.json"}) {
    auto r = run(oracle, testing::fixture_record(f)).report;
    auto once = render_report_text(r, ReportFormat::Json);
    EXPECT_EQ(once, render_report_text(r, ReportFormat::Json));
    auto back = report_from_json(Json::parse(once));
    EXPECT_EQ(back, r);
    EXPECT_EQ(render_report_text(back, ReportFormat::Json), once);
    EXPECT_EQ(render_report_text(r, ReportFormat::Markdown), render_report_text(back, ReportFormat::Markdown));
  }
}

TEST(Render, MarkdownHasOneRowPerCriterion) {
  RuleOracleBackend oracle(cfg());
  auto r = run(oracle, testing::fixture_record("fixtures/case1.json")).report;
  auto md = render_report_text(r, ReportFormat::Markdown);
  for (const char* name : {"IrregularCycles", "ClinicalHA", "BiochemicalHA", "PCOM", "Exclusion-NCCAH",
                           "Exclusion-Thyroid", "Exclusion-Prolactin"}) {
    std::string needle = std::string("| ") + name + " |";
    auto first = md.find(needle);
    ASSERT_NE(first, std::string::npos) << name;
    EXPECT_EQ(md.find(needle, first + 1), std::string::npos) << name;
  }
  EXPECT_NE(md.find("| PCOM | step3 | skipped |"), std::string::npos);
  EXPECT_NE(md.find("PCOS_CONFIRMED"), std::string::npos);
}

}  // namespace
}  // namespace pcosdx
