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

#pragma once

// Final structured report: criteria and exclusion tables (skipped rows are
// marked, never filled in), KG-cited recommendations, risk flags and cost.

#include <optional>
#include <string>
#include <vector>

#include "pcosdx/workflow.hpp"

namespace pcosdx {

struct CriterionRow {
  CriterionId id = CriterionId::IrregularCycles;
  Step step = Step::CyclesAndClinical;
  bool skipped = true;
  std::optional<CriterionResult> result;
  bool operator==(const CriterionRow&) const = default;
};

struct Recommendation {
  std::string text;
  std::vector<std::string> citations;  // chunk ids
  bool template_default = false;
  bool operator==(const Recommendation&) const = default;
};

struct StepCost {
  Step step = Step::CyclesAndClinical;
  std::size_t calls = 0;
  Usage usage;
  bool operator==(const StepCost&) const = default;
};

struct CostSummary {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
  double wall_seconds = 0.0;
  std::vector<StepCost> per_step;
  bool operator==(const CostSummary&) const = default;
};

struct DiagnosticReport {
  std::string session_id;
  DiagnosisOutcome outcome;
  std::vector<CriterionRow> criteria_table;   // cycles, clinical, biochemical, PCOM
  std::vector<CriterionRow> exclusion_table;  // NCCAH, thyroid, prolactin
  std::vector<std::string> met_components;    // "cycles", "hyperandrogenism", "pcom"
  std::vector<std::string> exclusion_triggers;
  std::optional<CriterionVerdict> assessment;  // reporting agent's overall call
  std::vector<Citation> evidence_citations;
  std::vector<Recommendation> recommendations;
  std::vector<std::string> risk_flags;
  CostSummary cost;
  std::string engine_version;
  std::string config_hash;
  std::string kg_manifest_hash;  // empty when no graph was loaded

  bool operator==(const DiagnosticReport&) const = default;
};

Json to_json(const DiagnosticReport& r);
DiagnosticReport report_from_json(const Json& j);

enum class ReportFormat { Json, Markdown };
std::string render_report_text(const DiagnosticReport& r, ReportFormat format);

// Values within this fraction of a configured cutoff get a borderline flag.
inline constexpr double kBorderlineFraction = 0.10;

// Runs the reporting agent (its call is appended to the state and audit
// log) and assembles the report. Does not throw on agent or retrieval
// failure; those degrade to template text plus a risk flag.
DiagnosticReport generate_report(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx);

// Sum of usage over the state's agent_call events, in log order.
Usage logged_usage(const WorkflowState& state);

}  // namespace pcosdx
