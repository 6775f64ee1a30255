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

// Cohort evaluation: batch diagnosis, confusion matrix, cost summary.
// CONFIRMED is a positive call; EXCLUDED and ALTERNATIVE are negative;
// INDETERMINATE and failed cases are counted but kept out of the matrix.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcosdx/diagnosis.hpp"

namespace pcosdx {

struct LabeledCohort {
  std::vector<PatientRecord> records;
  std::map<std::string, bool> labels;  // patient_id -> positive
  std::string provenance;

  // Throws Error on duplicate ids or unlabelled records.
  void validate() const;
};

// Case-insensitive: 1/yes/y/true/positive/pcos and 0/no/n/false/negative/
// control. Throws ValueError otherwise.
bool parse_label(std::string_view cell);

LabeledCohort load_cohort_csv(const std::string& path, const SchemaMapping& mapping,
                              const std::string& label_column);
// Labels come from each record's extensions[label_column].
LabeledCohort load_cohort_jsonl(const std::string& path, const std::string& label_column);

struct MetricsReport {
  std::string label;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t indeterminate = 0;
  std::size_t failures = 0;
  std::size_t total = 0;
  std::map<std::string, std::size_t> outcome_counts;  // by outcome kind, plus "FAILED"
  // nullopt when the denominator is zero.
  std::optional<double> accuracy, precision, recall, f1;
  double mean_tokens = 0.0;
  double mean_wall_seconds = 0.0;
};

// Fills the ratio fields from the counts.
void compute_ratios(MetricsReport& m);
MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

Json to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const Json& j);

struct EvalOptions {
  std::string label = "run";
  std::size_t jobs = 1;
  // Abort once failed cases exceed this fraction of the cohort.
  double failure_ceiling = 0.2;
  std::string per_case_path;  // JSON-lines, written when non-empty
};

// Each case runs with its own logical clock and context copy. Throws
// EvaluationAborted when the failure ceiling is exceeded.
MetricsReport evaluate_cohort(const LabeledCohort& cohort, const ThresholdConfig& cfg, AgentBackend& backend,
                              const RetrievalIndex* index, const WorkflowOptions& options,
                              const EvalOptions& eval);

// Markdown table in the usual "Acc. Pre. Rec. F1" layout (percentages),
// rows sorted by label, best value per column marked with '*' (ties all
// marked).
std::string compare_runs(std::vector<MetricsReport> runs);

}  // namespace pcosdx
