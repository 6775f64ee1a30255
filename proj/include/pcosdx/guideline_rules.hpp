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

// Deterministic encoding of the Rotterdam thresholds and the exclusion lab
// cutoffs. These evaluators are the answers of the rule-oracle backend and
// the cross-check applied to model replies.
//
// Boundary conventions: cycle bounds and every lab upper limit are strict
// (< / >); Ferriman-Gallwey and both PCOM thresholds are inclusive (>=).
// Missing data yields Uncertain with a "missing:<field>" reason, and a No is
// only returned when every input that could have produced a Yes is present,
// so removing a field can never flip Yes and No.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcosdx/canonical.hpp"
#include "pcosdx/patient.hpp"

namespace pcosdx {

inline constexpr int kThresholdConfigVersion = 1;

struct ThresholdConfig {
  // Menstrual cycle rules (days / cycles per year / years post-menarche).
  double cycle_short_days = 21;
  double cycle_long_days = 35;
  int min_cycles_per_year = 8;
  double single_cycle_irregular_days = 90;
  double post_menarche_years_gate = 3;
  // Ferriman-Gallwey score, inclusive.
  int fg_cutoff = 2;
  // Androgen markers, strict upper limits. Lab cutoffs have no built-in
  // defaults; they come from the configuration file.
  std::optional<Quantity> total_testosterone_upper;
  std::optional<Quantity> free_testosterone_upper;
  std::optional<Quantity> fai_upper;
  std::optional<Quantity> dheas_upper;
  // Polycystic ovarian morphology, inclusive, either ovary.
  int follicle_count_per_ovary_min = 20;
  double ovarian_volume_ml_min = 10;
  // Differential exclusion labs.
  std::optional<Quantity> ohp17_upper;
  std::optional<Quantity> tsh_lower;
  std::optional<Quantity> tsh_upper;
  std::optional<Quantity> prolactin_upper;

  bool operator==(const ThresholdConfig&) const = default;
};

// Throws ConfigError listing the first violated invariant.
void validate(const ThresholdConfig& cfg);
Json to_json(const ThresholdConfig& cfg);
ThresholdConfig threshold_config_from_json(const Json& j);
ThresholdConfig load_threshold_config(const std::string& path);
std::string config_hash(const ThresholdConfig& cfg);

// Fail-fast check that every lab present in the record has a configured
// cutoff in a matching unit. Throws ConfigError.
void require_cutoffs_for(const PatientRecord& p, const ThresholdConfig& cfg);

enum class CriterionStatus { Yes, No, Uncertain };

std::string_view to_string(CriterionStatus s);
// Case-insensitive; nullopt for anything outside the three values.
std::optional<CriterionStatus> parse_status(std::string_view s);

enum class CriterionId {
  IrregularCycles,
  ClinicalHA,
  BiochemicalHA,
  PCOM,
  ExclusionNCCAH,
  ExclusionThyroid,
  ExclusionProlactin,
};

std::string_view to_string(CriterionId id);
std::optional<CriterionId> parse_criterion_id(std::string_view s);

struct CriterionResult {
  CriterionId id = CriterionId::IrregularCycles;
  CriterionStatus status = CriterionStatus::Uncertain;
  std::string reasoning;
  std::vector<std::string> evidence;     // KG entity ids
  std::vector<std::string> inputs_used;  // field paths
  std::vector<std::string> missing;      // field paths behind an Uncertain

  bool operator==(const CriterionResult&) const = default;
};

Json to_json(const CriterionResult& r);
CriterionResult criterion_result_from_json(const Json& j);

CriterionResult eval_irregular_cycles(const PatientRecord& p, const ThresholdConfig& cfg);
CriterionResult eval_clinical_ha(const PatientRecord& p, const ThresholdConfig& cfg);
// Throws ConfigError when a present androgen marker has no cutoff.
CriterionResult eval_biochemical_ha(const PatientRecord& p, const ThresholdConfig& cfg);
CriterionResult eval_pcom(const PatientRecord& p, const ThresholdConfig& cfg);
// NCCAH, thyroid, prolactin, in that order. Yes means the excluding
// condition is suspected.
std::vector<CriterionResult> eval_exclusions(const PatientRecord& p,
                                             const ThresholdConfig& cfg);

// A numeric threshold applied to one field; used for borderline flags.
struct Cutoff {
  Field field;
  double value;
  std::string label;
};
std::vector<Cutoff> configured_cutoffs(const ThresholdConfig& cfg);

// Shortest decimal rendering used in every generated text ("2.5", "35").
std::string format_number(double v);

}  // namespace pcosdx
