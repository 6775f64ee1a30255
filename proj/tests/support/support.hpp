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

// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <string>

#include "pcosdx/backends.hpp"
#include "pcosdx/guideline_rules.hpp"
#include "pcosdx/patient.hpp"
#include "pcosdx/workflow.hpp"

#ifndef PCOSDX_TEST_DATA_DIR
#error "PCOSDX_TEST_DATA_DIR must be defined"
#endif

namespace pcosdx::testing {

inline std::string data_path(const std::string& rel) { return std::string(PCOSDX_TEST_DATA_DIR) + "/" + rel; }

inline ThresholdConfig shipped_thresholds() { return load_threshold_config(data_path("config/thresholds.json")); }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline PatientRecord fixture_record(const std::string& rel) { return parse_record(read_text(data_path(rel))); }

inline Quantity q(double v, const char* unit) { return Quantity{v, unit}; }

// Every field present and unremarkable under the shipped thresholds.
inline PatientRecord normal_record(std::string id = "normal") {
  PatientRecord p;
  p.patient_id = std::move(id);
  p.age_years = 29;
  p.years_post_menarche = 16;
  p.menstrual = {26.0, 31.0, 12, 33.0};
  p.clinical_signs = {0, AcneGrade::Absent, false};
  p.biochemistry.total_testosterone = q(1.2, "nmol/L");
  p.biochemistry.free_testosterone = q(3.1, "pg/mL");
  p.biochemistry.free_androgen_index = q(2.4, "%");
  p.biochemistry.dheas = q(5.5, "umol/L");
  p.biochemistry.ohp_17 = q(1.9, "nmol/L");
  p.biochemistry.tsh = q(1.7, "mIU/L");
  p.biochemistry.prolactin = q(12, "ng/mL");
  p.imaging = {9, 11, 6.5, 7.0, std::nullopt};
  return p;
}

// Answers criteria prompts with fixed statuses, delegating everything else
// to the rule oracle. Counts calls per step and reports synthetic usage
// derived from the prompt and reply sizes.
class ScriptedBackend : public AgentBackend {
 public:
  ScriptedBackend(ThresholdConfig cfg, std::map<std::string, CriterionStatus> script)
      : oracle_(std::move(cfg)), script_(std::move(script)) {}

  BackendInfo info() const override { return {"scripted", BackendKind::RuleOracle, std::nullopt}; }

  Completion complete(const PromptSpec& prompt) override {
    Completion c;
    auto keys = reply_keys(prompt.step);
    bool scripted = !keys.empty() && prompt.step != Step::Report;
    if (scripted) {
      Json reply = Json::object();
      for (const auto& k : keys) {
        auto it = script_.find(k);
        auto status = it == script_.end() ? CriterionStatus::No : it->second;
        reply[k] = {{"status", std::string(to_string(status))}, {"reasoning", "scripted"}};
      }
      c.text = canonical_dump(reply);
    } else {
      c = oracle_.complete(prompt);
    }
    c.usage.prompt_tokens = static_cast<std::int64_t>(prompt.render().size() / 4 + 1);
    c.usage.completion_tokens = static_cast<std::int64_t>(c.text.size() / 4 + 1);
    c.usage.wall_seconds = 0.001 * static_cast<double>(1 + prompt.render().size() % 7);
    std::lock_guard lock(mu_);
    ++calls_[prompt.step];
    return c;
  }

  std::size_t calls(Step s) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(s);
    return it == calls_.end() ? 0 : it->second;
  }

 private:
  RuleOracleBackend oracle_;
  std::map<std::string, CriterionStatus> script_;
  mutable std::mutex mu_;
  std::map<Step, std::size_t> calls_;
};

// Wraps a backend, counting calls and attaching synthetic usage.
class CountingBackend : public AgentBackend {
 public:
  explicit CountingBackend(AgentBackend& inner) : inner_(inner) {}
  BackendInfo info() const override { return inner_.info(); }
  Completion complete(const PromptSpec& prompt) override {
    Completion c = inner_.complete(prompt);
    c.usage.prompt_tokens += static_cast<std::int64_t>(prompt.render().size() / 4 + 3);
    c.usage.completion_tokens += static_cast<std::int64_t>(c.text.size() / 4 + 1);
    c.usage.wall_seconds += 0.0005 * static_cast<double>(1 + c.text.size() % 11);
    std::lock_guard lock(mu_);
    ++calls_[prompt.step];
    ++total_;
    return c;
  }
  std::size_t calls(Step s) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(s);
    return it == calls_.end() ? 0 : it->second;
  }
  std::size_t total() const {
    std::lock_guard lock(mu_);
    return total_;
  }

 private:
  AgentBackend& inner_;
  mutable std::mutex mu_;
  std::map<Step, std::size_t> calls_;
  std::size_t total_ = 0;
};

inline const CriterionStatus kAllStatuses[] = {CriterionStatus::Yes, CriterionStatus::No,
                                               CriterionStatus::Uncertain};

// Independent two-of-three oracle: enumerates the met components directly.
inline bool oracle_two_of_three(CriterionStatus cyc, CriterionStatus clin, CriterionStatus bio,
                                CriterionStatus pcom) {
  int met = 0;
  if (cyc == CriterionStatus::Yes) met++;
  if (clin == CriterionStatus::Yes || bio == CriterionStatus::Yes) met++;
  if (pcom == CriterionStatus::Yes) met++;
  return met >= 2;
}

// Candidate records: criteria values chosen so the two-of-three gate holds,
// with at least one exclusion lab past its cutoff.
inline PatientRecord random_candidate(std::mt19937_64& rng, int i, const ThresholdConfig& c) {
  std::uniform_real_distribution<double> u(0, 1);
  auto p = normal_record("cand" + std::to_string(i));
  bool cyc = u(rng) < 0.7, ha = u(rng) < 0.7, pcom = u(rng) < 0.7;
  if (int(cyc) + int(ha) + int(pcom) < 2) cyc = ha = true;
  if (cyc) p.menstrual.typical_cycle_max_days = 36 + std::floor(u(rng) * 40);
  if (ha) {
    if (u(rng) < 0.5)
      p.clinical_signs.ferriman_gallwey_score = 2 + static_cast<int>(u(rng) * 20);
    else
      p.biochemistry.total_testosterone->value = 2.51 + u(rng) * 3;
  }
  if (pcom) p.imaging.follicle_count_left = 20 + static_cast<int>(u(rng) * 20);
  int mask = 1 + static_cast<int>(u(rng) * 7);  // non-empty subset of {nccah, thyroid, prolactin}
  if (mask & 1) p.biochemistry.ohp_17->value = c.ohp17_upper->value + 1e-3 + u(rng) * 10;
  if (mask & 2)
    p.biochemistry.tsh->value =
        u(rng) < 0.5 ? c.tsh_upper->value + 1e-3 + u(rng) * 8 : c.tsh_lower->value * (0.05 + 0.9 * u(rng));
  if (mask & 4) p.biochemistry.prolactin->value = c.prolactin_upper->value + 1e-3 + u(rng) * 80;
  return p;
}

inline AlternativeCause expected_cause(const PatientRecord& p, const ThresholdConfig& c) {
  const auto& b = p.biochemistry;
  if (b.ohp_17->value > c.ohp17_upper->value) return AlternativeCause::NCCAH;
  if (b.tsh->value < c.tsh_lower->value || b.tsh->value > c.tsh_upper->value) return AlternativeCause::Thyroid;
  return AlternativeCause::Hyperprolactinemia;
}

}  // namespace pcosdx::testing
