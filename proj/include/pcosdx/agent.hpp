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

// Agent roles, prompt assembly and the backend contract.
//
// Every prompt has five sections rendered in a fixed order: role, task,
// guidelines, knowledge, output constraint. The knowledge header is emitted
// even when nothing was retrieved. A prompt's identity (for cassettes and
// audit logs) is the SHA-256 of its rendering.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcosdx/guideline_rules.hpp"
#include "pcosdx/kg_types.hpp"
#include "pcosdx/patient.hpp"

namespace pcosdx {

enum class AgentRole {
  Coordinator,
  GynecologicalEndocrine,
  Radiology,
  Exclusion,
  Reporting,
  Extraction,
};

std::string_view to_string(AgentRole r);
std::optional<AgentRole> parse_role(std::string_view s);

enum class Step {
  CyclesAndClinical,  // step 1
  Biochemical,        // step 2
  Imaging,            // step 3
  Exclusion,
  Report,
  RecordExtraction,
  EntityExtraction,
  RelationExtraction,
};

std::string_view to_string(Step s);
std::optional<Step> parse_step(std::string_view s);

// Patient fields a step may see. Empty for non-clinical steps.
std::span<const Field> step_fields(Step s);
AgentRole role_for(Step s);

struct PromptSpec {
  AgentRole role = AgentRole::Coordinator;
  Step step = Step::CyclesAndClinical;
  std::string role_preamble;
  std::string task_description;
  std::string task_input;  // canonical JSON
  std::string static_guidelines;
  std::string injected_knowledge;
  std::string output_schema;

  std::string render() const;
  std::string hash() const;
};

// Expected top-level keys of a criterion-style reply, in prompt order.
std::vector<std::string> reply_keys(Step s);
// Criterion each reply key feeds, for the clinical steps.
std::optional<CriterionId> criterion_for_key(std::string_view key);

std::string render_knowledge(const RetrievalResult& knowledge);

// Builds a clinical-step prompt. In strict mode a slice holding fields
// outside step_fields(step) is an AssemblyError.
PromptSpec assemble_prompt(AgentRole role, Step step, const Json& patient_slice,
                           const ThresholdConfig& cfg, const RetrievalResult& knowledge,
                           bool strict = true);

// Reporting agent prompt; task input is the findings summary, not patient
// data.
PromptSpec assemble_report_prompt(const Json& findings, const RetrievalResult& knowledge);

// Extraction prompts (patient notes, KG entities, KG relations).
PromptSpec assemble_record_extraction_prompt(std::string_view note);
PromptSpec assemble_entity_prompt(const Json& task, std::span<const OntologyLabel> ontology);
PromptSpec assemble_relation_prompt(const Json& task);

struct CriterionVerdict {
  CriterionStatus status = CriterionStatus::Uncertain;
  std::string reasoning;
  bool operator==(const CriterionVerdict&) const = default;
};

struct AgentReply {
  std::map<std::string, CriterionVerdict> criteria;
  std::vector<std::string> parse_diagnostics;
};

// Parses a JSON reply, applying only two syntactic repairs (markdown code
// fence stripping, trailing comma removal). Repairs are noted in
// `diagnostics`. Throws ReplyError.
Json parse_json_reply(std::string_view raw, std::vector<std::string>& diagnostics);

// Criterion-style reply: keys must equal `expected_keys` exactly and every
// status must be Yes/No/Uncertain (case-insensitive). Throws ReplyError.
AgentReply parse_reply(std::string_view raw, std::span<const std::string> expected_keys);

// ---------------------------------------------------------------------------
// Backend contract.

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double wall_seconds = 0.0;

  std::int64_t total_tokens() const { return prompt_tokens + completion_tokens; }
  Usage& operator+=(const Usage& o);
  bool operator==(const Usage&) const = default;
};

Json to_json(const Usage& u);
Usage usage_from_json(const Json& j);

enum class BackendKind { Remote, RuleOracle, Replay };
std::string_view to_string(BackendKind k);

struct BackendInfo {
  std::string id;
  BackendKind kind = BackendKind::RuleOracle;
  std::optional<std::string> model_name;
};

struct Completion {
  std::string text;
  Usage usage;
};

// Implementations must tolerate concurrent complete() calls.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual BackendInfo info() const = 0;
  // Throws BackendError (transport), SliceError (rule oracle input),
  // CassetteMiss (replay).
  virtual Completion complete(const PromptSpec& prompt) = 0;
};

// Receives every completed call, including retries.
using CallObserver = std::function<void(const PromptSpec&, const Completion&)>;

// Completes and parses a criterion-style prompt. A ReplyError triggers one
// retry with a reminder appended to the output constraint; a second failure
// becomes a BackendError.
AgentReply call_criteria_agent(AgentBackend& backend, const PromptSpec& prompt,
                               const CallObserver& observer);

// Same retry policy for JSON replies with a free-form shape.
Json call_json_agent(AgentBackend& backend, const PromptSpec& prompt, const CallObserver& observer);

inline constexpr std::string_view kJsonOnlyReminder = "Return only the JSON object.";

}  // namespace pcosdx
