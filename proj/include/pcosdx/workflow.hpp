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

// The coordinator: sequential Rotterdam assessment with conditional steps
// and early termination, then the mandatory exclusion phase.
//
//   step1 (cycles, clinical HA) -- both Yes --> candidate
//   step2 (biochemical HA)      -- cycles and biochem Yes --> candidate
//   step3 (PCOM), skipped when two-of-three is already unreachable
//   candidate --> exclusion (NCCAH, thyroid, prolactin) --> outcome

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcosdx/agent.hpp"
#include "pcosdx/clock.hpp"
#include "pcosdx/guideline_rules.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "pcosdx/patient.hpp"

namespace pcosdx {

// Default: Uncertain counts as not met. Strict: an Uncertain that could
// change the result yields INDETERMINATE instead of a call.
enum class UncertainPolicy { Default, Strict };
std::string_view to_string(UncertainPolicy p);
std::optional<UncertainPolicy> parse_policy(std::string_view s);

enum class OutcomeKind { Confirmed, Excluded, Alternative, Indeterminate };
enum class AlternativeCause { NCCAH, Thyroid, Hyperprolactinemia };
std::string_view to_string(AlternativeCause c);

struct DiagnosisOutcome {
  OutcomeKind kind = OutcomeKind::Excluded;
  std::optional<AlternativeCause> cause;  // Alternative only
  std::vector<std::string> missing;       // Indeterminate only, field paths

  // "PCOS_CONFIRMED", "PCOS_EXCLUDED", "ALTERNATIVE", "INDETERMINATE"
  std::string_view kind_name() const;
  // kind_name plus the cause or missing list, e.g. "ALTERNATIVE(NCCAH)".
  std::string label() const;
  bool operator==(const DiagnosisOutcome&) const = default;
};

Json to_json(const DiagnosisOutcome& o);
DiagnosisOutcome outcome_from_json(const Json& j);

struct StepRecord {
  Step step = Step::CyclesAndClinical;
  AgentRole role = AgentRole::Coordinator;
  std::string timestamp;
  Usage usage;  // every call of the step, retries included
  std::vector<std::string> evidence;  // KG entity ids injected into the prompt
  bool operator==(const StepRecord&) const = default;
};

struct AuditEvent {
  std::string session_id;
  std::string event;  // session_start, agent_call, step_complete, early_termination, outcome
  std::string step;   // empty for session-level events
  std::string payload_hash;
  Usage usage;
  std::string timestamp;
  bool operator==(const AuditEvent&) const = default;
};

Json to_json(const AuditEvent& e);
AuditEvent audit_event_from_json(const Json& j);

struct WorkflowState {
  std::string session_id;
  std::map<CriterionId, CriterionResult> step_results;
  std::vector<StepRecord> steps_executed;
  bool candidate = false;
  bool terminated_early = false;
  std::optional<DiagnosisOutcome> outcome;
  // Every exclusion criterion answered Yes, in priority order.
  std::vector<CriterionId> exclusion_triggers;
  // Cross-check disagreements, unexcluded differentials.
  std::vector<std::string> flags;
  // Patient-layer entities and their links into the guideline layer.
  std::vector<Entity> ehr_entities;
  std::vector<CrossLink> ehr_links;
  std::vector<AuditEvent> events;

  // Throws Error when an outcome is already set.
  void set_outcome(DiagnosisOutcome o);
  bool executed(Step s) const;
  std::optional<CriterionStatus> status(CriterionId id) const;
};

Json to_json(const WorkflowState& s);
WorkflowState workflow_state_from_json(const Json& j);

// HA = met(clin) or met(bio); true iff at least two of {cycles, HA, PCOM}
// are met. Under Default, met means Yes. Under Strict the predicate is the
// same; strictness is applied by the coordinator, not here.
bool gate_two_of_three(CriterionStatus cyc, CriterionStatus clin, CriterionStatus bio,
                       CriterionStatus pcom, UncertainPolicy policy = UncertainPolicy::Default);

// The gate with every Uncertain read as Yes.
bool gate_optimistic(CriterionStatus cyc, CriterionStatus clin, CriterionStatus bio,
                     CriterionStatus pcom);

// True iff no Yes assignment to the criteria not yet in state.step_results
// can satisfy the gate. Under Strict, evaluated Uncertains also count as
// possibly Yes.
bool should_terminate_early(const WorkflowState& state,
                            UncertainPolicy policy = UncertainPolicy::Default);

// Patient-layer entities derived from abnormal findings, for linking and
// for sharpening per-step retrieval queries.
std::vector<Entity> ehr_entities(const PatientRecord& p, const ThresholdConfig& cfg);

struct WorkflowOptions {
  UncertainPolicy policy = UncertainPolicy::Default;
  std::size_t retrieval_k = 3;
  std::size_t ehr_link_k = 3;
  double ehr_min_score = 0.2;
  std::string session_id;  // derived from the inputs when empty
  std::shared_ptr<Clock> clock;  // a fresh logical clock when null
  // Streams audit events as they happen (e.g. to a JSON-lines file).
  std::function<void(const AuditEvent&)> audit_sink;
};

// Everything one session needs; index may be null (no knowledge).
struct WorkflowContext {
  const ThresholdConfig& cfg;
  AgentBackend& backend;
  const RetrievalIndex* index = nullptr;
  WorkflowOptions options;
};

std::string derive_session_id(const PatientRecord& p, const WorkflowContext& ctx);

// Appends an audit event stamped with the context clock.
void log_event(WorkflowState& state, WorkflowContext& ctx, std::string event, std::string step,
               std::string payload_hash, const Usage& usage = {});

// Runs the exclusion step and records its three results. Pre: candidate.
void run_exclusion_phase(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx);

// Phase 1 and phase 2; sets the outcome. Backend failures propagate with
// `state` holding everything completed so far.
void run_workflow(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx);

// Retrieval for a prompt; empty when there is no index or the graph has no
// guideline entities.
RetrievalResult retrieve_knowledge(const WorkflowContext& ctx, const std::string& query);

// Fields read by a criterion's evaluator.
std::vector<Field> criterion_fields(CriterionId id);

}  // namespace pcosdx
