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

#include "pcosdx/workflow.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "pcosdx/errors.hpp"

namespace pcosdx {

std::string_view to_string(UncertainPolicy p) { return p == UncertainPolicy::Strict ? "strict" : "default"; }

std::optional<UncertainPolicy> parse_policy(std::string_view s) {
  if (s == "default") return UncertainPolicy::Default;
  if (s == "strict") return UncertainPolicy::Strict;
  return std::nullopt;
}

std::string_view to_string(AlternativeCause c) {
  switch (c) {
    case AlternativeCause::NCCAH: return "NCCAH";
    case AlternativeCause::Thyroid: return "Thyroid";
    case AlternativeCause::Hyperprolactinemia: return "Hyperprolactinemia";
  }
  return "NCCAH";
}

namespace {

std::optional<AlternativeCause> parse_cause(std::string_view s) {
  for (auto c : {AlternativeCause::NCCAH, AlternativeCause::Thyroid, AlternativeCause::Hyperprolactinemia})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

AlternativeCause cause_for(CriterionId id) {
  switch (id) {
    case CriterionId::ExclusionThyroid: return AlternativeCause::Thyroid;
    case CriterionId::ExclusionProlactin: return AlternativeCause::Hyperprolactinemia;
    default: return AlternativeCause::NCCAH;
  }
}

constexpr CriterionId kExclusionOrder[] = {CriterionId::ExclusionNCCAH, CriterionId::ExclusionThyroid,
                                           CriterionId::ExclusionProlactin};

}  // namespace

std::string_view DiagnosisOutcome::kind_name() const {
  switch (kind) {
    case OutcomeKind::Confirmed: return "PCOS_CONFIRMED";
    case OutcomeKind::Excluded: return "PCOS_EXCLUDED";
    case OutcomeKind::Alternative: return "ALTERNATIVE";
    case OutcomeKind::Indeterminate: return "INDETERMINATE";
  }
  return "PCOS_EXCLUDED";
}

std::string DiagnosisOutcome::label() const {
  std::string out(kind_name());
  if (kind == OutcomeKind::Alternative && cause) out += "(" + std::string(to_string(*cause)) + ")";
  if (kind == OutcomeKind::Indeterminate) {
    out += "(";
    for (std::size_t i = 0; i < missing.size(); ++i) out += (i ? ", " : "") + missing[i];
    out += ")";
  }
  return out;
}

Json to_json(const DiagnosisOutcome& o) {
  Json j = {{"kind", o.kind_name()}};
  if (o.cause) j["cause"] = to_string(*o.cause);
  if (o.kind == OutcomeKind::Indeterminate) j["missing"] = o.missing;
  return j;
}

DiagnosisOutcome outcome_from_json(const Json& j) {
  DiagnosisOutcome o;
  auto kind = j.at("kind").get<std::string>();
  if (kind == "PCOS_CONFIRMED") o.kind = OutcomeKind::Confirmed;
  else if (kind == "PCOS_EXCLUDED") o.kind = OutcomeKind::Excluded;
  else if (kind == "ALTERNATIVE") o.kind = OutcomeKind::Alternative;
  else if (kind == "INDETERMINATE") o.kind = OutcomeKind::Indeterminate;
  else throw SchemaError({"outcome: unknown kind " + kind});
  if (j.contains("cause")) {
    o.cause = parse_cause(j["cause"].get<std::string>());
    if (!o.cause) throw SchemaError({"outcome: unknown cause"});
  }
  if (j.contains("missing")) o.missing = j["missing"].get<std::vector<std::string>>();
  return o;
}

Json to_json(const AuditEvent& e) {
  return {{"session_id", e.session_id}, {"event", e.event},         {"step", e.step},
          {"payload_hash", e.payload_hash}, {"usage", to_json(e.usage)}, {"timestamp", e.timestamp}};
}

AuditEvent audit_event_from_json(const Json& j) {
  return {j.at("session_id").get<std::string>(), j.at("event").get<std::string>(),
          j.at("step").get<std::string>(),       j.at("payload_hash").get<std::string>(),
          usage_from_json(j.at("usage")),        j.at("timestamp").get<std::string>()};
}

void WorkflowState::set_outcome(DiagnosisOutcome o) {
  if (outcome) throw Error("session " + session_id + ": outcome already set");
  outcome = std::move(o);
}

bool WorkflowState::executed(Step s) const {
  return std::any_of(steps_executed.begin(), steps_executed.end(),
                     [&](const StepRecord& r) { return r.step == s; });
}

std::optional<CriterionStatus> WorkflowState::status(CriterionId id) const {
  auto it = step_results.find(id);
  if (it == step_results.end()) return std::nullopt;
  return it->second.status;
}

namespace {

Json entity_json(const Entity& e) {
  return {{"entity_id", e.entity_id}, {"name", e.name}, {"type", e.type},
          {"context", e.context},     {"layer", to_string(e.layer)}, {"source_chunks", e.source_chunks}};
}

Entity entity_from(const Json& j) {
  Entity e;
  e.entity_id = j.at("entity_id").get<std::string>();
  e.name = j.at("name").get<std::string>();
  e.type = j.at("type").get<std::string>();
  e.context = j.at("context").get<std::string>();
  e.layer = parse_layer(j.at("layer").get<std::string>()).value_or(Layer::Top);
  e.source_chunks = j.at("source_chunks").get<std::vector<std::string>>();
  return e;
}

}  // namespace

Json to_json(const WorkflowState& s) {
  Json results = Json::array();
  for (const auto& [id, r] : s.step_results) results.push_back(to_json(r));
  Json steps = Json::array();
  for (const auto& r : s.steps_executed)
    steps.push_back({{"step", to_string(r.step)},
                     {"agent_role", to_string(r.role)},
                     {"timestamp", r.timestamp},
                     {"usage", to_json(r.usage)},
                     {"evidence", r.evidence}});
  Json triggers = Json::array();
  for (auto id : s.exclusion_triggers) triggers.push_back(to_string(id));
  Json ehr = Json::array();
  for (const auto& e : s.ehr_entities) ehr.push_back(entity_json(e));
  Json links = Json::array();
  for (const auto& l : s.ehr_links)
    links.push_back({{"from", l.from_entity}, {"to", l.to_entity}, {"kind", to_string(l.kind)}, {"score", l.score}});
  Json events = Json::array();
  for (const auto& e : s.events) events.push_back(to_json(e));
  return {{"session_id", s.session_id},
          {"step_results", results},
          {"steps_executed", steps},
          {"candidate", s.candidate},
          {"terminated_early", s.terminated_early},
          {"outcome", s.outcome ? to_json(*s.outcome) : Json(nullptr)},
          {"exclusion_triggers", triggers},
          {"flags", s.flags},
          {"ehr_entities", ehr},
          {"ehr_links", links},
          {"events", events}};
}

WorkflowState workflow_state_from_json(const Json& j) {
  WorkflowState s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    for (const auto& r : j.at("step_results")) {
      auto res = criterion_result_from_json(r);
      s.step_results[res.id] = res;
    }
    for (const auto& r : j.at("steps_executed")) {
      StepRecord rec;
      auto step = parse_step(r.at("step").get<std::string>());
      auto role = parse_role(r.at("agent_role").get<std::string>());
      if (!step || !role) throw SchemaError({"state: unknown step or role"});
      rec.step = *step;
      rec.role = *role;
      rec.timestamp = r.at("timestamp").get<std::string>();
      rec.usage = usage_from_json(r.at("usage"));
      rec.evidence = r.at("evidence").get<std::vector<std::string>>();
      s.steps_executed.push_back(std::move(rec));
    }
    s.candidate = j.at("candidate").get<bool>();
    s.terminated_early = j.at("terminated_early").get<bool>();
    if (!j.at("outcome").is_null()) s.outcome = outcome_from_json(j.at("outcome"));
    for (const auto& t : j.at("exclusion_triggers")) {
      auto id = parse_criterion_id(t.get<std::string>());
      if (!id) throw SchemaError({"state: unknown criterion"});
      s.exclusion_triggers.push_back(*id);
    }
    s.flags = j.at("flags").get<std::vector<std::string>>();
    for (const auto& e : j.at("ehr_entities")) s.ehr_entities.push_back(entity_from(e));
    for (const auto& l : j.at("ehr_links"))
      s.ehr_links.push_back({l.at("from").get<std::string>(), l.at("to").get<std::string>(),
                             l.at("kind") == "dictionary" ? LinkKind::DictionaryGrounding
                                                          : LinkKind::EmbeddingSimilarity,
                             l.at("score").get<double>()});
    for (const auto& e : j.at("events")) s.events.push_back(audit_event_from_json(e));
  } catch (const Json::exception& e) {
    throw SchemaError({std::string("state: ") + e.what()});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Gate

namespace {

bool met(CriterionStatus s) { return s == CriterionStatus::Yes; }
bool maybe(CriterionStatus s) { return s != CriterionStatus::No; }

}  // namespace

bool gate_two_of_three(CriterionStatus cyc, CriterionStatus clin, CriterionStatus bio,
                       CriterionStatus pcom, UncertainPolicy) {
  int count = static_cast<int>(met(cyc)) + static_cast<int>(met(clin) || met(bio)) +
              static_cast<int>(met(pcom));
  return count >= 2;
}

bool gate_optimistic(CriterionStatus cyc, CriterionStatus clin, CriterionStatus bio,
                     CriterionStatus pcom) {
  int count = static_cast<int>(maybe(cyc)) + static_cast<int>(maybe(clin) || maybe(bio)) +
              static_cast<int>(maybe(pcom));
  return count >= 2;
}

bool should_terminate_early(const WorkflowState& state, UncertainPolicy policy) {
  auto get = [&](CriterionId id) {
    auto s = state.status(id);
    if (!s) return CriterionStatus::Yes;
    if (policy == UncertainPolicy::Strict && *s == CriterionStatus::Uncertain) return CriterionStatus::Yes;
    return *s;
  };
  return !gate_two_of_three(get(CriterionId::IrregularCycles), get(CriterionId::ClinicalHA),
                            get(CriterionId::BiochemicalHA), get(CriterionId::PCOM));
}

std::vector<Field> criterion_fields(CriterionId id) {
  switch (id) {
    case CriterionId::IrregularCycles:
      return {Field::YearsPostMenarche, Field::CycleMinDays, Field::CycleMaxDays, Field::CyclesPerYear,
              Field::LongestCycleDays};
    case CriterionId::ClinicalHA: return {Field::FerrimanGallwey, Field::Acne, Field::Alopecia};
    case CriterionId::BiochemicalHA:
      return {Field::TotalTestosterone, Field::FreeTestosterone, Field::FreeAndrogenIndex, Field::Dheas};
    case CriterionId::PCOM:
      return {Field::FollicleCountLeft, Field::FollicleCountRight, Field::OvarianVolumeLeft,
              Field::OvarianVolumeRight};
    case CriterionId::ExclusionNCCAH: return {Field::Ohp17};
    case CriterionId::ExclusionThyroid: return {Field::Tsh};
    case CriterionId::ExclusionProlactin: return {Field::Prolactin};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Patient layer

std::vector<Entity> ehr_entities(const PatientRecord& p, const ThresholdConfig& cfg) {
  std::vector<Entity> out;
  auto add = [&](std::string name, std::string type, std::string context, Field source) {
    Entity e;
    e.entity_id = entity_id_for(Layer::Top, type, name);
    e.name = std::move(name);
    e.type = std::move(type);
    e.context = std::move(context);
    e.layer = Layer::Top;
    e.source_chunks = {"ehr:" + std::string(field_info(source).path)};
    out.push_back(std::move(e));
  };
  const auto& m = p.menstrual;
  if (m.cycles_per_year && *m.cycles_per_year < cfg.min_cycles_per_year)
    add("oligomenorrhea", "Symptom", "Patient reports " + std::to_string(*m.cycles_per_year) + " cycles per year.",
        Field::CyclesPerYear);
  else if (m.typical_cycle_max_days && *m.typical_cycle_max_days > cfg.cycle_long_days)
    add("oligomenorrhea", "Symptom",
        "Patient reports cycles lasting up to " + format_number(*m.typical_cycle_max_days) + " days.",
        Field::CycleMaxDays);
  if (m.typical_cycle_min_days && *m.typical_cycle_min_days < cfg.cycle_short_days)
    add("short menstrual cycles", "Symptom",
        "Patient reports cycles as short as " + format_number(*m.typical_cycle_min_days) + " days.",
        Field::CycleMinDays);
  if (m.longest_single_cycle_days && *m.longest_single_cycle_days > cfg.single_cycle_irregular_days)
    add("prolonged cycle", "Symptom",
        "A single cycle lasted " + format_number(*m.longest_single_cycle_days) + " days.",
        Field::LongestCycleDays);
  const auto& c = p.clinical_signs;
  if (c.ferriman_gallwey_score && *c.ferriman_gallwey_score >= cfg.fg_cutoff)
    add("hirsutism", "Symptom",
        "Modified Ferriman-Gallwey score " + std::to_string(*c.ferriman_gallwey_score) + ".",
        Field::FerrimanGallwey);
  if (c.acne && *c.acne != AcneGrade::Absent)
    add("acne", "Symptom", std::string(to_string(*c.acne)) + " acne on examination.", Field::Acne);
  if (c.androgenic_alopecia && *c.androgenic_alopecia)
    add("androgenic alopecia", "Symptom", "Androgenic alopecia on examination.", Field::Alopecia);

  auto lab = [&](Field f, const std::optional<Quantity>& q, const std::optional<Quantity>& cutoff,
                 const std::string& name) {
    if (q && cutoff && q->unit == cutoff->unit && q->value > cutoff->value)
      add(name, "LabMarker",
          name + ": " + format_number(q->value) + " " + q->unit + " above " + format_number(cutoff->value) + ".",
          f);
  };
  const auto& b = p.biochemistry;
  lab(Field::TotalTestosterone, b.total_testosterone, cfg.total_testosterone_upper, "elevated total testosterone");
  lab(Field::FreeTestosterone, b.free_testosterone, cfg.free_testosterone_upper, "elevated free testosterone");
  lab(Field::FreeAndrogenIndex, b.free_androgen_index, cfg.fai_upper, "elevated free androgen index");
  lab(Field::Dheas, b.dheas, cfg.dheas_upper, "elevated DHEAS");
  lab(Field::Ohp17, b.ohp_17, cfg.ohp17_upper, "elevated 17-hydroxyprogesterone");
  lab(Field::Prolactin, b.prolactin, cfg.prolactin_upper, "elevated prolactin");
  if (b.tsh && cfg.tsh_lower && cfg.tsh_upper && b.tsh->unit == cfg.tsh_upper->unit &&
      (b.tsh->value < cfg.tsh_lower->value || b.tsh->value > cfg.tsh_upper->value))
    add("abnormal TSH", "LabMarker", "TSH " + format_number(b.tsh->value) + " " + b.tsh->unit + " out of range.",
        Field::Tsh);

  const auto& im = p.imaging;
  auto fc = std::max(im.follicle_count_left.value_or(-1), im.follicle_count_right.value_or(-1));
  auto vol = std::max(im.ovarian_volume_left_ml.value_or(-1), im.ovarian_volume_right_ml.value_or(-1));
  if (fc >= cfg.follicle_count_per_ovary_min)
    add("polycystic ovaries", "ImagingFeature", std::to_string(fc) + " follicles in one ovary.",
        im.follicle_count_left.value_or(-1) == fc ? Field::FollicleCountLeft : Field::FollicleCountRight);
  else if (vol >= cfg.ovarian_volume_ml_min)
    add("enlarged ovary", "ImagingFeature", "Ovarian volume " + format_number(vol) + " mL.",
        im.ovarian_volume_left_ml.value_or(-1) == vol ? Field::OvarianVolumeLeft : Field::OvarianVolumeRight);

  std::sort(out.begin(), out.end(), [](const Entity& a, const Entity& b) { return a.entity_id < b.entity_id; });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Entity& a, const Entity& b) { return a.entity_id == b.entity_id; }),
            out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Coordinator

std::string derive_session_id(const PatientRecord& p, const WorkflowContext& ctx) {
  std::string key = serialize(p);
  key += "\n" + config_hash(ctx.cfg);
  key += "\n" + ctx.backend.info().id;
  key += "\n" + std::string(to_string(ctx.options.policy));
  if (ctx.index) key += "\n" + ctx.index->graph().manifest_hash();
  return "s-" + sha256_hex(key).substr(0, 16);
}

void log_event(WorkflowState& state, WorkflowContext& ctx, std::string event, std::string step,
               std::string payload_hash, const Usage& usage) {
  if (!ctx.options.clock) ctx.options.clock = std::make_shared<LogicalClock>();
  AuditEvent e{state.session_id, std::move(event), std::move(step), std::move(payload_hash), usage,
               ctx.options.clock->now()};
  if (ctx.options.audit_sink) ctx.options.audit_sink(e);
  state.events.push_back(std::move(e));
}

RetrievalResult retrieve_knowledge(const WorkflowContext& ctx, const std::string& query) {
  if (!ctx.index) return {};
  try {
    return ctx.index->retrieve(query, ctx.options.retrieval_k);
  } catch (const EmptyGraph&) {
    return {};
  }
}

namespace {

std::string base_query(Step s) {
  switch (s) {
    case Step::CyclesAndClinical:
      return "irregular menstrual cycles ovulatory dysfunction clinical hyperandrogenism hirsutism";
    case Step::Biochemical: return "biochemical hyperandrogenism testosterone androgen thresholds";
    case Step::Imaging: return "polycystic ovarian morphology ultrasound follicle count ovarian volume";
    case Step::Exclusion:
      return "exclusion of differential diagnoses congenital adrenal hyperplasia thyroid prolactin";
    default: return "";
  }
}

std::vector<CriterionResult> rule_results(Step step, const PatientRecord& p, const ThresholdConfig& cfg) {
  switch (step) {
    case Step::CyclesAndClinical: return {eval_irregular_cycles(p, cfg), eval_clinical_ha(p, cfg)};
    case Step::Biochemical: return {eval_biochemical_ha(p, cfg)};
    case Step::Imaging: return {eval_pcom(p, cfg)};
    case Step::Exclusion: return eval_exclusions(p, cfg);
    default: return {};
  }
}

void run_step(Step step, const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx) {
  auto fields = step_fields(step);
  Json slice = patient_slice(p, fields);
  std::string query = base_query(step);
  for (const auto& e : state.ehr_entities) {
    auto f = field_from_path(e.source_chunks.front().substr(4));
    if (f && std::find(fields.begin(), fields.end(), *f) != fields.end()) query += " " + e.name;
  }
  RetrievalResult knowledge = retrieve_knowledge(ctx, query);
  PromptSpec prompt = assemble_prompt(role_for(step), step, slice, ctx.cfg, knowledge);

  StepRecord rec;
  rec.step = step;
  rec.role = role_for(step);
  rec.timestamp = ctx.options.clock->now();
  for (const auto& item : knowledge.items) rec.evidence.push_back(item.entity_id);
  auto observer = [&](const PromptSpec& sent, const Completion& c) {
    rec.usage += c.usage;
    log_event(state, ctx, "agent_call", std::string(to_string(step)), sent.hash(), c.usage);
  };
  AgentReply reply = call_criteria_agent(ctx.backend, prompt, observer);
  for (const auto& d : reply.parse_diagnostics) spdlog::debug("{} {}: {}", state.session_id, to_string(step), d);

  auto rules = rule_results(step, p, ctx.cfg);
  Json step_json = Json::array();
  for (const auto& key : reply_keys(step)) {
    auto id = *criterion_for_key(key);
    const auto& v = reply.criteria.at(key);
    auto rule = std::find_if(rules.begin(), rules.end(), [&](const CriterionResult& r) { return r.id == id; });
    CriterionResult r;
    r.id = id;
    r.status = v.status;
    r.reasoning = v.reasoning;
    r.evidence = rec.evidence;
    for (auto f : criterion_fields(id))
      if (has_field(p, f)) r.inputs_used.push_back(std::string(field_info(f).path));
    if (r.status == CriterionStatus::Uncertain) {
      if (rule != rules.end() && !rule->missing.empty()) {
        r.missing = rule->missing;
      } else {
        for (auto f : criterion_fields(id))
          if (!has_field(p, f)) r.missing.push_back(std::string(field_info(f).path));
        // All inputs present yet undecided: report them as unresolved.
        if (r.missing.empty())
          for (auto f : criterion_fields(id)) r.missing.push_back(std::string(field_info(f).path));
      }
    }
    if (rule != rules.end() && rule->status != r.status)
      state.flags.push_back("cross-check: " + std::string(to_string(id)) + " reply " +
                            std::string(to_string(r.status)) + " differs from rule " +
                            std::string(to_string(rule->status)));
    step_json.push_back(to_json(r));
    state.step_results[id] = std::move(r);
  }
  state.steps_executed.push_back(std::move(rec));
  log_event(state, ctx, "step_complete", std::string(to_string(step)), json_hash(step_json));
}

std::vector<std::string> missing_of(const WorkflowState& state, std::initializer_list<CriterionId> ids) {
  std::set<std::string> out;
  for (auto id : ids) {
    auto it = state.step_results.find(id);
    if (it == state.step_results.end() || it->second.status != CriterionStatus::Uncertain) continue;
    out.insert(it->second.missing.begin(), it->second.missing.end());
  }
  return {out.begin(), out.end()};
}

}  // namespace

void run_exclusion_phase(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx) {
  if (!state.candidate) throw Error("exclusion phase requires a candidate");
  run_step(Step::Exclusion, p, state, ctx);
  for (auto id : kExclusionOrder)
    if (state.status(id) == CriterionStatus::Yes) state.exclusion_triggers.push_back(id);
}

void run_workflow(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx) {
  if (!ctx.options.clock) ctx.options.clock = std::make_shared<LogicalClock>();
  const auto policy = ctx.options.policy;
  require_cutoffs_for(p, ctx.cfg);
  if (state.session_id.empty())
    state.session_id = ctx.options.session_id.empty() ? derive_session_id(p, ctx) : ctx.options.session_id;
  log_event(state, ctx, "session_start", "", sha256_hex(serialize(p)));

  state.ehr_entities = ehr_entities(p, ctx.cfg);
  if (ctx.index && !state.ehr_entities.empty()) {
    try {
      state.ehr_links = ctx.index->link_top(state.ehr_entities, ctx.options.ehr_link_k, ctx.options.ehr_min_score);
    } catch (const EmptyGraph&) {
    }
  }

  auto st = [&](CriterionId id) { return state.status(id).value_or(CriterionStatus::Uncertain); };
  constexpr auto Yes = CriterionStatus::Yes;

  run_step(Step::CyclesAndClinical, p, state, ctx);
  if (st(CriterionId::IrregularCycles) == Yes && st(CriterionId::ClinicalHA) == Yes) {
    state.candidate = true;
  } else {
    run_step(Step::Biochemical, p, state, ctx);
    if (st(CriterionId::IrregularCycles) == Yes && st(CriterionId::BiochemicalHA) == Yes) {
      state.candidate = true;
    } else if (should_terminate_early(state, policy)) {
      state.terminated_early = true;
      log_event(state, ctx, "early_termination", std::string(to_string(Step::Imaging)), "");
    } else {
      run_step(Step::Imaging, p, state, ctx);
      state.candidate = gate_two_of_three(st(CriterionId::IrregularCycles), st(CriterionId::ClinicalHA),
                                          st(CriterionId::BiochemicalHA), st(CriterionId::PCOM));
    }
  }

  const auto phase1 = {CriterionId::IrregularCycles, CriterionId::ClinicalHA, CriterionId::BiochemicalHA,
                       CriterionId::PCOM};
  DiagnosisOutcome outcome;
  if (state.candidate) {
    run_exclusion_phase(p, state, ctx);
    if (!state.exclusion_triggers.empty()) {
      outcome.kind = OutcomeKind::Alternative;
      outcome.cause = cause_for(state.exclusion_triggers.front());
    } else {
      auto missing = missing_of(state, {CriterionId::ExclusionNCCAH, CriterionId::ExclusionThyroid,
                                        CriterionId::ExclusionProlactin});
      if (!missing.empty() && policy == UncertainPolicy::Strict) {
        outcome.kind = OutcomeKind::Indeterminate;
        outcome.missing = missing;
      } else {
        outcome.kind = OutcomeKind::Confirmed;
        for (auto id : kExclusionOrder)
          if (st(id) == CriterionStatus::Uncertain)
            state.flags.push_back("unexcluded differential: " + std::string(to_string(id)));
      }
    }
  } else {
    auto seen = [&](CriterionId id) { return state.status(id).value_or(CriterionStatus::No); };
    if (policy == UncertainPolicy::Strict &&
        gate_optimistic(seen(CriterionId::IrregularCycles), seen(CriterionId::ClinicalHA),
                        seen(CriterionId::BiochemicalHA), seen(CriterionId::PCOM))) {
      outcome.kind = OutcomeKind::Indeterminate;
      outcome.missing = missing_of(state, phase1);
    } else {
      outcome.kind = OutcomeKind::Excluded;
    }
  }
  state.set_outcome(outcome);
  log_event(state, ctx, "outcome", "", json_hash(to_json(outcome)));
}

}  // namespace pcosdx
