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

#include "pcosdx/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "pcosdx/clock.hpp"
#include "pcosdx/errors.hpp"

namespace pcosdx {
namespace {

constexpr CriterionId kPhase1[] = {CriterionId::IrregularCycles, CriterionId::ClinicalHA,
                                   CriterionId::BiochemicalHA, CriterionId::PCOM};
constexpr CriterionId kExclusions[] = {CriterionId::ExclusionNCCAH, CriterionId::ExclusionThyroid,
                                       CriterionId::ExclusionProlactin};
constexpr Step kStepOrder[] = {Step::CyclesAndClinical, Step::Biochemical, Step::Imaging, Step::Exclusion,
                               Step::Report};

Step step_of(CriterionId id) {
  switch (id) {
    case CriterionId::IrregularCycles:
    case CriterionId::ClinicalHA: return Step::CyclesAndClinical;
    case CriterionId::BiochemicalHA: return Step::Biochemical;
    case CriterionId::PCOM: return Step::Imaging;
    default: return Step::Exclusion;
  }
}

CriterionRow row_for(const WorkflowState& state, CriterionId id) {
  CriterionRow row;
  row.id = id;
  row.step = step_of(id);
  auto it = state.step_results.find(id);
  if (it != state.step_results.end()) {
    row.skipped = false;
    row.result = it->second;
  }
  return row;
}

std::vector<std::string> met_components(const WorkflowState& state) {
  auto yes = [&](CriterionId id) { return state.status(id) == CriterionStatus::Yes; };
  std::vector<std::string> out;
  if (yes(CriterionId::IrregularCycles)) out.push_back("cycles");
  if (yes(CriterionId::ClinicalHA) || yes(CriterionId::BiochemicalHA)) out.push_back("hyperandrogenism");
  if (yes(CriterionId::PCOM)) out.push_back("pcom");
  return out;
}

std::vector<std::string> recommendation_queries(const DiagnosisOutcome& o) {
  switch (o.kind) {
    case OutcomeKind::Confirmed:
      return {"lifestyle management diet exercise weight for polycystic ovary syndrome",
              "metabolic risk screening glucose lipids cardiovascular"};
    case OutcomeKind::Excluded: return {"follow-up of menstrual irregularity without polycystic ovary syndrome"};
    case OutcomeKind::Alternative:
      switch (o.cause.value_or(AlternativeCause::NCCAH)) {
        case AlternativeCause::NCCAH: return {"non-classic congenital adrenal hyperplasia 17-hydroxyprogesterone evaluation"};
        case AlternativeCause::Thyroid: return {"thyroid dysfunction TSH evaluation menstrual disturbance"};
        case AlternativeCause::Hyperprolactinemia: return {"hyperprolactinemia prolactin evaluation"};
      }
      break;
    case OutcomeKind::Indeterminate: return {"investigations required to assess polycystic ovary syndrome criteria"};
  }
  return {};
}

std::vector<std::string> template_recommendations(const DiagnosisOutcome& o) {
  switch (o.kind) {
    case OutcomeKind::Confirmed:
      return {"Offer lifestyle management (diet, physical activity, weight management) as first-line care.",
              "Screen for metabolic comorbidities, including glucose tolerance and lipids."};
    case OutcomeKind::Excluded:
      return {"Reassess if menstrual irregularity or signs of androgen excess persist."};
    case OutcomeKind::Alternative:
      switch (o.cause.value_or(AlternativeCause::NCCAH)) {
        case AlternativeCause::NCCAH:
          return {"Refer for endocrine evaluation of non-classic congenital adrenal hyperplasia."};
        case AlternativeCause::Thyroid:
          return {"Evaluate and treat thyroid dysfunction, then reassess the menstrual pattern."};
        case AlternativeCause::Hyperprolactinemia:
          return {"Evaluate hyperprolactinemia: repeat prolactin, review medications, consider pituitary imaging."};
      }
      break;
    case OutcomeKind::Indeterminate:
      return {"Obtain the missing data listed in the outcome and repeat the assessment."};
  }
  return {};
}

CriterionStatus expected_assessment(const DiagnosisOutcome& o) {
  switch (o.kind) {
    case OutcomeKind::Confirmed: return CriterionStatus::Yes;
    case OutcomeKind::Indeterminate: return CriterionStatus::Uncertain;
    default: return CriterionStatus::No;
  }
}

bool citation_less(const Citation& a, const Citation& b) {
  return std::tie(a.doc_id, a.chunk_id, a.text_excerpt) < std::tie(b.doc_id, b.chunk_id, b.text_excerpt);
}

std::string first_context(const std::string& context) {
  auto bar = context.find(" | ");
  return bar == std::string::npos ? context : context.substr(0, bar);
}

}  // namespace

Usage logged_usage(const WorkflowState& state) {
  Usage total;
  for (const auto& e : state.events)
    if (e.event == "agent_call") total += e.usage;
  return total;
}

DiagnosticReport generate_report(const PatientRecord& p, WorkflowState& state, WorkflowContext& ctx) {
  if (!state.outcome) throw Error("generate_report: session " + state.session_id + " has no outcome");
  if (!ctx.options.clock) ctx.options.clock = std::make_shared<LogicalClock>();
  DiagnosticReport r;
  r.session_id = state.session_id;
  r.outcome = *state.outcome;
  for (auto id : kPhase1) r.criteria_table.push_back(row_for(state, id));
  for (auto id : kExclusions) r.exclusion_table.push_back(row_for(state, id));
  r.met_components = met_components(state);
  for (auto id : state.exclusion_triggers) r.exclusion_triggers.emplace_back(to_string(id));
  r.engine_version = kEngineVersion;
  r.config_hash = config_hash(ctx.cfg);
  if (ctx.index) r.kg_manifest_hash = ctx.index->graph().manifest_hash();
  std::vector<std::string> flags = state.flags;

  // Recommendations from the guideline layer, template text otherwise.
  RetrievalResult first_knowledge;
  std::set<std::string> used;
  bool retrieval_failed = false;
  auto queries = recommendation_queries(r.outcome);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    RetrievalResult got;
    try {
      if (ctx.index) got = ctx.index->retrieve(queries[q], 2);
    } catch (const Error& e) {
      retrieval_failed = true;
      spdlog::warn("{}: recommendation retrieval failed: {}", state.session_id, e.what());
    }
    if (q == 0) first_knowledge = got;
    for (const auto& item : got.items) {
      if (!used.insert(item.entity_id).second || item.citations.empty()) continue;
      Recommendation rec;
      rec.text = item.name + ": " + first_context(item.context);
      for (const auto& c : item.citations) rec.citations.push_back(c.chunk_id);
      r.recommendations.push_back(std::move(rec));
      r.evidence_citations.insert(r.evidence_citations.end(), item.citations.begin(), item.citations.end());
    }
  }
  if (r.recommendations.empty()) {
    for (auto& text : template_recommendations(r.outcome)) r.recommendations.push_back({text, {}, true});
    flags.push_back(retrieval_failed || ctx.index
                        ? "recommendations are template defaults: no knowledge retrieved"
                        : "recommendations are template defaults: knowledge graph unavailable");
  }

  // Reporting agent.
  Json criteria = Json::object();
  for (const auto& row : r.criteria_table)
    criteria[std::string(to_string(row.id))] = row.skipped ? "skipped" : std::string(to_string(row.result->status));
  for (const auto& row : r.exclusion_table)
    criteria[std::string(to_string(row.id))] = row.skipped ? "skipped" : std::string(to_string(row.result->status));
  Json findings = {{"outcome", r.outcome.kind_name()},
                   {"outcome_label", r.outcome.label()},
                   {"met_components", r.met_components},
                   {"criteria", criteria},
                   {"exclusion_triggers", r.exclusion_triggers}};
  StepRecord rec;
  rec.step = Step::Report;
  rec.role = AgentRole::Reporting;
  rec.timestamp = ctx.options.clock->now();
  for (const auto& item : first_knowledge.items) rec.evidence.push_back(item.entity_id);
  std::size_t calls = 0;
  auto observer = [&](const PromptSpec& sent, const Completion& c) {
    ++calls;
    rec.usage += c.usage;
    log_event(state, ctx, "agent_call", std::string(to_string(Step::Report)), sent.hash(), c.usage);
  };
  try {
    auto reply = call_criteria_agent(ctx.backend, assemble_report_prompt(findings, first_knowledge), observer);
    r.assessment = reply.criteria.at("Overall_assessment");
    auto expected = expected_assessment(r.outcome);
    if (r.assessment->status != expected)
      flags.push_back("reporting agent assessment " + std::string(to_string(r.assessment->status)) +
                      " disagrees with workflow outcome " + std::string(r.outcome.kind_name()));
  } catch (const Error& e) {
    flags.push_back(std::string("reporting agent unavailable: ") + e.what());
  }
  if (calls > 0) state.steps_executed.push_back(rec);

  // Borderline proximity.
  for (const auto& cut : configured_cutoffs(ctx.cfg)) {
    auto v = numeric_value(p, cut.field);
    if (!v || cut.value == 0) continue;
    if (std::abs(*v - cut.value) <= kBorderlineFraction * std::abs(cut.value))
      flags.push_back("borderline: " + cut.label + " " + format_number(*v) + " is within 10% of cutoff " +
                      format_number(cut.value));
  }

  // Evidence injected into the step prompts.
  if (ctx.index) {
    for (const auto& step : state.steps_executed)
      for (const auto& id : step.evidence)
        if (const Entity* e = ctx.index->graph().find_entity(id)) {
          auto cites = entity_citations(ctx.index->graph(), *e);
          r.evidence_citations.insert(r.evidence_citations.end(), cites.begin(), cites.end());
        }
  }
  std::sort(r.evidence_citations.begin(), r.evidence_citations.end(), citation_less);
  r.evidence_citations.erase(std::unique(r.evidence_citations.begin(), r.evidence_citations.end()),
                             r.evidence_citations.end());

  // Cost, straight from the audit log.
  Usage total = logged_usage(state);
  r.cost.prompt_tokens = total.prompt_tokens;
  r.cost.completion_tokens = total.completion_tokens;
  r.cost.total_tokens = total.total_tokens();
  r.cost.wall_seconds = total.wall_seconds;
  for (auto step : kStepOrder) {
    StepCost sc;
    sc.step = step;
    for (const auto& e : state.events) {
      if (e.event != "agent_call" || e.step != to_string(step)) continue;
      ++sc.calls;
      sc.usage += e.usage;
    }
    if (sc.calls > 0) r.cost.per_step.push_back(sc);
  }
  r.risk_flags = std::move(flags);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json row_json(const CriterionRow& row) {
  Json j = {{"criterion", to_string(row.id)}, {"step", to_string(row.step)}, {"skipped", row.skipped}};
  if (row.result) j["result"] = to_json(*row.result);
  return j;
}

CriterionRow row_from(const Json& j) {
  CriterionRow row;
  auto id = parse_criterion_id(j.at("criterion").get<std::string>());
  auto step = parse_step(j.at("step").get<std::string>());
  if (!id || !step) throw SchemaError({"report: unknown criterion or step"});
  row.id = *id;
  row.step = *step;
  row.skipped = j.at("skipped").get<bool>();
  if (j.contains("result")) row.result = criterion_result_from_json(j["result"]);
  return row;
}

}  // namespace

Json to_json(const DiagnosticReport& r) {
  Json criteria = Json::array();
  for (const auto& row : r.criteria_table) criteria.push_back(row_json(row));
  Json exclusions = Json::array();
  for (const auto& row : r.exclusion_table) exclusions.push_back(row_json(row));
  Json cites = Json::array();
  for (const auto& c : r.evidence_citations) cites.push_back(to_json(c));
  Json recs = Json::array();
  for (const auto& rec : r.recommendations)
    recs.push_back({{"text", rec.text}, {"citations", rec.citations}, {"template_default", rec.template_default}});
  Json per_step = Json::array();
  for (const auto& s : r.cost.per_step)
    per_step.push_back({{"step", to_string(s.step)}, {"calls", s.calls}, {"usage", to_json(s.usage)}});
  Json j = {{"schema", "pcosdx.report"},
            {"version", 1},
            {"session_id", r.session_id},
            {"outcome", to_json(r.outcome)},
            {"criteria_table", criteria},
            {"exclusion_table", exclusions},
            {"met_components", r.met_components},
            {"exclusion_triggers", r.exclusion_triggers},
            {"assessment", r.assessment ? Json{{"status", to_string(r.assessment->status)},
                                               {"reasoning", r.assessment->reasoning}}
                                        : Json(nullptr)},
            {"evidence_citations", cites},
            {"recommendations", recs},
            {"risk_flags", r.risk_flags},
            {"cost",
             {{"prompt_tokens", r.cost.prompt_tokens},
              {"completion_tokens", r.cost.completion_tokens},
              {"total_tokens", r.cost.total_tokens},
              {"wall_seconds", r.cost.wall_seconds},
              {"per_step", per_step}}},
            {"engine_version", r.engine_version},
            {"config_hash", r.config_hash},
            {"kg_manifest_hash", r.kg_manifest_hash}};
  return j;
}

DiagnosticReport report_from_json(const Json& j) {
  DiagnosticReport r;
  try {
    if (j.at("schema") != "pcosdx.report" || j.at("version") != 1) throw SchemaError({"report: unsupported schema"});
    r.session_id = j.at("session_id").get<std::string>();
    r.outcome = outcome_from_json(j.at("outcome"));
    for (const auto& row : j.at("criteria_table")) r.criteria_table.push_back(row_from(row));
    for (const auto& row : j.at("exclusion_table")) r.exclusion_table.push_back(row_from(row));
    r.met_components = j.at("met_components").get<std::vector<std::string>>();
    r.exclusion_triggers = j.at("exclusion_triggers").get<std::vector<std::string>>();
    if (!j.at("assessment").is_null()) {
      auto status = parse_status(j["assessment"].at("status").get<std::string>());
      if (!status) throw SchemaError({"report: bad assessment status"});
      r.assessment = CriterionVerdict{*status, j["assessment"].at("reasoning").get<std::string>()};
    }
    for (const auto& c : j.at("evidence_citations"))
      r.evidence_citations.push_back({c.at("doc_id").get<std::string>(), c.at("chunk_id").get<std::string>(),
                                      c.at("text_excerpt").get<std::string>()});
    for (const auto& rec : j.at("recommendations"))
      r.recommendations.push_back({rec.at("text").get<std::string>(),
                                   rec.at("citations").get<std::vector<std::string>>(),
                                   rec.at("template_default").get<bool>()});
    r.risk_flags = j.at("risk_flags").get<std::vector<std::string>>();
    const auto& cost = j.at("cost");
    r.cost.prompt_tokens = cost.at("prompt_tokens").get<std::int64_t>();
    r.cost.completion_tokens = cost.at("completion_tokens").get<std::int64_t>();
    r.cost.total_tokens = cost.at("total_tokens").get<std::int64_t>();
    r.cost.wall_seconds = cost.at("wall_seconds").get<double>();
    for (const auto& s : cost.at("per_step")) {
      auto step = parse_step(s.at("step").get<std::string>());
      if (!step) throw SchemaError({"report: unknown step in cost"});
      r.cost.per_step.push_back({*step, s.at("calls").get<std::size_t>(), usage_from_json(s.at("usage"))});
    }
    r.engine_version = j.at("engine_version").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.kg_manifest_hash = j.at("kg_manifest_hash").get<std::string>();
  } catch (const Json::exception& e) {
    throw SchemaError({std::string("report: ") + e.what()});
  }
  return r;
}

namespace {

std::string cell(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out;
}

void table(std::string& out, const std::vector<CriterionRow>& rows) {
  out += "| Criterion | Step | Status | Reasoning |\n|---|---|---|---|\n";
  for (const auto& row : rows) {
    out += "| " + std::string(to_string(row.id)) + " | " + std::string(to_string(row.step)) + " | ";
    if (row.skipped) out += "skipped | not evaluated |\n";
    else out += std::string(to_string(row.result->status)) + " | " + cell(row.result->reasoning) + " |\n";
  }
}

}  // namespace

std::string render_report_text(const DiagnosticReport& r, ReportFormat format) {
  if (format == ReportFormat::Json) return pretty_dump(to_json(r));
  std::string out;
  out += "# Diagnostic report " + r.session_id + "\n\n";
  out += "**Outcome:** " + r.outcome.label() + "\n\n";
  out += "## Rotterdam criteria\n\n";
  table(out, r.criteria_table);
  out += "\nMet components: ";
  if (r.met_components.empty()) out += "none";
  for (std::size_t i = 0; i < r.met_components.size(); ++i) out += (i ? ", " : "") + r.met_components[i];
  out += " (" + std::to_string(r.met_components.size()) + " of 3)\n\n";
  out += "## Exclusion analysis\n\n";
  table(out, r.exclusion_table);
  if (!r.exclusion_triggers.empty()) {
    out += "\nTriggered: ";
    for (std::size_t i = 0; i < r.exclusion_triggers.size(); ++i) out += (i ? ", " : "") + r.exclusion_triggers[i];
    out += "\n";
  }
  out += "\n## Overall assessment\n\n";
  if (r.assessment) out += std::string(to_string(r.assessment->status)) + ": " + r.assessment->reasoning + "\n";
  else out += "Not available.\n";
  out += "\n## Recommendations\n\n";
  for (const auto& rec : r.recommendations) {
    out += "- " + rec.text;
    if (rec.template_default) out += " (template default)";
    else {
      out += " [";
      for (std::size_t i = 0; i < rec.citations.size(); ++i) out += (i ? ", " : "") + rec.citations[i];
      out += "]";
    }
    out += "\n";
  }
  out += "\n## Risk flags\n\n";
  if (r.risk_flags.empty()) out += "None.\n";
  for (const auto& f : r.risk_flags) out += "- " + f + "\n";
  out += "\n## Evidence\n\n";
  if (r.evidence_citations.empty()) out += "None.\n";
  for (const auto& c : r.evidence_citations) out += "- " + c.chunk_id + ": " + cell(c.text_excerpt) + "\n";
  out += "\n## Cost\n\n| Step | Calls | Prompt tokens | Completion tokens | Wall seconds |\n|---|---|---|---|---|\n";
  for (const auto& s : r.cost.per_step)
    out += "| " + std::string(to_string(s.step)) + " | " + std::to_string(s.calls) + " | " +
           std::to_string(s.usage.prompt_tokens) + " | " + std::to_string(s.usage.completion_tokens) + " | " +
           format_number(s.usage.wall_seconds) + " |\n";
  out += "| total | | " + std::to_string(r.cost.prompt_tokens) + " | " + std::to_string(r.cost.completion_tokens) +
         " | " + format_number(r.cost.wall_seconds) + " |\n\n";
  out += "Engine " + r.engine_version + ", config " + r.config_hash.substr(0, 12);
  if (!r.kg_manifest_hash.empty()) out += ", knowledge graph " + r.kg_manifest_hash.substr(0, 12);
  out += ".\n";
  return out;
}

}  // namespace pcosdx
