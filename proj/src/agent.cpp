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

#include "pcosdx/agent.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "pcosdx/errors.hpp"

namespace pcosdx {
namespace {

constexpr Field kStep1Fields[] = {
    Field::AgeYears,        Field::YearsPostMenarche, Field::CycleMinDays,
    Field::CycleMaxDays,    Field::CyclesPerYear,     Field::LongestCycleDays,
    Field::FerrimanGallwey, Field::Acne,              Field::Alopecia,
};
constexpr Field kStep2Fields[] = {
    Field::TotalTestosterone, Field::FreeTestosterone, Field::FreeAndrogenIndex,
    Field::Dheas,             Field::Shbg,
};
constexpr Field kStep3Fields[] = {
    Field::FollicleCountLeft,  Field::FollicleCountRight, Field::OvarianVolumeLeft,
    Field::OvarianVolumeRight, Field::ImagingNarrative,
};
constexpr Field kExclusionFields[] = {Field::Ohp17, Field::Tsh, Field::Prolactin};

constexpr std::string_view kHeaderRole = "[SYSTEM ROLE]";
constexpr std::string_view kHeaderTask = "[TASK INPUT]";
constexpr std::string_view kHeaderGuidelines = "[DIAGNOSTIC GUIDELINES (Static Rules)]";
constexpr std::string_view kHeaderKnowledge = "[KNOWLEDGE BASE INFORMATION (Dynamic Injection)]";
constexpr std::string_view kHeaderConstraint = "[OUTPUT CONSTRAINT]";

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lab_line(std::string_view label, const std::optional<Quantity>& q) {
  if (!q) return {};
  return std::string(label) + " > " + format_number(q->value) + " " + q->unit;
}

std::string criterion_schema(Step step) {
  static const std::map<std::string, std::string> kHints = {
      {"Irregular_cycles", "A brief medical rationale that follows the guidelines above."},
      {"Clinical_hyperandrogenism", "A brief rationale weighing the signs as described above."},
      {"Biochemical_hyperandrogenism", "A brief rationale citing the markers and limits used."},
      {"Polycystic_ovarian_morphology", "A brief rationale citing counts and volumes."},
      {"NCCAH", "Yes if the condition is suspected; cite the lab value."},
      {"Thyroid_dysfunction", "Yes if the condition is suspected; cite the lab value."},
      {"Hyperprolactinemia", "Yes if the condition is suspected; cite the lab value."},
      {"Overall_assessment", "Yes if the findings support the diagnosis; summarize the evidence."},
  };
  std::string out = "Output a single JSON object evaluating the criteria:\n{\n";
  auto keys = reply_keys(step);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out += "  \"" + keys[i] + "\": {\"status\": \"Yes/No/Uncertain\", \"reasoning\": \"" +
           kHints.at(keys[i]) + "\"}";
    out += i + 1 < keys.size() ? ",\n" : "\n";
  }
  out += "}";
  return out;
}

std::string guidelines_for(Step step, const ThresholdConfig& cfg) {
  switch (step) {
    case Step::CyclesAndClinical:
      return "- Irregular cycles: more than " + format_number(cfg.post_menarche_years_gate) +
             " years post-menarche, cycles are irregular if < " +
             format_number(cfg.cycle_short_days) + " or > " + format_number(cfg.cycle_long_days) +
             " days, or fewer than " + std::to_string(cfg.min_cycles_per_year) +
             " cycles per year. Any single cycle > " +
             format_number(cfg.single_cycle_irregular_days) + " days is irregular.\n" +
             "- Clinical hyperandrogenism: primary sign is hirsutism (Ferriman-Gallwey score >= " +
             std::to_string(cfg.fg_cutoff) +
             "). Acne and alopecia are secondary signs and weak when isolated.";
    case Step::Biochemical: {
      std::vector<std::string> lines;
      for (auto l : {lab_line("total testosterone", cfg.total_testosterone_upper),
                     lab_line("free testosterone", cfg.free_testosterone_upper),
                     lab_line("free androgen index", cfg.fai_upper),
                     lab_line("DHEA-S", cfg.dheas_upper)}) {
        if (!l.empty()) lines.push_back(l);
      }
      std::string out =
          "- Biochemical hyperandrogenism: present if any androgen marker exceeds its upper "
          "limit:";
      for (const auto& l : lines) out += "\n  - " + l;
      return out;
    }
    case Step::Imaging:
      return "- Polycystic ovarian morphology: follicle number per ovary >= " +
             std::to_string(cfg.follicle_count_per_ovary_min) +
             " in either ovary, or ovarian volume >= " + format_number(cfg.ovarian_volume_ml_min) +
             " mL in either ovary.";
    case Step::Exclusion: {
      std::string out;
      if (cfg.ohp17_upper) out += "- NCCAH: " + lab_line("suspected if 17-OHP", cfg.ohp17_upper) + ".\n";
      if (cfg.tsh_lower && cfg.tsh_upper) {
        out += "- Thyroid dysfunction: suspected if TSH is outside [" +
               format_number(cfg.tsh_lower->value) + ", " + format_number(cfg.tsh_upper->value) +
               "] " + cfg.tsh_upper->unit + ".\n";
      }
      if (cfg.prolactin_upper) {
        out += "- Hyperprolactinemia: " + lab_line("suspected if prolactin", cfg.prolactin_upper) + ".\n";
      }
      out += "- Answer Yes when the condition is suspected, No when the lab is normal, Uncertain "
             "when it was not measured.";
      return out;
    }
    default:
      return {};
  }
}

std::string_view preamble_for(AgentRole role) {
  switch (role) {
    case AgentRole::GynecologicalEndocrine:
      return "You are a senior consultant gynecological endocrinologist. You assess structured "
             "patient data against the Rotterdam criteria for polycystic ovary syndrome.";
    case AgentRole::Radiology:
      return "You are a senior consultant radiologist specialising in gynecological ultrasound. "
             "You assess ovarian imaging findings for polycystic ovarian morphology.";
    case AgentRole::Exclusion:
      return "You are a consultant endocrinologist acting as the safety gatekeeper of the "
             "diagnosis. You screen laboratory results for conditions that mimic polycystic "
             "ovary syndrome.";
    case AgentRole::Reporting:
      return "You are the reporting clinician. You synthesize the findings of the specialist "
             "agents into a final assessment.";
    case AgentRole::Extraction:
      return "You are a clinical information extraction assistant. You extract structured facts "
             "from text without adding inferences.";
    case AgentRole::Coordinator:
      return "You are the coordinator of a diagnostic workflow.";
  }
  return "";
}

std::string_view task_for(Step step) {
  switch (step) {
    case Step::CyclesAndClinical:
      return "Assess two of the three Rotterdam components (irregular cycles and clinical "
             "hyperandrogenism) from the patient data. This is the first step of a two-of-three "
             "evaluation, not the final diagnosis.";
    case Step::Biochemical:
      return "Clinical hyperandrogenism was absent or inconclusive. Assess biochemical "
             "hyperandrogenism from the androgen panel.";
    case Step::Imaging:
      return "Assess polycystic ovarian morphology from the ultrasound findings.";
    case Step::Exclusion:
      return "Screen for differential diagnoses that must be excluded before polycystic ovary "
             "syndrome can be confirmed.";
    case Step::Report:
      return "Review the workflow findings. State whether they support a diagnosis of polycystic "
             "ovary syndrome under the two-out-of-three rule after exclusion of other causes, and "
             "summarize the evidence.";
    case Step::RecordExtraction:
      return "Extract the patient facts stated in the clinical note. Record the exact character "
             "span of the text supporting each value. Mark a field uncertain rather than guess.";
    case Step::EntityExtraction:
      return "List the clinical entities mentioned in the text. Each name must appear verbatim in "
             "the text; the context summarizes what the text says about the entity.";
    case Step::RelationExtraction:
      return "List directed diagnostic relations between the given entities that the text states "
             "explicitly. Use only the entity ids provided.";
  }
  return "";
}

bool is_clinical(Step s) {
  return s == Step::CyclesAndClinical || s == Step::Biochemical || s == Step::Imaging ||
         s == Step::Exclusion;
}

std::string remove_trailing_commas(std::string_view s, bool& changed) {
  std::string out;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (c == '\\' && i + 1 < s.size()) {
        out.push_back(s[++i]);
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      auto j = s.find_first_not_of(" \t\r\n", i + 1);
      if (j != std::string_view::npos && (s[j] == '}' || s[j] == ']')) {
        changed = true;
        continue;
      }
    }
    out.push_back(c);
  }
  return out;
}

std::optional<std::string> strip_fences(std::string_view s) {
  auto t = trim(s);
  if (t.rfind("```", 0) != 0) return std::nullopt;
  auto first_nl = t.find('\n');
  if (first_nl == std::string::npos) return std::nullopt;
  auto body = t.substr(first_nl + 1);
  auto close = body.rfind("```");
  if (close == std::string::npos) return std::nullopt;
  return trim(body.substr(0, close));
}

std::optional<Json> try_parse(std::string_view s) {
  try {
    return Json::parse(s);
  } catch (const Json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace

std::string_view to_string(AgentRole r) {
  switch (r) {
    case AgentRole::Coordinator: return "Coordinator";
    case AgentRole::GynecologicalEndocrine: return "GynecologicalEndocrine";
    case AgentRole::Radiology: return "Radiology";
    case AgentRole::Exclusion: return "Exclusion";
    case AgentRole::Reporting: return "Reporting";
    case AgentRole::Extraction: return "Extraction";
  }
  return "Coordinator";
}

std::optional<AgentRole> parse_role(std::string_view s) {
  for (auto r : {AgentRole::Coordinator, AgentRole::GynecologicalEndocrine, AgentRole::Radiology,
                 AgentRole::Exclusion, AgentRole::Reporting, AgentRole::Extraction}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::string_view to_string(Step s) {
  switch (s) {
    case Step::CyclesAndClinical: return "step1";
    case Step::Biochemical: return "step2";
    case Step::Imaging: return "step3";
    case Step::Exclusion: return "exclusion";
    case Step::Report: return "report";
    case Step::RecordExtraction: return "record_extraction";
    case Step::EntityExtraction: return "entity_extraction";
    case Step::RelationExtraction: return "relation_extraction";
  }
  return "step1";
}

std::optional<Step> parse_step(std::string_view s) {
  for (auto st : {Step::CyclesAndClinical, Step::Biochemical, Step::Imaging, Step::Exclusion,
                  Step::Report, Step::RecordExtraction, Step::EntityExtraction,
                  Step::RelationExtraction}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::span<const Field> step_fields(Step s) {
  switch (s) {
    case Step::CyclesAndClinical: return kStep1Fields;
    case Step::Biochemical: return kStep2Fields;
    case Step::Imaging: return kStep3Fields;
    case Step::Exclusion: return kExclusionFields;
    default: return {};
  }
}

AgentRole role_for(Step s) {
  switch (s) {
    case Step::CyclesAndClinical:
    case Step::Biochemical: return AgentRole::GynecologicalEndocrine;
    case Step::Imaging: return AgentRole::Radiology;
    case Step::Exclusion: return AgentRole::Exclusion;
    case Step::Report: return AgentRole::Reporting;
    default: return AgentRole::Extraction;
  }
}

std::string PromptSpec::render() const {
  std::string out;
  out.reserve(role_preamble.size() + task_input.size() + static_guidelines.size() +
              injected_knowledge.size() + output_schema.size() + 256);
  out.append(kHeaderRole).append("\n").append(role_preamble).append("\n\n");
  out.append(kHeaderTask).append("\n").append(task_description).append("\n");
  out.append("Input JSON: ").append(task_input).append("\n\n");
  out.append(kHeaderGuidelines).append("\n").append(static_guidelines).append("\n\n");
  out.append(kHeaderKnowledge).append("\n").append(injected_knowledge).append("\n\n");
  out.append(kHeaderConstraint).append("\n").append(output_schema).append("\n");
  return out;
}

std::string PromptSpec::hash() const { return sha256_hex(render()); }

std::vector<std::string> reply_keys(Step s) {
  switch (s) {
    case Step::CyclesAndClinical: return {"Irregular_cycles", "Clinical_hyperandrogenism"};
    case Step::Biochemical: return {"Biochemical_hyperandrogenism"};
    case Step::Imaging: return {"Polycystic_ovarian_morphology"};
    case Step::Exclusion: return {"NCCAH", "Thyroid_dysfunction", "Hyperprolactinemia"};
    case Step::Report: return {"Overall_assessment"};
    default: return {};
  }
}

std::optional<CriterionId> criterion_for_key(std::string_view key) {
  if (key == "Irregular_cycles") return CriterionId::IrregularCycles;
  if (key == "Clinical_hyperandrogenism") return CriterionId::ClinicalHA;
  if (key == "Biochemical_hyperandrogenism") return CriterionId::BiochemicalHA;
  if (key == "Polycystic_ovarian_morphology") return CriterionId::PCOM;
  if (key == "NCCAH") return CriterionId::ExclusionNCCAH;
  if (key == "Thyroid_dysfunction") return CriterionId::ExclusionThyroid;
  if (key == "Hyperprolactinemia") return CriterionId::ExclusionProlactin;
  return std::nullopt;
}

std::string render_knowledge(const RetrievalResult& knowledge) {
  if (knowledge.items.empty()) return "(no knowledge retrieved)";
  std::string out;
  for (const auto& item : knowledge.items) {
    if (!out.empty()) out += "\n";
    out += "- [" + item.entity_id + "] " + item.name + ": " + item.context;
    std::vector<std::string> sources;
    for (const auto& c : item.citations) sources.push_back(c.chunk_id);
    out += " (source: ";
    for (std::size_t i = 0; i < sources.size(); ++i) out += (i ? ", " : "") + sources[i];
    out += ")";
  }
  return out;
}

PromptSpec assemble_prompt(AgentRole role, Step step, const Json& patient_slice,
                           const ThresholdConfig& cfg, const RetrievalResult& knowledge,
                           bool strict) {
  if (!is_clinical(step)) {
    throw AssemblyError("assemble_prompt: '" + std::string(to_string(step)) +
                        "' is not a clinical step");
  }
  if (role != role_for(step)) {
    throw AssemblyError("assemble_prompt: role " + std::string(to_string(role)) +
                        " does not run " + std::string(to_string(step)));
  }
  if (strict) {
    auto allowed = step_fields(step);
    for (const auto& path : slice_paths(patient_slice)) {
      auto f = field_from_path(path);
      if (!f || std::find(allowed.begin(), allowed.end(), *f) == allowed.end()) {
        throw AssemblyError("slice for " + std::string(to_string(step)) +
                            " contains field outside the step: " + path);
      }
    }
  }
  PromptSpec p;
  p.role = role;
  p.step = step;
  p.role_preamble = preamble_for(role);
  p.task_description = task_for(step);
  p.task_input = canonical_dump(patient_slice.is_null() ? Json::object() : patient_slice);
  p.static_guidelines = guidelines_for(step, cfg);
  p.injected_knowledge = render_knowledge(knowledge);
  p.output_schema = criterion_schema(step);
  return p;
}

PromptSpec assemble_report_prompt(const Json& findings, const RetrievalResult& knowledge) {
  PromptSpec p;
  p.role = AgentRole::Reporting;
  p.step = Step::Report;
  p.role_preamble = preamble_for(p.role);
  p.task_description = task_for(p.step);
  p.task_input = canonical_dump(findings);
  p.static_guidelines =
      "- Two-out-of-three rule: the diagnosis requires at least two of irregular cycles, "
      "hyperandrogenism (clinical or biochemical) and polycystic ovarian morphology.\n"
      "- Other causes must be excluded before the diagnosis is confirmed.";
  p.injected_knowledge = render_knowledge(knowledge);
  p.output_schema = criterion_schema(p.step);
  return p;
}

PromptSpec assemble_record_extraction_prompt(std::string_view note) {
  PromptSpec p;
  p.role = AgentRole::Extraction;
  p.step = Step::RecordExtraction;
  p.role_preamble = preamble_for(p.role);
  p.task_description = task_for(p.step);
  p.task_input = canonical_dump(Json{{"note", std::string(note)}});
  std::string fields;
  for (const auto& f : all_fields()) {
    fields += "\n- " + std::string(f.path);
    if (!f.units.empty()) fields += " [" + std::string(f.units.front()) + "]";
  }
  p.static_guidelines = "- Allowed fields and canonical units:" + fields;
  p.injected_knowledge = render_knowledge({});
  p.output_schema =
      "Output a single JSON object:\n"
      "{\"fields\": [{\"field\": \"<field path>\", \"value\": <number|string|boolean>, "
      "\"unit\": \"<unit or null>\", \"span\": [<begin byte>, <end byte>], "
      "\"status\": \"certain/uncertain\"}]}";
  return p;
}

PromptSpec assemble_entity_prompt(const Json& task, std::span<const OntologyLabel> ontology) {
  PromptSpec p;
  p.role = AgentRole::Extraction;
  p.step = Step::EntityExtraction;
  p.role_preamble = preamble_for(p.role);
  p.task_description = task_for(p.step);
  p.task_input = canonical_dump(task);
  std::string labels = "- Entity types (use exactly one):";
  for (const auto& l : ontology) labels += "\n  - " + l.label + ": " + l.description;
  p.static_guidelines = labels;
  p.injected_knowledge = render_knowledge({});
  p.output_schema =
      "Output a single JSON object:\n"
      "{\"entities\": [{\"name\": \"<verbatim mention>\", \"type\": \"<entity type>\", "
      "\"context\": \"<one-sentence summary>\"}]}";
  return p;
}

PromptSpec assemble_relation_prompt(const Json& task) {
  PromptSpec p;
  p.role = AgentRole::Extraction;
  p.step = Step::RelationExtraction;
  p.role_preamble = preamble_for(p.role);
  p.task_description = task_for(p.step);
  p.task_input = canonical_dump(task);
  p.static_guidelines =
      "- Relations are directed (head, relation, tail) and must be stated within the text.\n"
      "- Use short lowercase relation labels such as indicates, defined_by, assessed_by, "
      "mimics, requires, excludes.";
  p.injected_knowledge = render_knowledge({});
  p.output_schema =
      "Output a single JSON object:\n"
      "{\"relations\": [{\"head\": \"<entity id>\", \"relation\": \"<label>\", "
      "\"tail\": \"<entity id>\"}]}";
  return p;
}

Json parse_json_reply(std::string_view raw, std::vector<std::string>& diagnostics) {
  std::string text(raw);
  auto parsed = try_parse(text);
  if (!parsed) {
    if (auto stripped = strip_fences(text)) {
      diagnostics.push_back("repaired: stripped markdown code fence");
      text = *stripped;
      parsed = try_parse(text);
    }
  }
  if (!parsed) {
    bool changed = false;
    auto fixed = remove_trailing_commas(text, changed);
    if (changed) {
      diagnostics.push_back("repaired: removed trailing comma");
      parsed = try_parse(fixed);
    }
  }
  if (!parsed) throw ReplyError("reply is not valid JSON after repair");
  if (!parsed->is_object()) throw ReplyError("reply is not a JSON object");
  return *parsed;
}

AgentReply parse_reply(std::string_view raw, std::span<const std::string> expected_keys) {
  AgentReply reply;
  Json j = parse_json_reply(raw, reply.parse_diagnostics);
  std::set<std::string> expected(expected_keys.begin(), expected_keys.end());
  for (const auto& [key, _] : j.items()) {
    if (!expected.count(key)) throw ReplyError("unexpected key in reply: " + key);
  }
  for (const auto& key : expected_keys) {
    auto it = j.find(key);
    if (it == j.end()) throw ReplyError("reply is missing key: " + key);
    if (!it->is_object()) throw ReplyError(key + ": expected an object");
    auto st = it->find("status");
    auto rs = it->find("reasoning");
    if (st == it->end() || !st->is_string()) throw ReplyError(key + ": missing status");
    if (rs == it->end() || !rs->is_string()) throw ReplyError(key + ": missing reasoning");
    auto raw_status = st->get<std::string>();
    auto status = parse_status(trim(raw_status));
    if (!status) throw ReplyError(key + ": status '" + raw_status + "' is not Yes/No/Uncertain");
    if (to_string(*status) != raw_status) {
      reply.parse_diagnostics.push_back("canonicalized status of " + key + ": '" + raw_status + "'");
    }
    reply.criteria[key] = {*status, rs->get<std::string>()};
  }
  return reply;
}

Usage& Usage::operator+=(const Usage& o) {
  prompt_tokens += o.prompt_tokens;
  completion_tokens += o.completion_tokens;
  wall_seconds += o.wall_seconds;
  return *this;
}

Json to_json(const Usage& u) {
  return {{"prompt_tokens", u.prompt_tokens},
          {"completion_tokens", u.completion_tokens},
          {"wall_seconds", u.wall_seconds}};
}

Usage usage_from_json(const Json& j) {
  Usage u;
  u.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  u.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  u.wall_seconds = j.at("wall_seconds").get<double>();
  return u;
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Remote: return "Remote";
    case BackendKind::RuleOracle: return "RuleOracle";
    case BackendKind::Replay: return "Replay";
  }
  return "RuleOracle";
}

namespace {

template <typename Parse>
auto call_with_retry(AgentBackend& backend, const PromptSpec& prompt, const CallObserver& observer,
                     Parse parse) {
  auto attempt = [&](const PromptSpec& p) {
    Completion c = backend.complete(p);
    if (observer) observer(p, c);
    return parse(c.text);
  };
  try {
    return attempt(prompt);
  } catch (const ReplyError&) {
    PromptSpec retry = prompt;
    retry.output_schema += "\n";
    retry.output_schema += kJsonOnlyReminder;
    try {
      return attempt(retry);
    } catch (const ReplyError& e) {
      throw BackendError(std::string(to_string(prompt.step)) +
                         ": invalid reply after retry: " + e.what());
    }
  }
}

}  // namespace

AgentReply call_criteria_agent(AgentBackend& backend, const PromptSpec& prompt,
                               const CallObserver& observer) {
  const auto keys = reply_keys(prompt.step);
  return call_with_retry(backend, prompt, observer,
                         [&](const std::string& text) { return parse_reply(text, keys); });
}

Json call_json_agent(AgentBackend& backend, const PromptSpec& prompt, const CallObserver& observer) {
  return call_with_retry(backend, prompt, observer, [](const std::string& text) {
    std::vector<std::string> diagnostics;
    return parse_json_reply(text, diagnostics);
  });
}

}  // namespace pcosdx
