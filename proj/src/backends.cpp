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

#include "pcosdx/backends.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "pcosdx/errors.hpp"
#include "pcosdx/knowledge_graph.hpp"

namespace pcosdx {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

Json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// [begin, end) byte ranges of sentences. A sentence ends at '.', '!' or '?'
// followed by whitespace or end of text, or at a newline.
std::vector<std::pair<std::size_t, std::size_t>> sentences(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool end = c == '\n' || ((c == '.' || c == '!' || c == '?') &&
                             (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))));
    if (end) {
      out.emplace_back(start, c == '\n' ? i : i + 1);
      start = i + 1;
    }
  }
  if (start < text.size()) out.emplace_back(start, text.size());
  return out;
}

std::size_t sentence_of(const std::vector<std::pair<std::size_t, std::size_t>>& s, std::size_t pos) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (pos >= s[i].first && pos < s[i].second) return i;
  return s.size();
}

std::string utf8_prefix(std::string_view s, std::size_t n) {
  if (s.size() <= n) return std::string(s);
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return std::string(s.substr(0, n));
}

Json parse_task(const PromptSpec& prompt) {
  try {
    return Json::parse(prompt.task_input);
  } catch (const Json::parse_error& e) {
    throw SliceError(std::string(to_string(prompt.step)) + ": task input is not JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Clinical steps

PatientRecord slice_record(const PromptSpec& prompt, const Json& slice) {
  auto allowed = step_fields(prompt.step);
  for (const auto& path : slice_paths(slice)) {
    auto f = field_from_path(path);
    if (!f || std::find(allowed.begin(), allowed.end(), *f) == allowed.end())
      throw SliceError(std::string(to_string(prompt.step)) + ": field outside the step slice: " + path);
  }
  try {
    return record_from_slice(slice);
  } catch (const SchemaError& e) {
    throw SliceError(std::string(to_string(prompt.step)) + ": malformed slice: " + e.what());
  }
}

Json verdict(const CriterionResult& r) {
  return {{"status", to_string(r.status)}, {"reasoning", r.reasoning}};
}

std::string answer_clinical(const PromptSpec& prompt, const ThresholdConfig& cfg) {
  auto p = slice_record(prompt, parse_task(prompt));
  Json reply = Json::object();
  switch (prompt.step) {
    case Step::CyclesAndClinical:
      reply["Irregular_cycles"] = verdict(eval_irregular_cycles(p, cfg));
      reply["Clinical_hyperandrogenism"] = verdict(eval_clinical_ha(p, cfg));
      break;
    case Step::Biochemical:
      reply["Biochemical_hyperandrogenism"] = verdict(eval_biochemical_ha(p, cfg));
      break;
    case Step::Imaging:
      reply["Polycystic_ovarian_morphology"] = verdict(eval_pcom(p, cfg));
      break;
    case Step::Exclusion: {
      auto ex = eval_exclusions(p, cfg);
      reply["NCCAH"] = verdict(ex.at(0));
      reply["Thyroid_dysfunction"] = verdict(ex.at(1));
      reply["Hyperprolactinemia"] = verdict(ex.at(2));
      break;
    }
    default: break;
  }
  return canonical_dump(reply);
}

std::string answer_report(const PromptSpec& prompt) {
  Json findings = parse_task(prompt);
  if (!findings.is_object() || !findings.contains("outcome") || !findings["outcome"].is_string())
    throw SliceError("report: findings lack an outcome");
  auto outcome = findings["outcome"].get<std::string>();
  CriterionStatus status = CriterionStatus::Uncertain;
  if (outcome == "PCOS_CONFIRMED") status = CriterionStatus::Yes;
  if (outcome == "PCOS_EXCLUDED" || outcome.rfind("ALTERNATIVE", 0) == 0) status = CriterionStatus::No;
  std::string reasoning = "Workflow outcome " + outcome + ".";
  if (findings.contains("met_components") && findings["met_components"].is_array()) {
    auto met = findings["met_components"];
    reasoning += " Rotterdam components met: " + std::to_string(met.size()) + " of 3";
    if (!met.empty()) {
      reasoning += " (";
      for (std::size_t i = 0; i < met.size(); ++i)
        reasoning += (i ? ", " : "") + met[i].get<std::string>();
      reasoning += ")";
    }
    reasoning += ".";
  }
  Json reply = {{"Overall_assessment", {{"status", to_string(status)}, {"reasoning", reasoning}}}};
  return canonical_dump(reply);
}

// ---------------------------------------------------------------------------
// Record extraction: a regex-level reader for common phrasings.

struct Extracted {
  Field field;
  std::string value;
  std::string unit;
  std::size_t begin;
  std::size_t end;
  bool certain = true;
};

const std::string kNum = R"((\d+(?:\.\d+)?))";
const std::string kRange = R"(\s*(?:-|–|—|to)\s*)";
const std::string kSep = R"(\s*(?:of|was|is|at|:|=)?\s*)";
const std::string kUnit = R"((?:\s*([A-Za-zµμ%]+(?:/[A-Za-z]+)?))?)";

struct LabPattern {
  Field field;
  std::string names;
};

const std::vector<LabPattern>& lab_patterns() {
  // Free testosterone before the bare word so the longer name wins.
  static const std::vector<LabPattern> v = {
      {Field::FreeTestosterone, "free testosterone"},
      {Field::TotalTestosterone, "total testosterone|testosterone"},
      {Field::FreeAndrogenIndex, "free androgen index|FAI"},
      {Field::Dheas, "DHEA-?S|DHEA sulfate|DHEA sulphate"},
      {Field::Shbg, "SHBG|sex hormone[- ]binding globulin"},
      {Field::Amh, "AMH|anti-m[uü]llerian hormone"},
      {Field::Ohp17, "17-?OHP|17-hydroxyprogesterone"},
      {Field::Tsh, "TSH"},
      {Field::Prolactin, "prolactin|PRL"},
  };
  return v;
}

std::vector<Extracted> extract_record_fields(const std::string& note) {
  std::vector<Extracted> out;
  std::vector<std::pair<std::size_t, std::size_t>> used;
  std::set<Field> seen;
  auto overlaps = [&](std::size_t b, std::size_t e) {
    return std::any_of(used.begin(), used.end(), [&](const auto& u) { return b < u.second && u.first < e; });
  };
  auto flags = std::regex::ECMAScript | std::regex::icase;
  // Runs `re` over the note; `emit` turns a match into fields.
  auto scan = [&](const std::string& re, auto emit) {
    std::regex rx(re, flags);
    for (auto it = std::sregex_iterator(note.begin(), note.end(), rx); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      auto b = static_cast<std::size_t>(m.position(0));
      auto e = b + static_cast<std::size_t>(m.length(0));
      if (b > 0 && is_word(note[b - 1])) continue;
      if (overlaps(b, e)) continue;
      std::vector<Extracted> got = emit(m, b, e);
      bool any = false;
      for (auto& x : got) {
        if (seen.count(x.field)) continue;
        seen.insert(x.field);
        out.push_back(std::move(x));
        any = true;
      }
      if (any) used.emplace_back(b, e);
    }
  };
  using M = std::smatch;

  scan(R"(cycles?\s+(?:every|of|lasting|length(?:s)?(?: of)?)?\s*)" + kNum + kRange + kNum + R"(\s*days)",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::CycleMinDays, m[1], "days", b, e},
                                       {Field::CycleMaxDays, m[2], "days", b, e}};
       });
  scan(R"((\d+)\s*(?:menstrual\s+)?(?:cycles|periods|menses)\s*(?:per|a|/|each)\s*(?:year|yr))",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::CyclesPerYear, m[1], "cycles/year", b, e}};
       });
  scan(R"(longest\s+(?:single\s+)?cycle)" + kSep + R"((\d+(?:\.\d+)?)\s*days)",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::LongestCycleDays, m[1], "days", b, e}};
       });
  scan(R"((?:modified\s+)?(?:ferriman[- ]gallwey|mFG|FG)(?:\s+score)?)" + kSep + R"((\d+))",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::FerrimanGallwey, m[1], "score", b, e}};
       });
  scan(R"((\d+(?:\.\d+)?)\s*years?\s+(?:post[- ]?menarche|since menarche|after menarche))",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::YearsPostMenarche, m[1], "years", b, e}};
       });
  scan(R"((\d+)[- ]year[- ]old)", [&](const M& m, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::AgeYears, m[1], "years", b, e}};
  });
  scan(R"(aged?\s*:?\s*(\d+))", [&](const M& m, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::AgeYears, m[1], "years", b, e}};
  });
  scan(R"(no\s+acne)", [&](const M&, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::Acne, "absent", "grade", b, e}};
  });
  scan(R"((mild|moderate|severe)\s+acne)", [&](const M& m, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::Acne, lower(m[1].str()), "grade", b, e}};
  });
  scan(R"(no\s+(?:androgenic\s+)?alopecia)", [&](const M&, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::Alopecia, "false", "flag", b, e}};
  });
  scan(R"((?:androgenic\s+)?alopecia)", [&](const M&, std::size_t b, std::size_t e) {
    return std::vector<Extracted>{{Field::Alopecia, "true", "flag", b, e}};
  });
  for (const auto& lab : lab_patterns()) {
    scan("(?:" + lab.names + ")" + kSep + kNum + kUnit, [&](const M& m, std::size_t b, std::size_t e) {
      Extracted x{lab.field, m[1], m[2].matched ? m[2].str() : "", b, e};
      // A value without an accepted unit is not guessed.
      x.certain = m[2].matched && canonical_unit(lab.field, x.unit).has_value();
      return std::vector<Extracted>{x};
    });
  }
  scan(R"((\d+)\s*follicles?\s+(?:in\s+)?(?:each|both)\s+ovar(?:y|ies))",
       [&](const M& m, std::size_t b, std::size_t e) {
         return std::vector<Extracted>{{Field::FollicleCountLeft, m[1], "count", b, e},
                                       {Field::FollicleCountRight, m[1], "count", b, e}};
       });
  scan(R"((\d+)\s*follicles?\s+(?:in\s+)?(?:the\s+)?(left|right)(?:\s+ovary)?)",
       [&](const M& m, std::size_t b, std::size_t e) {
         bool left = lower(m[2].str()) == "left";
         return std::vector<Extracted>{
             {left ? Field::FollicleCountLeft : Field::FollicleCountRight, m[1], "count", b, e}};
       });
  scan(R"((left|right)\s+ovar(?:y|ian)\s+volume)" + kSep + kNum + R"(\s*(?:mL|ml|cc))",
       [&](const M& m, std::size_t b, std::size_t e) {
         bool left = lower(m[1].str()) == "left";
         return std::vector<Extracted>{
             {left ? Field::OvarianVolumeLeft : Field::OvarianVolumeRight, m[2], "mL", b, e}};
       });
  std::sort(out.begin(), out.end(), [](const Extracted& a, const Extracted& b) {
    return std::tie(a.begin, a.field) < std::tie(b.begin, b.field);
  });
  return out;
}

std::string answer_record_extraction(const PromptSpec& prompt) {
  Json task = parse_task(prompt);
  if (!task.is_object() || !task.contains("note") || !task["note"].is_string())
    throw SliceError("record_extraction: task input lacks a note");
  auto note = task["note"].get<std::string>();
  Json fields = Json::array();
  for (const auto& x : extract_record_fields(note)) {
    fields.push_back({{"field", field_info(x.field).path},
                      {"value", x.value},
                      {"unit", x.unit},
                      {"span", {x.begin, x.end}},
                      {"status", x.certain ? "certain" : "uncertain"}});
  }
  return canonical_dump(Json{{"fields", fields}});
}

// ---------------------------------------------------------------------------
// KG extraction

std::string answer_entities(const PromptSpec& prompt, const std::optional<Lexicon>& lexicon) {
  Json task = parse_task(prompt);
  if (!task.is_object() || !task.contains("text") || !task["text"].is_string())
    throw SliceError("entity_extraction: task input lacks text");
  auto text = task["text"].get<std::string>();
  Json entities = Json::array();
  if (lexicon) {
    auto hay = lower(text);
    std::vector<const Lexicon::Term*> terms;
    for (const auto& t : lexicon->terms) terms.push_back(&t);
    std::stable_sort(terms.begin(), terms.end(),
                     [](const auto* a, const auto* b) { return a->term.size() > b->term.size(); });
    auto sents = sentences(text);
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t i = 0;
    while (i < hay.size()) {
      if (i > 0 && is_word(hay[i - 1])) {
        ++i;
        continue;
      }
      const Lexicon::Term* hit = nullptr;
      for (const auto* t : terms) {
        auto needle = lower(t->term);
        if (needle.empty() || hay.compare(i, needle.size(), needle) != 0) continue;
        auto end = i + needle.size();
        if (end < hay.size() && is_word(hay[end])) continue;
        hit = t;
        break;
      }
      if (!hit) {
        ++i;
        continue;
      }
      auto name = text.substr(i, hit->term.size());
      if (seen.insert({normalize_name(name), hit->type}).second) {
        auto s = sentence_of(sents, i);
        std::string context = s < sents.size() ? trim(std::string_view(text).substr(
                                                     sents[s].first, sents[s].second - sents[s].first))
                                               : name;
        entities.push_back({{"name", name}, {"type", hit->type}, {"context", utf8_prefix(context, 300)}});
      }
      i += hit->term.size();
    }
  }
  return canonical_dump(Json{{"entities", entities}});
}

std::string answer_relations(const PromptSpec& prompt, const std::optional<Lexicon>& lexicon) {
  Json task = parse_task(prompt);
  if (!task.is_object() || !task.contains("text") || !task["text"].is_string() ||
      !task.contains("entities") || !task["entities"].is_array())
    throw SliceError("relation_extraction: task input lacks text or entities");
  auto text = task["text"].get<std::string>();
  Json relations = Json::array();
  if (!lexicon) return canonical_dump(Json{{"relations", relations}});

  struct Mention {
    std::size_t begin, end;
    std::string id;
  };
  auto hay = lower(text);
  std::vector<Mention> mentions;
  for (const auto& e : task["entities"]) {
    auto needle = lower(e.at("name").get<std::string>());
    auto id = e.at("id").get<std::string>();
    if (needle.empty()) continue;
    for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) {
      auto end = at + needle.size();
      if ((at > 0 && is_word(hay[at - 1])) || (end < hay.size() && is_word(hay[end]))) continue;
      mentions.push_back({at, end, id});
    }
  }
  std::sort(mentions.begin(), mentions.end(), [](const Mention& a, const Mention& b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.end != b.end) return a.end > b.end;
    return a.id < b.id;
  });
  std::vector<Mention> kept;
  for (const auto& m : mentions)
    if (kept.empty() || m.begin >= kept.back().end) kept.push_back(m);

  std::vector<const Lexicon::Cue*> cues;
  for (const auto& c : lexicon->cues) cues.push_back(&c);
  std::stable_sort(cues.begin(), cues.end(),
                   [](const auto* a, const auto* b) { return a->phrase.size() > b->phrase.size(); });
  auto sents = sentences(text);
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (std::size_t k = 0; k + 1 < kept.size(); ++k) {
    const auto& a = kept[k];
    const auto& b = kept[k + 1];
    if (a.id == b.id || sentence_of(sents, a.begin) != sentence_of(sents, b.begin)) continue;
    auto between = hay.substr(a.end, b.begin - a.end);
    for (const auto* c : cues) {
      if (between.find(lower(c->phrase)) == std::string::npos) continue;
      if (seen.insert({a.id, c->relation, b.id}).second)
        relations.push_back({{"head", a.id}, {"relation", c->relation}, {"tail", b.id}});
      break;
    }
  }
  return canonical_dump(Json{{"relations", relations}});
}

}  // namespace

// ---------------------------------------------------------------------------

Lexicon lexicon_from_json(const Json& j) {
  Lexicon lx;
  try {
    for (const auto& t : j.at("terms")) lx.terms.push_back({t.at("term").get<std::string>(), t.at("type").get<std::string>()});
    for (const auto& c : j.value("cues", Json::array()))
      lx.cues.push_back({c.at("phrase").get<std::string>(), c.at("relation").get<std::string>()});
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("lexicon: ") + e.what());
  }
  return lx;
}

Lexicon load_lexicon(const std::string& path) { return lexicon_from_json(parse_file(path)); }

RuleOracleBackend::RuleOracleBackend(ThresholdConfig cfg, std::optional<Lexicon> lexicon, bool timed)
    : cfg_(std::move(cfg)), lexicon_(std::move(lexicon)), timed_(timed) {
  validate(cfg_);
}

BackendInfo RuleOracleBackend::info() const {
  std::string id = "rule-oracle:" + config_hash(cfg_).substr(0, 12);
  if (lexicon_) {
    Json lx = Json::array();
    for (const auto& t : lexicon_->terms) lx.push_back({t.term, t.type});
    for (const auto& c : lexicon_->cues) lx.push_back({c.phrase, c.relation});
    id += ":lex" + json_hash(lx).substr(0, 12);
  }
  return {id, BackendKind::RuleOracle, std::nullopt};
}

std::string RuleOracleBackend::answer(const PromptSpec& prompt) const {
  switch (prompt.step) {
    case Step::CyclesAndClinical:
    case Step::Biochemical:
    case Step::Imaging:
    case Step::Exclusion: return answer_clinical(prompt, cfg_);
    case Step::Report: return answer_report(prompt);
    case Step::RecordExtraction: return answer_record_extraction(prompt);
    case Step::EntityExtraction: return answer_entities(prompt, lexicon_);
    case Step::RelationExtraction: return answer_relations(prompt, lexicon_);
  }
  throw SliceError("unknown step");
}

Completion RuleOracleBackend::complete(const PromptSpec& prompt) {
  auto start = std::chrono::steady_clock::now();
  Completion c;
  c.text = answer(prompt);
  if (timed_)
    c.usage.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

// ---------------------------------------------------------------------------
// Cassettes

Json to_json(const CassetteEntry& e) {
  return {{"prompt_hash", e.prompt_hash},
          {"role", e.role},
          {"step", e.step},
          {"reply", e.reply},
          {"usage", to_json(e.usage)}};
}

CassetteEntry cassette_entry_from_json(const Json& j) {
  CassetteEntry e;
  e.prompt_hash = j.at("prompt_hash").get<std::string>();
  e.role = j.at("role").get<std::string>();
  e.step = j.at("step").get<std::string>();
  e.reply = j.at("reply").get<std::string>();
  e.usage = usage_from_json(j.at("usage"));
  return e;
}

ReplayBackend::ReplayBackend(std::vector<CassetteEntry> entries) {
  std::string digest;
  for (auto& e : entries) {
    digest += e.prompt_hash;
    entries_.emplace(e.prompt_hash, std::move(e));
  }
  id_ = "replay:" + sha256_hex(digest).substr(0, 12);
}

namespace {

std::vector<CassetteEntry> read_cassette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cassette " + path);
  std::vector<CassetteEntry> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(cassette_entry_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ReplayBackend::ReplayBackend(const std::string& cassette_path) : ReplayBackend(read_cassette(cassette_path)) {}

BackendInfo ReplayBackend::info() const { return {id_, BackendKind::Replay, std::nullopt}; }

Completion ReplayBackend::complete(const PromptSpec& prompt) {
  auto hash = prompt.hash();
  auto it = entries_.find(hash);
  if (it == entries_.end())
    throw CassetteMiss("no cassette entry for " + std::string(to_string(prompt.step)) + " prompt " + hash);
  return {it->second.reply, it->second.usage};
}

RecordingBackend::RecordingBackend(std::shared_ptr<AgentBackend> inner, std::string cassette_path)
    : inner_(std::move(inner)), path_(std::move(cassette_path)) {
  std::ifstream in(path_);
  if (in) {
    for (const auto& e : read_cassette(path_)) written_[e.prompt_hash] = true;
  }
}

BackendInfo RecordingBackend::info() const { return inner_->info(); }

Completion RecordingBackend::complete(const PromptSpec& prompt) {
  Completion c = inner_->complete(prompt);
  CassetteEntry e{prompt.hash(), std::string(to_string(prompt.role)), std::string(to_string(prompt.step)),
                  c.text, c.usage};
  std::lock_guard lock(mu_);
  if (written_.count(e.prompt_hash)) return c;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw StorageError("cannot append to cassette " + path_);
  out << canonical_dump(to_json(e)) << "\n";
  out.flush();
  if (!out) throw StorageError("short write to cassette " + path_);
  written_[e.prompt_hash] = true;
  return c;
}

// ---------------------------------------------------------------------------
// Remote

RemoteBackendConfig remote_config_from_env() {
  auto get = [](const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) throw ConfigError(std::string(name) + " is not set");
    return std::string(v);
  };
  RemoteBackendConfig cfg;
  cfg.api_key = get("MAPIS_API_KEY");
  cfg.api_base = get("MAPIS_API_BASE");
  cfg.model = get("MAPIS_MODEL");
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig cfg, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  if (cfg_.max_in_flight == 0) cfg_.max_in_flight = 1;
}

BackendInfo RemoteBackend::info() const { return {"remote:" + cfg_.model, BackendKind::Remote, cfg_.model}; }

Completion RemoteBackend::complete(const PromptSpec& prompt) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    RemoteBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  HttpRequest req;
  auto base = cfg_.api_base;
  while (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + "/chat/completions";
  req.headers = {{"Authorization", "Bearer " + cfg_.api_key}, {"Content-Type", "application/json"}};
  req.timeout = cfg_.timeout;
  req.body = canonical_dump(Json{{"model", cfg_.model},
                                 {"temperature", 0},
                                 {"messages", Json::array({{{"role", "user"}, {"content", prompt.render()}}})}});

  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.transport_retries; ++attempt) {
    if (attempt > 0) {
      std::uniform_real_distribution<double> jitter(0.5, 1.5);
      double delay = cfg_.backoff_base_seconds * static_cast<double>(1 << (attempt - 1)) * jitter(rng);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    auto start = std::chrono::steady_clock::now();
    HttpResponse resp;
    try {
      resp = transport_->post(req);
    } catch (const BackendError& e) {
      last_error = e.what();
      spdlog::warn("remote call failed (attempt {}): {}", attempt + 1, last_error);
      continue;
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (resp.status == 429 || resp.status >= 500) {
      last_error = "HTTP " + std::to_string(resp.status);
      spdlog::warn("remote call failed (attempt {}): {}", attempt + 1, last_error);
      continue;
    }
    if (resp.status < 200 || resp.status >= 300)
      throw BackendError("remote backend returned HTTP " + std::to_string(resp.status) + ": " +
                         utf8_prefix(resp.body, 200));
    try {
      Json j = Json::parse(resp.body);
      Completion c;
      c.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage")) {
        c.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
        c.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
      }
      c.usage.wall_seconds = wall;
      return c;
    } catch (const Json::exception& e) {
      throw BackendError(std::string("remote backend response is malformed: ") + e.what());
    }
  }
  throw BackendError("remote backend unavailable after " + std::to_string(cfg_.transport_retries + 1) +
                     " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Free-text extraction

PatientRecord extract_from_text(std::string_view note, AgentBackend& backend, std::string patient_id,
                                const CallObserver& observer) {
  PatientRecord p;
  p.patient_id = std::move(patient_id);
  p.free_text_notes = {std::string(note)};
  Json reply = call_json_agent(backend, assemble_record_extraction_prompt(note), observer);
  if (!reply.contains("fields") || !reply["fields"].is_array())
    throw BackendError("record extraction reply lacks a fields array");

  std::vector<std::string> violations;
  for (const auto& item : reply["fields"]) {
    try {
      auto status = item.at("status").get<std::string>();
      if (lower(status) == "uncertain") continue;
      if (lower(status) != "certain") {
        violations.push_back("extraction status '" + status + "' is not certain/uncertain");
        continue;
      }
      auto path = item.at("field").get<std::string>();
      auto f = field_from_path(path);
      if (!f) {
        violations.push_back(path + ": unknown field");
        continue;
      }
      if (has_field(p, *f)) continue;
      const auto& span = item.at("span");
      auto b = span.at(0).get<std::size_t>();
      auto e = span.at(1).get<std::size_t>();
      if (b >= e || e > note.size()) {
        violations.push_back(path + ": span outside the note");
        continue;
      }
      const auto& v = item.at("value");
      std::string value = v.is_string() ? v.get<std::string>() : v.dump();
      std::string unit = item.contains("unit") && item["unit"].is_string() ? item["unit"].get<std::string>() : "";
      const auto& info = field_info(*f);
      if (unit.empty() && info.kind != FieldKind::Lab && !info.units.empty()) unit = std::string(info.units.front());
      set_field_from_text(p, *f, value, unit);
      p.provenance.push_back({path, 0, b, e});
    } catch (const Json::exception& e) {
      violations.push_back(std::string("malformed extraction item: ") + e.what());
    } catch (const ValueError& e) {
      violations.push_back(e.what());
    } catch (const UnitError& e) {
      violations.push_back(e.what());
    }
  }
  if (!violations.empty()) throw SchemaError(violations);
  std::sort(p.provenance.begin(), p.provenance.end(), [](const TextSpan& a, const TextSpan& b) {
    return std::tie(a.begin, a.end, a.field) < std::tie(b.begin, b.end, b.field);
  });
  require_valid(p);
  return p;
}

}  // namespace pcosdx
