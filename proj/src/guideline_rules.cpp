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

#include "pcosdx/guideline_rules.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include "pcosdx/errors.hpp"

namespace pcosdx {
namespace {

struct LabCutoffSlot {
  std::string_view section;
  std::string_view key;
  Field field;
  std::optional<Quantity> ThresholdConfig::*member;
};

constexpr std::array<LabCutoffSlot, 8> kLabSlots{{
    {"biochemical", "total_testosterone_upper", Field::TotalTestosterone,
     &ThresholdConfig::total_testosterone_upper},
    {"biochemical", "free_testosterone_upper", Field::FreeTestosterone,
     &ThresholdConfig::free_testosterone_upper},
    {"biochemical", "fai_upper", Field::FreeAndrogenIndex, &ThresholdConfig::fai_upper},
    {"biochemical", "dheas_upper", Field::Dheas, &ThresholdConfig::dheas_upper},
    {"exclusion", "ohp17_upper", Field::Ohp17, &ThresholdConfig::ohp17_upper},
    {"exclusion", "tsh_lower", Field::Tsh, &ThresholdConfig::tsh_lower},
    {"exclusion", "tsh_upper", Field::Tsh, &ThresholdConfig::tsh_upper},
    {"exclusion", "prolactin_upper", Field::Prolactin, &ThresholdConfig::prolactin_upper},
}};

struct ScalarSlot {
  std::string_view section;
  std::string_view key;
  std::string_view unit;
  bool integral;
};

constexpr std::array<ScalarSlot, 8> kScalarSlots{{
    {"cycles", "cycle_short_days", "days", false},
    {"cycles", "cycle_long_days", "days", false},
    {"cycles", "min_cycles_per_year", "cycles/year", true},
    {"cycles", "single_cycle_irregular_days", "days", false},
    {"cycles", "post_menarche_years_gate", "years", false},
    {"clinical", "fg_cutoff", "score", true},
    {"pcom", "follicle_count_per_ovary_min", "count", true},
    {"pcom", "ovarian_volume_ml_min", "mL", false},
}};

double& scalar_ref(ThresholdConfig& c, std::string_view key, double& scratch) {
  if (key == "cycle_short_days") return c.cycle_short_days;
  if (key == "cycle_long_days") return c.cycle_long_days;
  if (key == "single_cycle_irregular_days") return c.single_cycle_irregular_days;
  if (key == "post_menarche_years_gate") return c.post_menarche_years_gate;
  if (key == "ovarian_volume_ml_min") return c.ovarian_volume_ml_min;
  return scratch;
}

int* int_ref(ThresholdConfig& c, std::string_view key) {
  if (key == "min_cycles_per_year") return &c.min_cycles_per_year;
  if (key == "fg_cutoff") return &c.fg_cutoff;
  if (key == "follicle_count_per_ovary_min") return &c.follicle_count_per_ovary_min;
  return nullptr;
}

std::string path_of(Field f) { return std::string(field_info(f).path); }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string missing_text(const std::vector<std::string>& missing) {
  std::vector<std::string> tags;
  for (const auto& m : missing) tags.push_back("missing:" + m);
  return join(tags, ", ");
}

std::string qty(const Quantity& q) { return format_number(q.value) + " " + q.unit; }

std::vector<std::string> present_inputs(const PatientRecord& p,
                                        std::initializer_list<Field> fields) {
  std::vector<std::string> out;
  for (Field f : fields) {
    if (has_field(p, f)) out.push_back(path_of(f));
  }
  return out;
}

const std::optional<Quantity>& lab(const PatientRecord& p, Field f) {
  const auto& b = p.biochemistry;
  switch (f) {
    case Field::TotalTestosterone: return b.total_testosterone;
    case Field::FreeTestosterone: return b.free_testosterone;
    case Field::Dheas: return b.dheas;
    case Field::Shbg: return b.shbg;
    case Field::FreeAndrogenIndex: return b.free_androgen_index;
    case Field::Amh: return b.amh;
    case Field::Ohp17: return b.ohp_17;
    case Field::Tsh: return b.tsh;
    case Field::Prolactin: return b.prolactin;
    default: throw Error("not a lab field");
  }
}

void check_unit(Field f, const Quantity& value, const Quantity& cutoff) {
  auto vu = canonical_unit(f, value.unit);
  auto cu = canonical_unit(f, cutoff.unit);
  if (!vu || !cu || *vu != *cu) {
    throw ConfigError(path_of(f) + ": value unit '" + value.unit +
                      "' does not match cutoff unit '" + cutoff.unit + "'");
  }
}

// Looks up a present lab against its cutoff, enforcing the fail-fast rule.
std::optional<double> lab_value(const PatientRecord& p, Field f,
                                const std::optional<Quantity>& cutoff) {
  const auto& v = lab(p, f);
  if (!v) return std::nullopt;
  if (!cutoff) {
    throw ConfigError(path_of(f) + " is present but no cutoff is configured");
  }
  check_unit(f, *v, *cutoff);
  return v->value;
}

CriterionResult make(CriterionId id, CriterionStatus s, std::string reasoning,
                     std::vector<std::string> inputs,
                     std::vector<std::string> missing = {}) {
  CriterionResult r;
  r.id = id;
  r.status = s;
  r.reasoning = std::move(reasoning);
  r.inputs_used = std::move(inputs);
  r.missing = std::move(missing);
  return r;
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

void validate(const ThresholdConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("threshold config: " + m); };
  if (!(c.cycle_short_days > 0 && c.cycle_long_days > 0 && c.min_cycles_per_year > 0 &&
        c.single_cycle_irregular_days > 0 && c.post_menarche_years_gate > 0 &&
        c.fg_cutoff > 0 && c.follicle_count_per_ovary_min > 0 &&
        c.ovarian_volume_ml_min > 0)) {
    fail("all cutoffs must be positive");
  }
  if (!(c.cycle_short_days < c.cycle_long_days)) {
    fail("cycle_short_days must be below cycle_long_days");
  }
  for (const auto& slot : kLabSlots) {
    const auto& q = c.*(slot.member);
    if (!q) continue;
    if (!(q->value > 0) || !std::isfinite(q->value)) {
      fail(std::string(slot.key) + " must be positive");
    }
    if (!canonical_unit(slot.field, q->unit)) {
      fail(std::string(slot.key) + ": unit '" + q->unit + "' does not match " +
           path_of(slot.field) + " (expected " +
           std::string(field_info(slot.field).units.front()) + ")");
    }
  }
  if (c.tsh_lower && c.tsh_upper && !(c.tsh_lower->value < c.tsh_upper->value)) {
    fail("tsh_lower must be below tsh_upper");
  }
}

Json to_json(const ThresholdConfig& c) {
  Json j = Json::object();
  j["schema"] = "pcosdx.thresholds";
  j["version"] = kThresholdConfigVersion;
  auto copy = c;
  double scratch = 0;
  for (const auto& s : kScalarSlots) {
    Json v = s.integral ? Json(*int_ref(copy, s.key)) : Json(scalar_ref(copy, s.key, scratch));
    j[std::string(s.section)][std::string(s.key)] = {{"value", v}, {"unit", s.unit}};
  }
  for (const auto& slot : kLabSlots) {
    const auto& q = c.*(slot.member);
    if (q) {
      j[std::string(slot.section)][std::string(slot.key)] = {{"value", q->value},
                                                             {"unit", q->unit}};
    }
  }
  return j;
}

ThresholdConfig threshold_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("threshold config: expected a JSON object");
  if (j.value("schema", "") != "pcosdx.thresholds") {
    throw ConfigError("threshold config: schema must be \"pcosdx.thresholds\"");
  }
  if (j.value("version", 0) != kThresholdConfigVersion) {
    throw ConfigError("threshold config: unsupported version");
  }
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> kKnown = {
        "schema", "version", "notes", "cycles", "clinical", "biochemical", "pcom", "exclusion"};
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw ConfigError("threshold config: unknown section '" + key + "'");
    }
  }
  auto entry = [&](std::string_view section, std::string_view key) -> const Json* {
    auto s = j.find(std::string(section));
    if (s == j.end()) return nullptr;
    auto e = s->find(std::string(key));
    if (e == s->end()) return nullptr;
    if (!e->is_object() || !e->contains("value") || !(*e)["value"].is_number() ||
        !e->contains("unit") || !(*e)["unit"].is_string()) {
      throw ConfigError("threshold config: " + std::string(key) +
                        " must be {\"value\": number, \"unit\": string}");
    }
    return &*e;
  };
  ThresholdConfig c;
  double scratch = 0;
  for (const auto& s : kScalarSlots) {
    const Json* e = entry(s.section, s.key);
    if (!e) continue;
    if ((*e)["unit"].get<std::string>() != s.unit) {
      throw ConfigError("threshold config: " + std::string(s.key) + " must be in " +
                        std::string(s.unit));
    }
    if (s.integral) {
      if (!(*e)["value"].is_number_integer()) {
        throw ConfigError("threshold config: " + std::string(s.key) + " must be an integer");
      }
      *int_ref(c, s.key) = (*e)["value"].get<int>();
    } else {
      scalar_ref(c, s.key, scratch) = (*e)["value"].get<double>();
    }
  }
  for (const auto& slot : kLabSlots) {
    if (const Json* e = entry(slot.section, slot.key)) {
      c.*(slot.member) = Quantity{(*e)["value"].get<double>(), (*e)["unit"].get<std::string>()};
    }
  }
  validate(c);
  return c;
}

ThresholdConfig load_threshold_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open threshold config: " + path);
  try {
    return threshold_config_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

std::string config_hash(const ThresholdConfig& cfg) { return json_hash(to_json(cfg)); }

void require_cutoffs_for(const PatientRecord& p, const ThresholdConfig& cfg) {
  for (const auto& slot : kLabSlots) {
    lab_value(p, slot.field, cfg.*(slot.member));
  }
}

std::string_view to_string(CriterionStatus s) {
  switch (s) {
    case CriterionStatus::Yes: return "Yes";
    case CriterionStatus::No: return "No";
    case CriterionStatus::Uncertain: return "Uncertain";
  }
  return "Uncertain";
}

std::optional<CriterionStatus> parse_status(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "yes") return CriterionStatus::Yes;
  if (v == "no") return CriterionStatus::No;
  if (v == "uncertain") return CriterionStatus::Uncertain;
  return std::nullopt;
}

std::string_view to_string(CriterionId id) {
  switch (id) {
    case CriterionId::IrregularCycles: return "IrregularCycles";
    case CriterionId::ClinicalHA: return "ClinicalHA";
    case CriterionId::BiochemicalHA: return "BiochemicalHA";
    case CriterionId::PCOM: return "PCOM";
    case CriterionId::ExclusionNCCAH: return "Exclusion-NCCAH";
    case CriterionId::ExclusionThyroid: return "Exclusion-Thyroid";
    case CriterionId::ExclusionProlactin: return "Exclusion-Prolactin";
  }
  return "IrregularCycles";
}

std::optional<CriterionId> parse_criterion_id(std::string_view s) {
  for (auto id : {CriterionId::IrregularCycles, CriterionId::ClinicalHA,
                  CriterionId::BiochemicalHA, CriterionId::PCOM, CriterionId::ExclusionNCCAH,
                  CriterionId::ExclusionThyroid, CriterionId::ExclusionProlactin}) {
    if (to_string(id) == s) return id;
  }
  return std::nullopt;
}

Json to_json(const CriterionResult& r) {
  return {{"criterion", to_string(r.id)},
          {"status", to_string(r.status)},
          {"reasoning", r.reasoning},
          {"evidence", r.evidence},
          {"inputs_used", r.inputs_used},
          {"missing", r.missing}};
}

CriterionResult criterion_result_from_json(const Json& j) {
  try {
    CriterionResult r;
    auto id = parse_criterion_id(j.at("criterion").get<std::string>());
    auto st = parse_status(j.at("status").get<std::string>());
    if (!id || !st) throw Error("criterion result: bad criterion or status");
    r.id = *id;
    r.status = *st;
    r.reasoning = j.at("reasoning").get<std::string>();
    r.evidence = j.at("evidence").get<std::vector<std::string>>();
    r.inputs_used = j.at("inputs_used").get<std::vector<std::string>>();
    r.missing = j.at("missing").get<std::vector<std::string>>();
    return r;
  } catch (const Json::exception& e) {
    throw Error(std::string("criterion result: ") + e.what());
  }
}

CriterionResult eval_irregular_cycles(const PatientRecord& p, const ThresholdConfig& cfg) {
  const auto& m = p.menstrual;
  const auto id = CriterionId::IrregularCycles;
  auto inputs = present_inputs(p, {Field::YearsPostMenarche, Field::CycleMinDays,
                                   Field::CycleMaxDays, Field::CyclesPerYear,
                                   Field::LongestCycleDays});

  if (m.longest_single_cycle_days && *m.longest_single_cycle_days > cfg.single_cycle_irregular_days) {
    return make(id, CriterionStatus::Yes,
                "Irregular: a single cycle of " + format_number(*m.longest_single_cycle_days) +
                    " days exceeds " + format_number(cfg.single_cycle_irregular_days) + " days.",
                inputs);
  }

  std::vector<std::string> abnormal;
  if (m.typical_cycle_min_days && *m.typical_cycle_min_days < cfg.cycle_short_days) {
    abnormal.push_back("shortest typical cycle " + format_number(*m.typical_cycle_min_days) +
                       " days < " + format_number(cfg.cycle_short_days));
  }
  if (m.typical_cycle_max_days && *m.typical_cycle_max_days > cfg.cycle_long_days) {
    abnormal.push_back("longest typical cycle " + format_number(*m.typical_cycle_max_days) +
                       " days > " + format_number(cfg.cycle_long_days));
  }
  if (m.cycles_per_year && *m.cycles_per_year < cfg.min_cycles_per_year) {
    abnormal.push_back(std::to_string(*m.cycles_per_year) + " cycles/year < " +
                       std::to_string(cfg.min_cycles_per_year));
  }

  const auto gate = format_number(cfg.post_menarche_years_gate);
  if (!abnormal.empty()) {
    const auto findings = join(abnormal, "; ");
    if (p.years_post_menarche && *p.years_post_menarche > cfg.post_menarche_years_gate) {
      return make(id, CriterionStatus::Yes,
                  "Irregular: " + findings + ", at " + format_number(*p.years_post_menarche) +
                      " years post-menarche (> " + gate + ").",
                  inputs);
    }
    if (p.years_post_menarche) {
      return make(id, CriterionStatus::Uncertain,
                  "Cycle pattern outside adult limits (" + findings + ") but only " +
                      format_number(*p.years_post_menarche) + " years post-menarche; the limits apply beyond " +
                      gate + " years.",
                  inputs);
    }
    std::vector<std::string> missing{path_of(Field::YearsPostMenarche)};
    return make(id, CriterionStatus::Uncertain,
                "Cycle pattern outside adult limits (" + findings +
                    ") but time since menarche is unknown; " + missing_text(missing) + ".",
                inputs, missing);
  }

  std::vector<std::string> missing;
  for (Field f : {Field::CycleMinDays, Field::CycleMaxDays, Field::CyclesPerYear,
                  Field::LongestCycleDays}) {
    if (!has_field(p, f)) missing.push_back(path_of(f));
  }
  if (!missing.empty()) {
    return make(id, CriterionStatus::Uncertain,
                "Insufficient menstrual history to rule out irregular cycles; " +
                    missing_text(missing) + ".",
                inputs, missing);
  }
  return make(id, CriterionStatus::No,
              "Regular: typical cycle " + format_number(*m.typical_cycle_min_days) + "-" +
                  format_number(*m.typical_cycle_max_days) + " days within " +
                  format_number(cfg.cycle_short_days) + "-" + format_number(cfg.cycle_long_days) +
                  ", " + std::to_string(*m.cycles_per_year) + " cycles/year (>= " +
                  std::to_string(cfg.min_cycles_per_year) + "), longest cycle " +
                  format_number(*m.longest_single_cycle_days) + " days (<= " +
                  format_number(cfg.single_cycle_irregular_days) + ").",
              inputs);
}

CriterionResult eval_clinical_ha(const PatientRecord& p, const ThresholdConfig& cfg) {
  const auto& c = p.clinical_signs;
  const auto id = CriterionId::ClinicalHA;
  auto inputs = present_inputs(p, {Field::FerrimanGallwey, Field::Acne, Field::Alopecia});
  const auto cutoff = std::to_string(cfg.fg_cutoff);

  if (c.ferriman_gallwey_score && *c.ferriman_gallwey_score >= cfg.fg_cutoff) {
    return make(id, CriterionStatus::Yes,
                "Hirsutism: Ferriman-Gallwey score " + std::to_string(*c.ferriman_gallwey_score) +
                    " >= " + cutoff + ".",
                inputs);
  }

  std::vector<std::string> secondary;
  if (c.acne && *c.acne != AcneGrade::Absent) {
    secondary.push_back(std::string(to_string(*c.acne)) + " acne");
  }
  if (c.androgenic_alopecia && *c.androgenic_alopecia) secondary.push_back("androgenic alopecia");

  std::vector<std::string> missing;
  if (!c.ferriman_gallwey_score) missing.push_back(path_of(Field::FerrimanGallwey));
  const std::string fg_text =
      c.ferriman_gallwey_score
          ? "Ferriman-Gallwey score " + std::to_string(*c.ferriman_gallwey_score) + " < " + cutoff
          : "Ferriman-Gallwey score not recorded (" + missing_text(missing) + ")";

  if (!secondary.empty()) {
    return make(id, CriterionStatus::Uncertain,
                fg_text + "; only secondary signs (" + join(secondary, ", ") +
                    "), which are weak when isolated and do not establish clinical "
                    "hyperandrogenism.",
                inputs, missing);
  }
  if (c.ferriman_gallwey_score) {
    return make(id, CriterionStatus::No, fg_text + " and no acne or alopecia reported.", inputs);
  }
  return make(id, CriterionStatus::Uncertain,
              "No clinical androgen signs recorded; " + missing_text(missing) + ".", inputs,
              missing);
}

CriterionResult eval_biochemical_ha(const PatientRecord& p, const ThresholdConfig& cfg) {
  const auto id = CriterionId::BiochemicalHA;
  auto inputs = present_inputs(p, {Field::TotalTestosterone, Field::FreeTestosterone,
                                   Field::FreeAndrogenIndex, Field::Dheas});
  std::vector<std::string> elevated, normal, missing;
  bool any_configured = false;
  for (const auto& slot : kLabSlots) {
    if (slot.section != "biochemical") continue;
    const auto& cutoff = cfg.*(slot.member);
    auto v = lab_value(p, slot.field, cutoff);
    if (!cutoff) continue;
    any_configured = true;
    const auto name = std::string(field_info(slot.field).key);
    if (!v) {
      missing.push_back(path_of(slot.field));
    } else if (*v > cutoff->value) {
      elevated.push_back(name + " " + qty(*lab(p, slot.field)) + " > " + qty(*cutoff));
    } else {
      normal.push_back(name + " " + qty(*lab(p, slot.field)) + " <= " + qty(*cutoff));
    }
  }
  if (!elevated.empty()) {
    return make(id, CriterionStatus::Yes, "Androgen excess: " + join(elevated, "; ") + ".", inputs);
  }
  if (!any_configured) {
    return make(id, CriterionStatus::Uncertain, "No androgen marker cutoffs are configured.",
                inputs);
  }
  if (missing.empty()) {
    return make(id, CriterionStatus::No,
                "All androgen markers within limits: " + join(normal, "; ") + ".", inputs);
  }
  std::string reasoning = normal.empty() ? "No androgen markers measured"
                                         : "Measured markers within limits (" +
                                               join(normal, "; ") + ") but panel incomplete";
  return make(id, CriterionStatus::Uncertain, reasoning + "; " + missing_text(missing) + ".",
              inputs, missing);
}

CriterionResult eval_pcom(const PatientRecord& p, const ThresholdConfig& cfg) {
  const auto& im = p.imaging;
  const auto id = CriterionId::PCOM;
  auto inputs = present_inputs(p, {Field::FollicleCountLeft, Field::FollicleCountRight,
                                   Field::OvarianVolumeLeft, Field::OvarianVolumeRight});
  std::vector<std::string> met;
  auto count = [&](const std::optional<int>& v, std::string_view side) {
    if (v && *v >= cfg.follicle_count_per_ovary_min) {
      met.push_back(std::string(side) + " ovary " + std::to_string(*v) + " follicles >= " +
                    std::to_string(cfg.follicle_count_per_ovary_min));
    }
  };
  auto volume = [&](const std::optional<double>& v, std::string_view side) {
    if (v && *v >= cfg.ovarian_volume_ml_min) {
      met.push_back(std::string(side) + " ovarian volume " + format_number(*v) + " mL >= " +
                    format_number(cfg.ovarian_volume_ml_min) + " mL");
    }
  };
  count(im.follicle_count_left, "left");
  count(im.follicle_count_right, "right");
  volume(im.ovarian_volume_left_ml, "left");
  volume(im.ovarian_volume_right_ml, "right");
  if (!met.empty()) {
    return make(id, CriterionStatus::Yes, "Polycystic ovarian morphology: " + join(met, "; ") + ".",
                inputs);
  }
  std::vector<std::string> missing;
  for (Field f : {Field::FollicleCountLeft, Field::FollicleCountRight, Field::OvarianVolumeLeft,
                  Field::OvarianVolumeRight}) {
    if (!has_field(p, f)) missing.push_back(path_of(f));
  }
  if (!missing.empty()) {
    return make(id, CriterionStatus::Uncertain,
                "Insufficient imaging data; " + missing_text(missing) + ".", inputs, missing);
  }
  return make(id, CriterionStatus::No,
              "Follicle counts " + std::to_string(*im.follicle_count_left) + "/" +
                  std::to_string(*im.follicle_count_right) + " below " +
                  std::to_string(cfg.follicle_count_per_ovary_min) + " and volumes " +
                  format_number(*im.ovarian_volume_left_ml) + "/" +
                  format_number(*im.ovarian_volume_right_ml) + " mL below " +
                  format_number(cfg.ovarian_volume_ml_min) + " mL.",
              inputs);
}

std::vector<CriterionResult> eval_exclusions(const PatientRecord& p, const ThresholdConfig& cfg) {
  std::vector<CriterionResult> out;
  auto absent = [&](CriterionId id, Field f, std::string_view what) {
    std::vector<std::string> missing{path_of(f)};
    return make(id, CriterionStatus::Uncertain,
                std::string(what) + " cannot be excluded; " + missing_text(missing) + ".", {},
                missing);
  };

  if (auto v = lab_value(p, Field::Ohp17, cfg.ohp17_upper); !v) {
    out.push_back(absent(CriterionId::ExclusionNCCAH, Field::Ohp17, "NCCAH"));
  } else if (*v > cfg.ohp17_upper->value) {
    out.push_back(make(CriterionId::ExclusionNCCAH, CriterionStatus::Yes,
                       "NCCAH suspected: 17-OHP " + qty(*p.biochemistry.ohp_17) + " > " +
                           qty(*cfg.ohp17_upper) + ".",
                       {path_of(Field::Ohp17)}));
  } else {
    out.push_back(make(CriterionId::ExclusionNCCAH, CriterionStatus::No,
                       "17-OHP " + qty(*p.biochemistry.ohp_17) + " <= " + qty(*cfg.ohp17_upper) +
                           "; NCCAH not suggested.",
                       {path_of(Field::Ohp17)}));
  }

  auto tsh_lo = lab_value(p, Field::Tsh, cfg.tsh_lower);
  auto tsh_hi = lab_value(p, Field::Tsh, cfg.tsh_upper);
  if (!tsh_lo || !tsh_hi) {
    out.push_back(absent(CriterionId::ExclusionThyroid, Field::Tsh, "Thyroid dysfunction"));
  } else {
    const auto& tsh = *p.biochemistry.tsh;
    const auto range = "[" + format_number(cfg.tsh_lower->value) + ", " +
                       format_number(cfg.tsh_upper->value) + "] " + cfg.tsh_upper->unit;
    if (tsh.value < cfg.tsh_lower->value || tsh.value > cfg.tsh_upper->value) {
      out.push_back(make(CriterionId::ExclusionThyroid, CriterionStatus::Yes,
                         "Thyroid dysfunction suspected: TSH " + qty(tsh) + " outside " + range + ".",
                         {path_of(Field::Tsh)}));
    } else {
      out.push_back(make(CriterionId::ExclusionThyroid, CriterionStatus::No,
                         "TSH " + qty(tsh) + " within " + range + ".", {path_of(Field::Tsh)}));
    }
  }

  if (auto v = lab_value(p, Field::Prolactin, cfg.prolactin_upper); !v) {
    out.push_back(absent(CriterionId::ExclusionProlactin, Field::Prolactin, "Hyperprolactinemia"));
  } else if (*v > cfg.prolactin_upper->value) {
    out.push_back(make(CriterionId::ExclusionProlactin, CriterionStatus::Yes,
                       "Hyperprolactinemia suspected: prolactin " + qty(*p.biochemistry.prolactin) +
                           " > " + qty(*cfg.prolactin_upper) + ".",
                       {path_of(Field::Prolactin)}));
  } else {
    out.push_back(make(CriterionId::ExclusionProlactin, CriterionStatus::No,
                       "Prolactin " + qty(*p.biochemistry.prolactin) + " <= " +
                           qty(*cfg.prolactin_upper) + ".",
                       {path_of(Field::Prolactin)}));
  }
  return out;
}

std::vector<Cutoff> configured_cutoffs(const ThresholdConfig& cfg) {
  std::vector<Cutoff> out{
      {Field::CycleMinDays, cfg.cycle_short_days, "cycle_short_days"},
      {Field::CycleMaxDays, cfg.cycle_long_days, "cycle_long_days"},
      {Field::CyclesPerYear, static_cast<double>(cfg.min_cycles_per_year), "min_cycles_per_year"},
      {Field::LongestCycleDays, cfg.single_cycle_irregular_days, "single_cycle_irregular_days"},
      {Field::FerrimanGallwey, static_cast<double>(cfg.fg_cutoff), "fg_cutoff"},
      {Field::FollicleCountLeft, static_cast<double>(cfg.follicle_count_per_ovary_min),
       "follicle_count_per_ovary_min"},
      {Field::FollicleCountRight, static_cast<double>(cfg.follicle_count_per_ovary_min),
       "follicle_count_per_ovary_min"},
      {Field::OvarianVolumeLeft, cfg.ovarian_volume_ml_min, "ovarian_volume_ml_min"},
      {Field::OvarianVolumeRight, cfg.ovarian_volume_ml_min, "ovarian_volume_ml_min"},
  };
  for (const auto& slot : kLabSlots) {
    if (const auto& q = cfg.*(slot.member)) {
      out.push_back({slot.field, q->value, std::string(slot.key)});
    }
  }
  return out;
}

}  // namespace pcosdx
