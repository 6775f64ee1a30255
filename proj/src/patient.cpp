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

#include "pcosdx/patient.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "pcosdx/errors.hpp"

namespace pcosdx {
namespace {

constexpr std::string_view kYears[] = {"years"};
constexpr std::string_view kDays[] = {"days", "d"};
constexpr std::string_view kCyclesPerYear[] = {"cycles/year", "per year"};
constexpr std::string_view kScore[] = {"score"};
constexpr std::string_view kGrade[] = {"grade"};
constexpr std::string_view kFlag[] = {"flag"};
constexpr std::string_view kNmolL[] = {"nmol/L"};
constexpr std::string_view kPgMl[] = {"pg/mL"};
constexpr std::string_view kUmolL[] = {"umol/L", "µmol/L", "μmol/L"};
constexpr std::string_view kPercent[] = {"%"};
constexpr std::string_view kAmh[] = {"ng/mL"};
constexpr std::string_view kTsh[] = {"mIU/L", "uIU/mL", "µIU/mL", "μIU/mL"};
constexpr std::string_view kPrl[] = {"ng/mL", "ug/L", "µg/L", "μg/L"};
constexpr std::string_view kCount[] = {"count"};
constexpr std::string_view kMl[] = {"mL", "cc"};

using K = FieldKind;

const std::array<FieldInfo, 23> kFields{{
    {Field::AgeYears, "age_years", "", "age_years", K::Real, kYears},
    {Field::YearsPostMenarche, "years_post_menarche", "", "years_post_menarche",
     K::Real, kYears},
    {Field::CycleMinDays, "menstrual.typical_cycle_min_days", "menstrual",
     "typical_cycle_min_days", K::Real, kDays},
    {Field::CycleMaxDays, "menstrual.typical_cycle_max_days", "menstrual",
     "typical_cycle_max_days", K::Real, kDays},
    {Field::CyclesPerYear, "menstrual.cycles_per_year", "menstrual",
     "cycles_per_year", K::Count, kCyclesPerYear},
    {Field::LongestCycleDays, "menstrual.longest_single_cycle_days",
     "menstrual", "longest_single_cycle_days", K::Real, kDays},
    {Field::FerrimanGallwey, "clinical_signs.ferriman_gallwey_score",
     "clinical_signs", "ferriman_gallwey_score", K::Count, kScore},
    {Field::Acne, "clinical_signs.acne", "clinical_signs", "acne", K::Grade,
     kGrade},
    {Field::Alopecia, "clinical_signs.androgenic_alopecia", "clinical_signs",
     "androgenic_alopecia", K::Flag, kFlag},
    {Field::TotalTestosterone, "biochemistry.total_testosterone",
     "biochemistry", "total_testosterone", K::Lab, kNmolL},
    {Field::FreeTestosterone, "biochemistry.free_testosterone", "biochemistry",
     "free_testosterone", K::Lab, kPgMl},
    {Field::Dheas, "biochemistry.dheas", "biochemistry", "dheas", K::Lab,
     kUmolL},
    {Field::Shbg, "biochemistry.shbg", "biochemistry", "shbg", K::Lab, kNmolL},
    {Field::FreeAndrogenIndex, "biochemistry.free_androgen_index",
     "biochemistry", "free_androgen_index", K::Lab, kPercent},
    {Field::Amh, "biochemistry.amh", "biochemistry", "amh", K::Lab, kAmh},
    {Field::Ohp17, "biochemistry.ohp_17", "biochemistry", "ohp_17", K::Lab,
     kNmolL},
    {Field::Tsh, "biochemistry.tsh", "biochemistry", "tsh", K::Lab, kTsh},
    {Field::Prolactin, "biochemistry.prolactin", "biochemistry", "prolactin",
     K::Lab, kPrl},
    {Field::FollicleCountLeft, "imaging.follicle_count_left", "imaging",
     "follicle_count_left", K::Count, kCount},
    {Field::FollicleCountRight, "imaging.follicle_count_right", "imaging",
     "follicle_count_right", K::Count, kCount},
    {Field::OvarianVolumeLeft, "imaging.ovarian_volume_left_ml", "imaging",
     "ovarian_volume_left_ml", K::Real, kMl},
    {Field::OvarianVolumeRight, "imaging.ovarian_volume_right_ml", "imaging",
     "ovarian_volume_right_ml", K::Real, kMl},
    {Field::ImagingNarrative, "imaging.narrative", "imaging", "narrative",
     K::Text, {}},
}};

constexpr std::string_view kGroups[] = {"menstrual", "clinical_signs",
                                        "biochemistry", "imaging"};

using FieldRef =
    std::variant<std::optional<double>*, std::optional<int>*,
                 std::optional<AcneGrade>*, std::optional<bool>*,
                 std::optional<Quantity>*, std::optional<std::string>*>;

FieldRef field_ref(PatientRecord& p, Field f) {
  auto& m = p.menstrual;
  auto& c = p.clinical_signs;
  auto& b = p.biochemistry;
  auto& i = p.imaging;
  switch (f) {
    case Field::AgeYears: return &p.age_years;
    case Field::YearsPostMenarche: return &p.years_post_menarche;
    case Field::CycleMinDays: return &m.typical_cycle_min_days;
    case Field::CycleMaxDays: return &m.typical_cycle_max_days;
    case Field::CyclesPerYear: return &m.cycles_per_year;
    case Field::LongestCycleDays: return &m.longest_single_cycle_days;
    case Field::FerrimanGallwey: return &c.ferriman_gallwey_score;
    case Field::Acne: return &c.acne;
    case Field::Alopecia: return &c.androgenic_alopecia;
    case Field::TotalTestosterone: return &b.total_testosterone;
    case Field::FreeTestosterone: return &b.free_testosterone;
    case Field::Dheas: return &b.dheas;
    case Field::Shbg: return &b.shbg;
    case Field::FreeAndrogenIndex: return &b.free_androgen_index;
    case Field::Amh: return &b.amh;
    case Field::Ohp17: return &b.ohp_17;
    case Field::Tsh: return &b.tsh;
    case Field::Prolactin: return &b.prolactin;
    case Field::FollicleCountLeft: return &i.follicle_count_left;
    case Field::FollicleCountRight: return &i.follicle_count_right;
    case Field::OvarianVolumeLeft: return &i.ovarian_volume_left_ml;
    case Field::OvarianVolumeRight: return &i.ovarian_volume_right_ml;
    case Field::ImagingNarrative: return &i.narrative;
  }
  throw Error("unknown field");
}

FieldRef field_ref(const PatientRecord& p, Field f) {
  return field_ref(const_cast<PatientRecord&>(p), f);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

double parse_real(std::string_view path, const std::string& cell) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ValueError(std::string(path) + ": not a number: '" + cell + "'");
  }
  return v;
}

int parse_count(std::string_view path, const std::string& cell) {
  double v = parse_real(path, cell);
  if (v != std::floor(v) || std::fabs(v) > 1e9) {
    throw ValueError(std::string(path) + ": not an integer: '" + cell + "'");
  }
  return static_cast<int>(v);
}

std::optional<bool> parse_flag(std::string_view s) {
  auto v = lower(s);
  if (v == "true" || v == "yes" || v == "y" || v == "1") return true;
  if (v == "false" || v == "no" || v == "n" || v == "0") return false;
  return std::nullopt;
}

[[noreturn]] void schema_fail(std::string msg) {
  throw SchemaError({std::move(msg)});
}

void read_field(PatientRecord& p, const FieldInfo& info, const Json& v) {
  const std::string path(info.path);
  std::visit(
      [&](auto* slot) {
        using Slot = std::decay_t<decltype(*slot)>;
        if constexpr (std::is_same_v<Slot, std::optional<double>>) {
          if (!v.is_number()) schema_fail(path + ": expected a number");
          double d = v.get<double>();
          if (!std::isfinite(d)) schema_fail(path + ": not finite");
          *slot = d;
        } else if constexpr (std::is_same_v<Slot, std::optional<int>>) {
          if (!v.is_number_integer()) schema_fail(path + ": expected an integer");
          *slot = v.get<int>();
        } else if constexpr (std::is_same_v<Slot, std::optional<AcneGrade>>) {
          if (!v.is_string()) schema_fail(path + ": expected a grade string");
          auto g = parse_acne_grade(v.get<std::string>());
          if (!g) schema_fail(path + ": unknown grade '" + v.get<std::string>() + "'");
          *slot = *g;
        } else if constexpr (std::is_same_v<Slot, std::optional<bool>>) {
          if (!v.is_boolean()) schema_fail(path + ": expected a boolean");
          *slot = v.get<bool>();
        } else if constexpr (std::is_same_v<Slot, std::optional<Quantity>>) {
          if (!v.is_object() || v.size() != 2 || !v.contains("value") ||
              !v.contains("unit") || !v["value"].is_number() ||
              !v["unit"].is_string()) {
            schema_fail(path + ": expected {\"value\": number, \"unit\": string}");
          }
          *slot = Quantity{v["value"].get<double>(), v["unit"].get<std::string>()};
        } else {
          if (!v.is_string()) schema_fail(path + ": expected a string");
          *slot = v.get<std::string>();
        }
      },
      field_ref(p, info.field));
}

std::optional<Json> write_field(const PatientRecord& p, const FieldInfo& info) {
  return std::visit(
      [&](auto* slot) -> std::optional<Json> {
        if (!slot->has_value()) return std::nullopt;
        using Slot = std::decay_t<decltype(*slot)>;
        const auto& v = **slot;
        if constexpr (std::is_same_v<Slot, std::optional<AcneGrade>>) {
          return Json(std::string(to_string(v)));
        } else if constexpr (std::is_same_v<Slot, std::optional<Quantity>>) {
          return Json{{"unit", v.unit}, {"value", v.value}};
        } else {
          return Json(v);
        }
      },
      field_ref(p, info.field));
}

void read_groups(PatientRecord& p, const Json& j, bool allow_missing_groups) {
  for (auto group : kGroups) {
    auto it = j.find(std::string(group));
    if (it == j.end()) {
      if (allow_missing_groups) continue;
      schema_fail(std::string(group) + ": missing");
    }
    if (!it->is_object()) schema_fail(std::string(group) + ": expected an object");
    for (const auto& [key, value] : it->items()) {
      const FieldInfo* info = nullptr;
      for (const auto& fi : kFields) {
        if (fi.group == group && fi.key == key) info = &fi;
      }
      if (!info) schema_fail(std::string(group) + "." + key + ": unknown field");
      read_field(p, *info, value);
    }
  }
  for (auto key : {"age_years", "years_post_menarche"}) {
    if (j.contains(key)) read_field(p, field_info(*field_from_path(key)), j[key]);
  }
}

}  // namespace

std::string_view to_string(AcneGrade g) {
  switch (g) {
    case AcneGrade::Absent: return "absent";
    case AcneGrade::Mild: return "mild";
    case AcneGrade::Moderate: return "moderate";
    case AcneGrade::Severe: return "severe";
  }
  return "absent";
}

std::optional<AcneGrade> parse_acne_grade(std::string_view s) {
  auto v = lower(trim(s));
  if (v == "absent" || v == "none" || v == "no" || v == "0") return AcneGrade::Absent;
  if (v == "mild" || v == "1") return AcneGrade::Mild;
  if (v == "moderate" || v == "2") return AcneGrade::Moderate;
  if (v == "severe" || v == "3") return AcneGrade::Severe;
  return std::nullopt;
}

std::span<const FieldInfo> all_fields() { return kFields; }

const FieldInfo& field_info(Field f) {
  for (const auto& fi : kFields) {
    if (fi.field == f) return fi;
  }
  throw Error("unknown field");
}

std::optional<Field> field_from_path(std::string_view path) {
  for (const auto& fi : kFields) {
    if (fi.path == path) return fi.field;
  }
  return std::nullopt;
}

std::optional<std::string> canonical_unit(Field f, std::string_view unit) {
  const auto& info = field_info(f);
  auto u = lower(trim(unit));
  for (auto accepted : info.units) {
    if (lower(accepted) == u) return std::string(info.units.front());
  }
  return std::nullopt;
}

bool has_field(const PatientRecord& p, Field f) {
  return std::visit([](auto* slot) { return slot->has_value(); },
                    field_ref(p, f));
}

void clear_field(PatientRecord& p, Field f) {
  std::visit([](auto* slot) { slot->reset(); }, field_ref(p, f));
}

std::optional<double> numeric_value(const PatientRecord& p, Field f) {
  return std::visit(
      [](auto* slot) -> std::optional<double> {
        using Slot = std::decay_t<decltype(*slot)>;
        if (!slot->has_value()) return std::nullopt;
        if constexpr (std::is_same_v<Slot, std::optional<double>> ||
                      std::is_same_v<Slot, std::optional<int>>) {
          return static_cast<double>(**slot);
        } else if constexpr (std::is_same_v<Slot, std::optional<Quantity>>) {
          return (*slot)->value;
        } else {
          return std::nullopt;
        }
      },
      field_ref(p, f));
}

void set_field_from_text(PatientRecord& p, Field f, std::string_view cell,
                         std::string_view unit) {
  const auto& info = field_info(f);
  const std::string path(info.path);
  std::string canon_unit;
  if (info.kind != FieldKind::Text) {
    auto cu = canonical_unit(f, unit);
    if (!cu) {
      throw UnitError(path + ": unit '" + std::string(unit) +
                      "' is not accepted (expected " +
                      std::string(info.units.front()) + ")");
    }
    canon_unit = *cu;
  }
  auto value = trim(cell);
  if (value.empty()) {
    clear_field(p, f);
    return;
  }
  std::visit(
      [&](auto* slot) {
        using Slot = std::decay_t<decltype(*slot)>;
        if constexpr (std::is_same_v<Slot, std::optional<double>>) {
          *slot = parse_real(path, value);
        } else if constexpr (std::is_same_v<Slot, std::optional<int>>) {
          *slot = parse_count(path, value);
        } else if constexpr (std::is_same_v<Slot, std::optional<AcneGrade>>) {
          auto g = parse_acne_grade(value);
          if (!g) throw ValueError(path + ": unknown acne grade '" + value + "'");
          *slot = *g;
        } else if constexpr (std::is_same_v<Slot, std::optional<bool>>) {
          auto b = parse_flag(value);
          if (!b) throw ValueError(path + ": not a boolean: '" + value + "'");
          *slot = *b;
        } else if constexpr (std::is_same_v<Slot, std::optional<Quantity>>) {
          *slot = Quantity{parse_real(path, value), canon_unit};
        } else {
          *slot = value;
        }
      },
      field_ref(p, f));
}

std::vector<std::string> validate(const PatientRecord& p) {
  std::vector<std::string> out;
  auto nonneg = [&](Field f) {
    auto v = numeric_value(p, f);
    if (v && (*v < 0 || !std::isfinite(*v))) {
      out.push_back(std::string(field_info(f).path) + ": must be non-negative and finite");
    }
  };
  auto positive = [&](Field f) {
    auto v = numeric_value(p, f);
    if (v && (*v <= 0 || !std::isfinite(*v))) {
      out.push_back(std::string(field_info(f).path) + ": must be positive");
    }
  };

  if (p.patient_id.empty()) out.push_back("patient_id: must be non-empty");
  nonneg(Field::AgeYears);
  nonneg(Field::YearsPostMenarche);
  if (p.age_years && p.years_post_menarche &&
      *p.years_post_menarche > *p.age_years) {
    out.push_back("years_post_menarche: exceeds age_years");
  }
  positive(Field::CycleMinDays);
  positive(Field::CycleMaxDays);
  positive(Field::LongestCycleDays);
  nonneg(Field::CyclesPerYear);
  const auto& m = p.menstrual;
  if (m.typical_cycle_min_days && m.typical_cycle_max_days &&
      *m.typical_cycle_min_days > *m.typical_cycle_max_days) {
    out.push_back("menstrual.typical_cycle_min_days: exceeds typical_cycle_max_days");
  }
  if (auto fg = p.clinical_signs.ferriman_gallwey_score; fg && (*fg < 0 || *fg > 36)) {
    out.push_back("clinical_signs.ferriman_gallwey_score: outside 0-36");
  }
  for (const auto& info : kFields) {
    if (info.kind == FieldKind::Lab) {
      auto* q = std::get<std::optional<Quantity>*>(field_ref(p, info.field));
      if (!q->has_value()) continue;
      nonneg(info.field);
      auto cu = canonical_unit(info.field, (*q)->unit);
      if ((*q)->unit.empty()) {
        out.push_back(std::string(info.path) + ": missing unit");
      } else if (!cu) {
        out.push_back(std::string(info.path) + ": unit '" + (*q)->unit + "' not accepted");
      }
    }
  }
  nonneg(Field::FollicleCountLeft);
  nonneg(Field::FollicleCountRight);
  nonneg(Field::OvarianVolumeLeft);
  nonneg(Field::OvarianVolumeRight);
  for (const auto& span : p.provenance) {
    if (span.note_index >= p.free_text_notes.size() || span.begin > span.end ||
        span.end > p.free_text_notes[span.note_index].size()) {
      out.push_back("provenance." + span.field + ": span out of range");
    } else if (!field_from_path(span.field)) {
      out.push_back("provenance." + span.field + ": unknown field");
    }
  }
  if (!p.extensions.is_object()) out.push_back("extensions: must be an object");
  return out;
}

void require_valid(const PatientRecord& p) {
  auto v = validate(p);
  if (!v.empty()) throw SchemaError(std::move(v));
}

Json to_json(const PatientRecord& p) {
  Json j = Json::object();
  j["schema"] = "pcosdx.patient";
  j["version"] = kPatientSchemaVersion;
  j["patient_id"] = p.patient_id;
  for (auto g : kGroups) j[std::string(g)] = Json::object();
  for (const auto& info : kFields) {
    auto v = write_field(p, info);
    if (!v) continue;
    if (info.group.empty()) {
      j[std::string(info.key)] = std::move(*v);
    } else {
      j[std::string(info.group)][std::string(info.key)] = std::move(*v);
    }
  }
  if (!p.free_text_notes.empty()) j["free_text_notes"] = p.free_text_notes;
  if (!p.provenance.empty()) {
    Json prov = Json::array();
    for (const auto& s : p.provenance) {
      prov.push_back({{"field", s.field},
                      {"note_index", s.note_index},
                      {"begin", s.begin},
                      {"end", s.end}});
    }
    j["provenance"] = std::move(prov);
  }
  if (!p.extensions.empty()) j["extensions"] = p.extensions;
  return j;
}

PatientRecord record_from_json(const Json& j) {
  if (!j.is_object()) schema_fail("record: expected a JSON object");
  static const std::vector<std::string> kTop = {
      "schema", "version", "patient_id", "age_years", "years_post_menarche",
      "menstrual", "clinical_signs", "biochemistry", "imaging",
      "free_text_notes", "provenance", "extensions"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kTop.begin(), kTop.end(), key) == kTop.end()) {
      schema_fail(key + ": unknown field (use \"extensions\")");
    }
  }
  if (j.value("schema", "") != "pcosdx.patient") schema_fail("schema: expected \"pcosdx.patient\"");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kPatientSchemaVersion) {
    schema_fail("version: unsupported");
  }
  if (!j.contains("patient_id") || !j["patient_id"].is_string()) {
    schema_fail("patient_id: expected a string");
  }
  PatientRecord p;
  p.patient_id = j["patient_id"].get<std::string>();
  read_groups(p, j, /*allow_missing_groups=*/false);
  if (auto it = j.find("free_text_notes"); it != j.end()) {
    if (!it->is_array()) schema_fail("free_text_notes: expected an array");
    for (const auto& n : *it) {
      if (!n.is_string()) schema_fail("free_text_notes: expected strings");
      p.free_text_notes.push_back(n.get<std::string>());
    }
  }
  if (auto it = j.find("provenance"); it != j.end()) {
    if (!it->is_array()) schema_fail("provenance: expected an array");
    for (const auto& s : *it) {
      try {
        p.provenance.push_back({s.at("field").get<std::string>(),
                                s.at("note_index").get<std::size_t>(),
                                s.at("begin").get<std::size_t>(),
                                s.at("end").get<std::size_t>()});
      } catch (const Json::exception&) {
        schema_fail("provenance: malformed span");
      }
    }
  }
  if (auto it = j.find("extensions"); it != j.end()) p.extensions = *it;
  require_valid(p);
  return p;
}

std::string serialize(const PatientRecord& p) { return canonical_dump(to_json(p)); }

PatientRecord parse_record(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    schema_fail(std::string("record: invalid JSON: ") + e.what());
  }
  return record_from_json(j);
}

Json patient_slice(const PatientRecord& p, std::span<const Field> fields) {
  Json j = Json::object();
  for (Field f : fields) {
    const auto& info = field_info(f);
    auto v = write_field(p, info);
    if (!v) continue;
    if (info.group.empty()) {
      j[std::string(info.key)] = std::move(*v);
    } else {
      j[std::string(info.group)][std::string(info.key)] = std::move(*v);
    }
  }
  return j;
}

PatientRecord record_from_slice(const Json& slice) {
  if (!slice.is_object()) schema_fail("slice: expected a JSON object");
  for (const auto& [key, _] : slice.items()) {
    bool known = key == "age_years" || key == "years_post_menarche";
    for (auto g : kGroups) known = known || key == g;
    if (!known) schema_fail(key + ": unknown slice key");
  }
  PatientRecord p;
  p.patient_id = "slice";
  read_groups(p, slice, /*allow_missing_groups=*/true);
  return p;
}

std::vector<std::string> slice_paths(const Json& slice) {
  std::vector<std::string> out;
  if (!slice.is_object()) return out;
  for (const auto& [key, value] : slice.items()) {
    if (value.is_object() &&
        std::find(std::begin(kGroups), std::end(kGroups), key) != std::end(kGroups)) {
      for (const auto& [inner, _] : value.items()) out.push_back(key + "." + inner);
    } else {
      out.push_back(key);
    }
  }
  return out;
}

SchemaMapping mapping_from_json(const Json& j) {
  if (!j.is_object()) throw MappingError("schema mapping: expected a JSON object");
  SchemaMapping m;
  for (const auto& [key, spec] : j.items()) {
    if (!spec.is_object() || !spec.contains("column") || !spec["column"].is_string()) {
      throw MappingError(key + ": expected {\"column\": string, \"unit\": string}");
    }
    if (key == "patient_id") {
      m.patient_id_column = spec["column"].get<std::string>();
      continue;
    }
    auto f = field_from_path(key);
    if (!f) throw MappingError(key + ": not a patient record field");
    ColumnSpec cs;
    cs.column = spec["column"].get<std::string>();
    cs.unit = spec.value("unit", "");
    if (field_info(*f).kind != FieldKind::Text && !canonical_unit(*f, cs.unit)) {
      throw UnitError(key + ": unit '" + cs.unit + "' is not accepted (expected " +
                      std::string(field_info(*f).units.front()) + ")");
    }
    if (auto it = spec.find("values"); it != spec.end()) {
      for (const auto& [from, to] : it->items()) cs.values[from] = to.get<std::string>();
    }
    m.fields.emplace(*f, std::move(cs));
  }
  if (m.patient_id_column.empty()) throw MappingError("patient_id: column not declared");
  return m;
}

SchemaMapping load_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MappingError("cannot open schema mapping: " + path);
  try {
    return mapping_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw MappingError(path + ": invalid JSON: " + e.what());
  }
}

PatientRecord ingest_structured(const Row& row, const SchemaMapping& mapping) {
  auto cell = [&](const std::string& column) -> const std::string& {
    auto it = row.find(column);
    if (it == row.end()) throw MappingError("column '" + column + "' missing from row");
    return it->second;
  };
  PatientRecord p;
  p.patient_id = trim(cell(mapping.patient_id_column));
  for (const auto& [field, spec] : mapping.fields) {
    std::string value = trim(cell(spec.column));
    if (auto it = spec.values.find(value); it != spec.values.end()) value = it->second;
    set_field_from_text(p, field, value, spec.unit);
  }
  require_valid(p);
  return p;
}

std::vector<PatientRecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<PatientRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

void write_records_jsonl(const std::string& path,
                         std::span<const PatientRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : records) out << serialize(r) << '\n';
}

}  // namespace pcosdx
