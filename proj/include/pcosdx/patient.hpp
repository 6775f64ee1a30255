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

// Normalized patient record and its canonical JSON form.
//
// Every numeric field is either present-and-finite or absent (std::nullopt);
// there are no sentinel values. The canonical JSON document omits absent
// fields entirely, so "absent" and "zero" never collide.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcosdx/canonical.hpp"

namespace pcosdx {

inline constexpr int kPatientSchemaVersion = 1;

struct Quantity {
  double value = 0.0;
  std::string unit;
  bool operator==(const Quantity&) const = default;
};

enum class AcneGrade { Absent, Mild, Moderate, Severe };

std::string_view to_string(AcneGrade g);
std::optional<AcneGrade> parse_acne_grade(std::string_view s);

struct MenstrualHistory {
  std::optional<double> typical_cycle_min_days;
  std::optional<double> typical_cycle_max_days;
  std::optional<int> cycles_per_year;
  std::optional<double> longest_single_cycle_days;
  bool operator==(const MenstrualHistory&) const = default;
};

struct ClinicalSigns {
  std::optional<int> ferriman_gallwey_score;
  std::optional<AcneGrade> acne;  // nullopt = unknown
  std::optional<bool> androgenic_alopecia;
  bool operator==(const ClinicalSigns&) const = default;
};

struct BiochemPanel {
  std::optional<Quantity> total_testosterone;
  std::optional<Quantity> free_testosterone;
  std::optional<Quantity> dheas;
  std::optional<Quantity> shbg;
  std::optional<Quantity> free_androgen_index;
  std::optional<Quantity> amh;
  std::optional<Quantity> ohp_17;
  std::optional<Quantity> tsh;
  std::optional<Quantity> prolactin;
  bool operator==(const BiochemPanel&) const = default;
};

struct ImagingFindings {
  std::optional<int> follicle_count_left;
  std::optional<int> follicle_count_right;
  std::optional<double> ovarian_volume_left_ml;
  std::optional<double> ovarian_volume_right_ml;
  std::optional<std::string> narrative;
  bool operator==(const ImagingFindings&) const = default;
};

// Where a populated field came from when the record was extracted from
// free text: byte offsets [begin, end) into free_text_notes[note_index].
struct TextSpan {
  std::string field;
  std::size_t note_index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TextSpan&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  std::optional<double> age_years;
  std::optional<double> years_post_menarche;
  MenstrualHistory menstrual;
  ClinicalSigns clinical_signs;
  BiochemPanel biochemistry;
  ImagingFindings imaging;
  std::vector<std::string> free_text_notes;
  std::vector<TextSpan> provenance;
  // Unknown top-level data carried through untouched; the workflow ignores it.
  Json extensions = Json::object();

  bool operator==(const PatientRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Field registry. Each diagnostic field has a dotted path (the key used in
// schema mappings, slices and provenance) and a per-field unit allowlist.

enum class Field {
  AgeYears,
  YearsPostMenarche,
  CycleMinDays,
  CycleMaxDays,
  CyclesPerYear,
  LongestCycleDays,
  FerrimanGallwey,
  Acne,
  Alopecia,
  TotalTestosterone,
  FreeTestosterone,
  Dheas,
  Shbg,
  FreeAndrogenIndex,
  Amh,
  Ohp17,
  Tsh,
  Prolactin,
  FollicleCountLeft,
  FollicleCountRight,
  OvarianVolumeLeft,
  OvarianVolumeRight,
  ImagingNarrative,
};

enum class FieldKind { Real, Count, Grade, Flag, Lab, Text };

struct FieldInfo {
  Field field;
  std::string_view path;   // "menstrual.typical_cycle_min_days"
  std::string_view group;  // "" for top level
  std::string_view key;
  FieldKind kind;
  // Accepted unit spellings; the first is canonical. Empty for Text.
  std::span<const std::string_view> units;
};

std::span<const FieldInfo> all_fields();
const FieldInfo& field_info(Field f);
std::optional<Field> field_from_path(std::string_view path);

// Maps an accepted spelling ("ug/L", "µmol/L") onto the field's canonical
// unit. Spelling only; values are never rescaled.
std::optional<std::string> canonical_unit(Field f, std::string_view unit);

bool has_field(const PatientRecord& p, Field f);
void clear_field(PatientRecord& p, Field f);

// Numeric view of a field (labs return their value). nullopt when absent or
// non-numeric (acne, alopecia, narrative).
std::optional<double> numeric_value(const PatientRecord& p, Field f);

// Sets a field from a text cell. Blank cells clear the field. Throws
// ValueError on unparsable input and UnitError on a unit outside the
// allowlist.
void set_field_from_text(PatientRecord& p, Field f, std::string_view cell,
                         std::string_view unit);

// ---------------------------------------------------------------------------
// Validation and canonical JSON.

std::vector<std::string> validate(const PatientRecord& p);
// Throws SchemaError listing every violation.
void require_valid(const PatientRecord& p);

Json to_json(const PatientRecord& p);
// Throws SchemaError for malformed documents or invariant violations.
PatientRecord record_from_json(const Json& j);

std::string serialize(const PatientRecord& p);
PatientRecord parse_record(std::string_view text);

// JSON object holding only the listed fields, in the record's group layout.
Json patient_slice(const PatientRecord& p, std::span<const Field> fields);
// Inverse of patient_slice: a record populated from a slice document. The
// patient id is optional here. Throws SchemaError on malformed slices.
PatientRecord record_from_slice(const Json& slice);
// Paths of every field present in a slice document.
std::vector<std::string> slice_paths(const Json& slice);

// ---------------------------------------------------------------------------
// Structured ingestion.

struct ColumnSpec {
  std::string column;
  std::string unit;
  // Optional recoding of raw cell values before parsing, e.g. {"1": "true"}.
  std::map<std::string, std::string> values;
};

struct SchemaMapping {
  std::string patient_id_column;
  std::map<Field, ColumnSpec> fields;
};

// {"patient_id": {"column": ...}, "<field path>": {"column", "unit",
// "values"?}}. Throws MappingError on unknown field paths and UnitError on
// units outside the allowlist.
SchemaMapping mapping_from_json(const Json& j);
SchemaMapping load_mapping(const std::string& path);

using Row = std::map<std::string, std::string>;

// Throws MappingError when a declared column is missing from the row,
// ValueError on non-numeric cells, SchemaError when the resulting record
// violates an invariant.
PatientRecord ingest_structured(const Row& row, const SchemaMapping& mapping);

// Cohort files: JSON-lines, one canonical record per line.
std::vector<PatientRecord> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::string& path,
                         std::span<const PatientRecord> records);

}  // namespace pcosdx
