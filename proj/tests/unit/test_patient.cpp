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


#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "pcosdx/backends.hpp"
#include "pcosdx/csv.hpp"
#include "pcosdx/errors.hpp"
#include "pcosdx/patient.hpp"
#include "support.hpp"

using namespace pcosdx;
using pcosdx::testing::data_path;
using pcosdx::testing::normal_record;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(PatientRecord, CanonicalFormIsAFixedPoint) {
  std::vector<std::string> inputs{slurp(data_path("fixtures/case1.json"))};
  std::istringstream cohort(slurp(data_path("fixtures/cohort60.jsonl")));
  for (std::string line; std::getline(cohort, line);) inputs.push_back(line);
  ASSERT_EQ(inputs.size(), 61u);
  for (const auto& text : inputs) {
    std::string once = serialize(parse_record(text));
    EXPECT_EQ(serialize(parse_record(once)), once);
  }
}

TEST(PatientRecord, RoundTripPreservesEveryField) {
  auto p = normal_record("rt");
  p.imaging.narrative = "both ovaries normal";
  p.free_text_notes = {"note one"};
  p.provenance = {{"age_years", 0, 0, 4}};
  p.extensions = {{"site", "A"}};
  EXPECT_EQ(parse_record(serialize(p)), p);
}

TEST(PatientRecord, AbsentIsNotZero) {
  auto absent = normal_record();
  absent.biochemistry.tsh.reset();
  auto zero = normal_record();
  zero.biochemistry.tsh = Quantity{0, "mIU/L"};
  EXPECT_NE(absent, zero);
  EXPECT_NE(serialize(absent), serialize(zero));
  EXPECT_FALSE(has_field(absent, Field::Tsh));
  EXPECT_TRUE(has_field(zero, Field::Tsh));
}

TEST(PatientRecord, UnknownTopLevelKeyIsASchemaError) {
  auto j = to_json(normal_record());
  j["bmi"] = 24;
  EXPECT_THROW(record_from_json(j), SchemaError);
}

TEST(PatientRecord, LabUnitOutsideAllowlistIsRejected) {
  auto j = to_json(normal_record());
  j["biochemistry"]["total_testosterone"] = {{"value", 80}, {"unit", "ng/dL"}};
  try {
    record_from_json(j);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    ASSERT_FALSE(e.violations().empty());
    EXPECT_NE(e.violations().front().find("total_testosterone"), std::string::npos);
  }
}

TEST(PatientRecord, ValidationReportsFieldLevelViolations) {
  auto p = normal_record();
  p.years_post_menarche = 40;
  p.clinical_signs.ferriman_gallwey_score = -1;
  auto v = validate(p);
  EXPECT_GE(v.size(), 2u);
  EXPECT_THROW(require_valid(p), SchemaError);
  EXPECT_TRUE(validate(normal_record()).empty());
}

TEST(PatientRecord, SliceCarriesOnlyRequestedFields) {
  auto p = normal_record();
  const Field fields[] = {Field::Tsh, Field::CycleMaxDays};
  Json s = patient_slice(p, fields);
  auto paths = slice_paths(s);
  EXPECT_EQ(paths, (std::vector<std::string>{"biochemistry.tsh", "menstrual.typical_cycle_max_days"}));
  auto back = record_from_slice(s);
  EXPECT_TRUE(has_field(back, Field::Tsh));
  EXPECT_FALSE(has_field(back, Field::Prolactin));
}

TEST(SchemaMapping, PmolAmhIsNotSilentlyRelabelled) {
  Json m = {{"patient_id", {{"column", "id"}}}, {"biochemistry.amh", {{"column", "amh"}, {"unit", "pmol/L"}}}};
  EXPECT_THROW(mapping_from_json(m), UnitError);
}

TEST(SchemaMapping, UnknownFieldIsAMappingError) {
  Json m = {{"patient_id", {{"column", "id"}}}, {"biochemistry.insulin", {{"column", "x"}, {"unit", "pmol/L"}}}};
  EXPECT_THROW(mapping_from_json(m), MappingError);
}

TEST(SchemaMapping, FixtureRowsYieldRecordsOrTypedErrors) {
  auto mapping = load_mapping(data_path("fixtures/sample10_mapping.json"));
  auto rows = read_csv(data_path("fixtures/sample10.csv"));
  ASSERT_EQ(rows.size(), 10u);
  std::size_t ok = 0, typed = 0;
  for (const auto& row : rows) {
    try {
      auto p = ingest_structured(row, mapping);
      EXPECT_TRUE(validate(p).empty());
      ++ok;
    } catch (const Error&) {
      ++typed;
    }
  }
  EXPECT_EQ(ok, 9u);
  EXPECT_EQ(typed, 1u);
}

TEST(SchemaMapping, ValueMapsAndBlankCellsApply) {
  auto mapping = load_mapping(data_path("fixtures/sample10_mapping.json"));
  auto rows = read_csv(data_path("fixtures/sample10.csv"));
  auto k1 = ingest_structured(rows[0], mapping);
  EXPECT_EQ(k1.patient_id, "K001");
  EXPECT_EQ(k1.clinical_signs.androgenic_alopecia, false);
  EXPECT_EQ(k1.clinical_signs.acne, AcneGrade::Mild);
  EXPECT_EQ(k1.imaging.narrative, "irregular since menarche, \"long gaps\"");
  auto k3 = ingest_structured(rows[2], mapping);
  EXPECT_FALSE(k3.menstrual.typical_cycle_min_days.has_value());
  EXPECT_FALSE(has_field(k3, Field::Tsh));
  EXPECT_EQ(k3.clinical_signs.androgenic_alopecia, true);
}

TEST(Csv, QuotedFieldsAndPadding) {
  auto rows = parse_csv("a,b,c\n\"x,1\",\"he said \"\"hi\"\"\"\nlast,\"multi\nline\",3\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("a"), "x,1");
  EXPECT_EQ(rows[0].at("b"), "he said \"hi\"");
  EXPECT_EQ(rows[0].at("c"), "");
  EXPECT_EQ(rows[1].at("b"), "multi\nline");
  EXPECT_THROW(parse_csv("a\n1,2\n"), ValueError);
}

TEST(ExtractFromText, CycleRangeAndHirsutismScore) {
  RuleOracleBackend backend(pcosdx::testing::shipped_thresholds());
  std::string note = "cycles every 24–40 days, FG score 6";
  auto p = extract_from_text(note, backend, "n1");
  EXPECT_EQ(p.menstrual.typical_cycle_min_days, 24.0);
  EXPECT_EQ(p.menstrual.typical_cycle_max_days, 40.0);
  EXPECT_EQ(p.clinical_signs.ferriman_gallwey_score, 6);
  // Every populated field traces back to a span of the note.
  std::size_t populated = 0;
  for (const auto& info : all_fields())
    if (has_field(p, info.field)) ++populated;
  EXPECT_EQ(p.provenance.size(), populated);
  for (const auto& span : p.provenance) {
    EXPECT_LT(span.begin, span.end);
    EXPECT_LE(span.end, note.size());
  }
}

TEST(ExtractFromText, NotesWithoutDiagnosticContentYieldNoFields) {
  RuleOracleBackend backend(pcosdx::testing::shipped_thresholds());
  for (std::string note : {"", "patient anxious"}) {
    auto p = extract_from_text(note, backend, "n2");
    for (const auto& info : all_fields()) EXPECT_FALSE(has_field(p, info.field)) << info.path;
    EXPECT_TRUE(p.provenance.empty());
  }
}

TEST(ExtractFromText, LabWithoutAcceptedUnitIsLeftAbsent) {
  RuleOracleBackend backend(pcosdx::testing::shipped_thresholds());
  auto p = extract_from_text("Total testosterone 80 ng/dL. TSH 2.1 mIU/L.", backend, "n3");
  EXPECT_FALSE(has_field(p, Field::TotalTestosterone));
  ASSERT_TRUE(p.biochemistry.tsh.has_value());
  EXPECT_DOUBLE_EQ(p.biochemistry.tsh->value, 2.1);
}
