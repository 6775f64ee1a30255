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


// Acceptance runner: one PASS/FAIL line per criterion. Criteria 1-9 gate the
// exit status; criterion 10 runs only when a user dataset and remote
// credentials are supplied, and never gates.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pcosdx/backends.hpp"
#include "pcosdx/canonical.hpp"
#include "pcosdx/diagnosis.hpp"
#include "pcosdx/errors.hpp"
#include "pcosdx/evaluation.hpp"
#include "pcosdx/http_transport.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "pcosdx/report.hpp"
#include "pcosdx/workflow.hpp"
#include "support.hpp"

using namespace pcosdx;
using namespace pcosdx::testing;
namespace fs = std::filesystem;
using S = CriterionStatus;
using Steady = std::chrono::steady_clock;

namespace {

const ThresholdConfig& cfg() {
  static const ThresholdConfig c = shipped_thresholds();
  return c;
}

double seconds_since(Steady::time_point t) { return std::chrono::duration<double>(Steady::now() - t).count(); }

// Collects failed expectations; the first few are shown in the result line.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  void note(std::string s) { notes_.push_back(std::move(s)); }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::ostringstream out;
    out << checks_ << " checks";
    for (const auto& n : notes_) out << ", " << n;
    for (std::size_t i = 0; i < failures_.size() && i < 3; ++i) out << "; " << failures_[i];
    if (failures_.size() > 3) out << "; +" << failures_.size() - 3 << " more";
    return out.str();
  }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

struct Combo {
  S cyc, clin, bio, pcom;
};

std::vector<Combo> all_combos() {
  std::vector<Combo> out;
  for (S a : kAllStatuses)
    for (S b : kAllStatuses)
      for (S c : kAllStatuses)
        for (S d : kAllStatuses) out.push_back({a, b, c, d});
  return out;
}

std::string describe(const Combo& c) {
  return std::string(to_string(c.cyc)) + "/" + std::string(to_string(c.clin)) + "/" +
         std::string(to_string(c.bio)) + "/" + std::string(to_string(c.pcom));
}

std::map<std::string, S> script_for(const Combo& c) {
  return {{"Irregular_cycles", c.cyc},   {"Clinical_hyperandrogenism", c.clin},
          {"Biochemical_hyperandrogenism", c.bio}, {"Polycystic_ovarian_morphology", c.pcom},
          {"NCCAH", S::No},               {"Thyroid_dysfunction", S::No},
          {"Hyperprolactinemia", S::No}};
}

WorkflowState run_state(AgentBackend& backend, const PatientRecord& p) {
  WorkflowContext ctx{cfg(), backend, nullptr, {}};
  WorkflowState state;
  run_workflow(p, state, ctx);
  return state;
}

// ---------------------------------------------------------------------------

void gate_equivalence(Check& c) {
  auto start = Steady::now();
  std::size_t n = 0;
  for (const auto& k : all_combos()) {
    c.expect(gate_two_of_three(k.cyc, k.clin, k.bio, k.pcom) == oracle_two_of_three(k.cyc, k.clin, k.bio, k.pcom),
             describe(k));
    ++n;
  }
  double secs = seconds_since(start);
  c.expect(n == 81, "combination count " + std::to_string(n));
  c.expect(secs < 1.0, "runtime " + std::to_string(secs) + " s");
}

void conditional_execution(Check& c) {
  auto p = normal_record();
  for (const auto& k : all_combos()) {
    ScriptedBackend backend(cfg(), script_for(k));
    auto state = run_state(backend, p);
    const auto ctx = describe(k);
    bool step1_candidate = k.cyc == S::Yes && k.clin == S::Yes;
    bool step2_candidate = !step1_candidate && k.cyc == S::Yes && k.bio == S::Yes;
    bool reachable = k.cyc == S::Yes || k.clin == S::Yes || k.bio == S::Yes;
    bool expect_step3 = !step1_candidate && !step2_candidate && reachable;
    bool candidate = oracle_two_of_three(k.cyc, k.clin, k.bio, expect_step3 ? k.pcom : S::No);
    c.expect(backend.calls(Step::CyclesAndClinical) == 1, ctx + " step 1 calls");
    c.expect(backend.calls(Step::Biochemical) == (step1_candidate ? 0u : 1u), ctx + " step 2 calls");
    c.expect(backend.calls(Step::Imaging) == (expect_step3 ? 1u : 0u), ctx + " step 3 calls");
    c.expect(backend.calls(Step::Exclusion) == (candidate ? 1u : 0u), ctx + " exclusion calls");
    c.expect(state.candidate == candidate, ctx + " candidacy");
    bool all_no = k.cyc == S::No && k.clin == S::No && k.bio == S::No;
    if (all_no) {
      c.expect(state.terminated_early, ctx + " early termination");
      c.expect(backend.calls(Step::Imaging) == 0 && backend.calls(Step::Exclusion) == 0, ctx + " calls after termination");
    }
  }
}

void safety_gate(Check& c) {
  std::mt19937_64 rng(1000);
  RuleOracleBackend oracle(cfg());
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    auto p = random_candidate(rng, i, cfg());
    auto state = run_state(oracle, p);
    bool ok = state.candidate && state.outcome && state.outcome->kind == OutcomeKind::Alternative &&
              state.outcome->cause == expected_cause(p, cfg());
    c.expect(ok, p.patient_id + (state.outcome ? " -> " + state.outcome->label() : " -> no outcome"));
    violations += ok ? 0 : 1;
  }
  c.note(std::to_string(violations) + " violations");
}

void rule_boundaries(Check& c) {
  const double eps = 1e-6;
  auto cycles = [&](double lo, double hi) {
    auto p = normal_record();
    p.menstrual.typical_cycle_min_days = lo;
    p.menstrual.typical_cycle_max_days = hi;
    return eval_irregular_cycles(p, cfg()).status;
  };
  c.expect(cycles(20, 30) == S::Yes, "cycle 20");
  c.expect(cycles(21, 30) == S::No, "cycle 21");
  c.expect(cycles(28, 35) == S::No, "cycle 35");
  c.expect(cycles(28, 36) == S::Yes, "cycle 36");
  auto single = [&](double d) {
    auto p = normal_record();
    p.menstrual.longest_single_cycle_days = d;
    return eval_irregular_cycles(p, cfg()).status;
  };
  c.expect(single(90) == S::No, "single cycle 90");
  c.expect(single(91) == S::Yes, "single cycle 91");
  auto fg = [&](int score) {
    auto p = normal_record();
    p.clinical_signs.ferriman_gallwey_score = score;
    return eval_clinical_ha(p, cfg()).status;
  };
  c.expect(fg(1) == S::No, "FG 1");
  c.expect(fg(2) == S::Yes, "FG 2");

  // Androgens: strict upper limits.
  struct Marker {
    const char* name;
    std::optional<Quantity> BiochemPanel::*member;
    std::optional<Quantity> ThresholdConfig::*cutoff;
  };
  const Marker markers[] = {{"total testosterone", &BiochemPanel::total_testosterone, &ThresholdConfig::total_testosterone_upper},
                            {"free testosterone", &BiochemPanel::free_testosterone, &ThresholdConfig::free_testosterone_upper},
                            {"FAI", &BiochemPanel::free_androgen_index, &ThresholdConfig::fai_upper},
                            {"DHEA-S", &BiochemPanel::dheas, &ThresholdConfig::dheas_upper}};
  for (const auto& m : markers) {
    const Quantity cut = *(cfg().*(m.cutoff));
    for (auto [delta, want] : {std::pair{-eps, S::No}, std::pair{0.0, S::No}, std::pair{eps, S::Yes}}) {
      auto p = normal_record();
      p.biochemistry.*(m.member) = Quantity{cut.value + delta, cut.unit};
      c.expect(eval_biochemical_ha(p, cfg()).status == want, std::string(m.name) + " at cutoff" + (delta < 0 ? "-e" : delta > 0 ? "+e" : ""));
    }
  }

  // PCOM: inclusive.
  for (auto [count, want] : {std::pair{19, S::No}, std::pair{20, S::Yes}, std::pair{21, S::Yes}}) {
    auto p = normal_record();
    p.imaging.follicle_count_right = count;
    c.expect(eval_pcom(p, cfg()).status == want, "follicles " + std::to_string(count));
  }
  for (auto [delta, want] : {std::pair{-eps, S::No}, std::pair{0.0, S::Yes}, std::pair{eps, S::Yes}}) {
    auto p = normal_record();
    p.imaging.ovarian_volume_left_ml = cfg().ovarian_volume_ml_min + delta;
    c.expect(eval_pcom(p, cfg()).status == want, "ovarian volume");
  }

  // Exclusions: strict bounds.
  auto exclusion = [&](const PatientRecord& p, CriterionId id) {
    for (const auto& r : eval_exclusions(p, cfg()))
      if (r.id == id) return r.status;
    return S::Uncertain;
  };
  struct Bound {
    const char* name;
    std::optional<Quantity> BiochemPanel::*member;
    double value;
    CriterionId id;
    bool upper;
  };
  const Bound bounds[] = {{"17-OHP", &BiochemPanel::ohp_17, cfg().ohp17_upper->value, CriterionId::ExclusionNCCAH, true},
                          {"TSH high", &BiochemPanel::tsh, cfg().tsh_upper->value, CriterionId::ExclusionThyroid, true},
                          {"TSH low", &BiochemPanel::tsh, cfg().tsh_lower->value, CriterionId::ExclusionThyroid, false},
                          {"prolactin", &BiochemPanel::prolactin, cfg().prolactin_upper->value, CriterionId::ExclusionProlactin, true}};
  for (const auto& b : bounds) {
    for (double delta : {-eps, 0.0, eps}) {
      auto p = normal_record();
      (p.biochemistry.*(b.member))->value = b.value + delta;
      bool outside = b.upper ? delta > 0 : delta < 0;
      c.expect(exclusion(p, b.id) == (outside ? S::Yes : S::No), std::string(b.name) + " boundary");
    }
  }
}

void metrics(Check& c) {
  auto close = [](std::optional<double> v, double want) { return v && std::abs(*v - want) < 1e-9; };
  auto m = metrics_from_counts(45, 5, 10, 40);
  c.expect(close(m.accuracy, 0.85), "accuracy");
  c.expect(close(m.precision, 0.90), "precision");
  c.expect(close(m.recall, 45.0 / 55.0) && std::abs(*m.recall - 0.81818) < 1e-5, "recall");
  c.expect(close(m.f1, 90.0 / 105.0) && std::abs(*m.f1 - 0.85714) < 1e-5, "f1");
  std::mt19937_64 rng(200);
  std::uniform_int_distribution<std::size_t> d(0, 1000);
  for (int i = 0; i < 200; ++i) {
    std::size_t tp = d(rng) + 1, fp = d(rng), fn = d(rng), tn = d(rng);
    double n = double(tp + fp + fn + tn);
    auto r = metrics_from_counts(tp, fp, fn, tn);
    bool ok = close(r.accuracy, double(tp + tn) / n) && close(r.precision, double(tp) / double(tp + fp)) &&
              close(r.recall, double(tp) / double(tp + fn)) && close(r.f1, 2.0 * double(tp) / double(2 * tp + fp + fn));
    c.expect(ok, "tuple " + std::to_string(i));
  }
}

void synthetic_cohort(Check& c) {
  auto cohort = load_cohort_jsonl(data_path("fixtures/cohort60.jsonl"), "label");
  RuleOracleBackend oracle(cfg());
  EvalOptions opts;
  opts.label = "rule";
  auto start = Steady::now();
  auto m = evaluate_cohort(cohort, cfg(), oracle, nullptr, {}, opts);
  double secs = seconds_since(start);
  c.expect(m.total == 60, "cohort size " + std::to_string(m.total));
  c.expect(m.fp + m.fn + m.indeterminate + m.failures == 0, "misclassified cases");
  c.expect(m.accuracy && *m.accuracy == 1.0, "accuracy below 100%");
  c.expect(secs < 10.0, "runtime " + std::to_string(secs) + " s");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f s", secs);
  c.note(buf);
}

void kg_determinism(Check& c) {
  auto ontology = load_ontology(data_path("kg/ontology.json"));
  auto dict = load_dictionary(data_path("kg/dictionary.json"), ontology);
  HashEmbedder embedder;
  RuleOracleBackend backend(cfg(), load_lexicon(data_path("kg/lexicon.json")));
  auto corpus = load_corpus(data_path("corpus"));
  BuildConfig bc;
  auto first = build_graph(corpus, ontology, dict, embedder, backend, bc);
  auto second = build_graph(corpus, ontology, dict, embedder, backend, bc);
  auto bytes = serialize_graph(first.graph);
  c.expect(bytes == serialize_graph(second.graph), "rebuild differs");
  c.expect(bytes == read_text(data_path("kg/kg.json")), "bundled graph differs from a fresh build");

  const auto& g = first.graph;
  for (const auto& e : g.entities) {
    if (e.layer == Layer::Bottom) continue;
    c.expect(!e.source_chunks.empty(), e.entity_id + " has no source");
    for (const auto& s : e.source_chunks) c.expect(g.find_chunk(s) != nullptr, e.entity_id + " -> " + s);
    for (const auto& cit : entity_citations(g, e)) {
      const Chunk* ch = g.find_chunk(cit.chunk_id);
      c.expect(ch && ch->text.find(cit.text_excerpt) != std::string::npos, e.entity_id + " citation");
    }
  }
  for (const auto& r : g.relations) {
    c.expect(g.find_chunk(r.source_chunk) != nullptr, "relation chunk " + r.source_chunk);
    c.expect(g.find_entity(r.head) && g.find_entity(r.tail), "relation endpoint " + r.head + " -> " + r.tail);
  }

  std::map<std::string, std::size_t> owner;
  for (std::size_t i = 0; i < dict.entries.size(); ++i) {
    std::vector<std::string> names{dict.entries[i].canonical_name};
    names.insert(names.end(), dict.entries[i].aliases.begin(), dict.entries[i].aliases.end());
    for (const auto& n : names) {
      auto [it, inserted] = owner.emplace(normalize_name(n), i);
      c.expect(inserted || it->second == i, "alias " + n + " maps to two entries");
      c.expect(lookup_alias(dict, n) == i, "alias lookup " + n);
    }
  }

  RetrievalIndex index(g, embedder);
  for (const auto& q : Json::parse(read_text(data_path("golden/retrieval.json")))) {
    auto query = q.at("query").get<std::string>();
    auto r = index.retrieve(query, q.at("k").get<std::size_t>());
    c.expect(r.items.size() == q.at("items").size(), query + " size");
    for (std::size_t i = 0; i < r.items.size() && i < q.at("items").size(); ++i) {
      c.expect(r.items[i].entity_id == q["items"][i].at("entity_id").get<std::string>(), query + " #" + std::to_string(i));
      c.expect(std::abs(r.items[i].score - q["items"][i].at("score").get<double>()) < 1e-9, query + " score");
    }
  }
}

void replay_determinism(Check& c) {
  auto dir = fs::temp_directory_path() / "pcosdx_acceptance_replay";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cassette = (dir / "case1.jsonl").string();
  auto graph = load_graph(data_path("kg/kg.json"));
  HashEmbedder embedder;
  RetrievalIndex index(graph, embedder);
  auto p = fixture_record("fixtures/case1.json");
  auto diagnose = [&](AgentBackend& b, const PatientRecord& rec) {
    WorkflowOptions o;
    o.session_id = "s-acceptance";
    WorkflowContext ctx{cfg(), b, &index, o};
    return canonical_dump(to_json(run_diagnosis(rec, ctx).report));
  };

  RuleOracleBackend oracle(cfg());
  auto counted = std::make_shared<CountingBackend>(oracle);
  std::string recorded;
  {
    RecordingBackend recorder(counted, cassette);
    recorded = diagnose(recorder, p);
  }
  auto before = egress_count();
  ReplayBackend r1(cassette), r2(cassette);
  auto a = diagnose(r1, p);
  auto b = diagnose(r2, p);
  c.expect(a == b, "replays differ");
  c.expect(a == recorded, "replay differs from the recorded session");

  // Single-character perturbations of a recorded prompt.
  auto bare = (dir / "step1.jsonl").string();
  auto spec = assemble_prompt(AgentRole::GynecologicalEndocrine, Step::CyclesAndClinical,
                              patient_slice(p, step_fields(Step::CyclesAndClinical)), cfg(), {});
  {
    RecordingBackend recorder(std::shared_ptr<AgentBackend>(&oracle, [](AgentBackend*) {}), bare);
    recorder.complete(spec);
  }
  ReplayBackend r4(bare);
  c.expect(!r4.complete(spec).text.empty(), "recorded prompt not served");
  std::size_t misses = 0, probes = 0;
  for (std::size_t i = 0; i < spec.task_input.size(); i += 5) {
    auto changed = spec;
    changed.task_input[i] = changed.task_input[i] == 'x' ? 'y' : 'x';
    ++probes;
    try {
      r4.complete(changed);
    } catch (const CassetteMiss&) {
      ++misses;
    }
  }
  c.expect(misses == probes, std::to_string(probes - misses) + " perturbations served");
  auto changed_record = p;
  changed_record.menstrual.typical_cycle_max_days = *changed_record.menstrual.typical_cycle_max_days + 1;
  bool miss = false;
  try {
    ReplayBackend r5(cassette);
    diagnose(r5, changed_record);
  } catch (const DiagnosisError& e) {
    miss = e.cassette_miss();
  }
  c.expect(miss, "changed record did not surface a cassette miss");
  c.expect(egress_count() == before, "network egress during replay");
  fs::remove_all(dir);
}

// Sums the usage it hands out, independently of the engine's own log.
class TallyBackend : public AgentBackend {
 public:
  explicit TallyBackend(AgentBackend& inner) : inner_(inner) {}
  BackendInfo info() const override { return inner_.info(); }
  Completion complete(const PromptSpec& prompt) override {
    Completion c = inner_.complete(prompt);
    tally += c.usage;
    return c;
  }
  Usage tally;

 private:
  AgentBackend& inner_;
};

void cost_accounting(Check& c) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    std::map<std::string, S> script;
    for (const char* k : {"Irregular_cycles", "Clinical_hyperandrogenism", "Biochemical_hyperandrogenism",
                          "Polycystic_ovarian_morphology", "NCCAH", "Thyroid_dysfunction", "Hyperprolactinemia"})
      script[k] = kAllStatuses[rng() % 3];
    ScriptedBackend scripted(cfg(), script);
    TallyBackend tally(scripted);
    WorkflowContext ctx{cfg(), tally, nullptr, {}};
    auto run = run_diagnosis(normal_record("cost" + std::to_string(i)), ctx);
    Usage logged;
    for (const auto& e : run.state.events)
      if (e.event == "agent_call") logged += e.usage;
    const auto& cost = run.report.cost;
    const auto id = "case " + std::to_string(i);
    c.expect(logged == tally.tally, id + " logged usage");
    c.expect(cost.prompt_tokens == logged.prompt_tokens, id + " prompt tokens");
    c.expect(cost.completion_tokens == logged.completion_tokens, id + " completion tokens");
    c.expect(cost.total_tokens == logged.total_tokens(), id + " total tokens");
    c.expect(cost.wall_seconds == logged.wall_seconds, id + " latency");
  }
}

// Returns false when the inputs are absent.
bool user_rerun(Check& c) {
  const char* csv = std::getenv("PCOSDX_ACCEPT_CSV");
  const char* schema = std::getenv("PCOSDX_ACCEPT_SCHEMA");
  const char* key = std::getenv("MAPIS_API_KEY");
  if (!csv || !*csv || !schema || !*schema || !key || !*key) return false;
  const char* label_env = std::getenv("PCOSDX_ACCEPT_LABEL");
  std::string label_column = label_env && *label_env ? label_env : "label";
  auto cohort = load_cohort_csv(csv, load_mapping(schema), label_column);
  RemoteBackend remote(remote_config_from_env(), std::make_shared<HttplibTransport>());
  EvalOptions opts;
  opts.label = remote.info().id;
  auto m = evaluate_cohort(cohort, cfg(), remote, nullptr, {}, opts);
  std::printf("%s", compare_runs({m}).c_str());
  c.expect(m.total == cohort.records.size(), "case count");
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> gating = {
      {1, "gate oracle equivalence", gate_equivalence},
      {2, "conditional execution", conditional_execution},
      {3, "safety gate", safety_gate},
      {4, "rule boundaries", rule_boundaries},
      {5, "metrics correctness", metrics},
      {6, "synthetic cohort", synthetic_cohort},
      {7, "kg determinism and provenance", kg_determinism},
      {8, "replay determinism", replay_determinism},
      {9, "cost accounting", cost_accounting},
  };
  int failed = 0;
  for (const auto& cr : gating) {
    Check c;
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %d %s (%s)\n", c.ok() ? "PASS" : "FAIL", cr.id, cr.name, c.summary().c_str());
    std::fflush(stdout);
    failed += c.ok() ? 0 : 1;
  }

  Check c10;
  bool ran = false;
  try {
    ran = user_rerun(c10);
  } catch (const std::exception& e) {
    ran = true;
    c10.expect(false, std::string("exception: ") + e.what());
  }
  if (!ran)
    std::printf("SKIP 10 user dataset rerun (set PCOSDX_ACCEPT_CSV, PCOSDX_ACCEPT_SCHEMA and MAPIS_* to run; non-gating)\n");
  else
    std::printf("%s 10 user dataset rerun (%s; non-gating)\n", c10.ok() ? "PASS" : "FAIL", c10.summary().c_str());
  return failed == 0 ? 0 : 1;
}
