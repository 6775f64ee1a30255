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

#include "pcosdx/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "pcosdx/csv.hpp"
#include "pcosdx/errors.hpp"

namespace pcosdx {

void LabeledCohort::validate() const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.patient_id).second) throw Error("cohort: duplicate patient id " + r.patient_id);
    if (!labels.count(r.patient_id)) throw Error("cohort: no label for " + r.patient_id);
  }
}

bool parse_label(std::string_view cell) {
  std::string v;
  for (char c : cell)
    if (!std::isspace(static_cast<unsigned char>(c))) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const char* s : {"1", "yes", "y", "true", "positive", "pcos"})
    if (v == s) return true;
  for (const char* s : {"0", "no", "n", "false", "negative", "control"})
    if (v == s) return false;
  throw ValueError("label: cannot read '" + std::string(cell) + "' as positive or negative");
}

LabeledCohort load_cohort_csv(const std::string& path, const SchemaMapping& mapping,
                              const std::string& label_column) {
  LabeledCohort c;
  c.provenance = path;
  auto rows = read_csv(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    auto it = row.find(label_column);
    if (it == row.end()) throw MappingError("label column '" + label_column + "' not found in " + path);
    auto rec = ingest_structured(row, mapping);
    c.labels[rec.patient_id] = parse_label(it->second);
    c.records.push_back(std::move(rec));
  }
  c.validate();
  return c;
}

LabeledCohort load_cohort_jsonl(const std::string& path, const std::string& label_column) {
  LabeledCohort c;
  c.provenance = path;
  c.records = read_records_jsonl(path);
  for (const auto& r : c.records) {
    if (!r.extensions.contains(label_column))
      throw MappingError(r.patient_id + ": no '" + label_column + "' in extensions");
    const auto& v = r.extensions[label_column];
    c.labels[r.patient_id] = parse_label(v.is_string() ? v.get<std::string>() : v.dump());
  }
  c.validate();
  return c;
}

void compute_ratios(MetricsReport& m) {
  auto ratio = [](double num, double den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return num / den;
  };
  double tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp);
  double fn = static_cast<double>(m.fn), tn = static_cast<double>(m.tn);
  m.accuracy = ratio(tp + tn, tp + fp + fn + tn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1.reset();
  if (m.precision && m.recall) m.f1 = ratio(2 * *m.precision * *m.recall, *m.precision + *m.recall);
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.total = tp + fp + fn + tn;
  compute_ratios(m);
  return m;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

Json to_json(const MetricsReport& m) {
  return {{"label", m.label},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"indeterminate", m.indeterminate},
          {"failures", m.failures},
          {"total", m.total},
          {"outcome_counts", m.outcome_counts},
          {"accuracy", opt(m.accuracy)},
          {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"f1", opt(m.f1)},
          {"mean_tokens", m.mean_tokens},
          {"mean_wall_seconds", m.mean_wall_seconds}};
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport m;
  try {
    m.label = j.at("label").get<std::string>();
    m.tp = j.at("tp").get<std::size_t>();
    m.fp = j.at("fp").get<std::size_t>();
    m.fn = j.at("fn").get<std::size_t>();
    m.tn = j.at("tn").get<std::size_t>();
    m.indeterminate = j.at("indeterminate").get<std::size_t>();
    m.failures = j.at("failures").get<std::size_t>();
    m.total = j.at("total").get<std::size_t>();
    m.outcome_counts = j.at("outcome_counts").get<std::map<std::string, std::size_t>>();
    m.accuracy = opt_from(j.at("accuracy"));
    m.precision = opt_from(j.at("precision"));
    m.recall = opt_from(j.at("recall"));
    m.f1 = opt_from(j.at("f1"));
    m.mean_tokens = j.at("mean_tokens").get<double>();
    m.mean_wall_seconds = j.at("mean_wall_seconds").get<double>();
  } catch (const Json::exception& e) {
    throw SchemaError({std::string("metrics: ") + e.what()});
  }
  return m;
}

namespace {

struct CaseResult {
  bool done = false;
  bool failed = false;
  std::string error;
  std::string session_id;
  std::optional<DiagnosisOutcome> outcome;
  Usage usage;
};

}  // namespace

MetricsReport evaluate_cohort(const LabeledCohort& cohort, const ThresholdConfig& cfg, AgentBackend& backend,
                              const RetrievalIndex* index, const WorkflowOptions& options,
                              const EvalOptions& eval) {
  cohort.validate();
  const std::size_t n = cohort.records.size();
  std::vector<CaseResult> results(n);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  std::atomic<bool> abort{false};
  const double ceiling = eval.failure_ceiling * static_cast<double>(n);

  auto worker = [&] {
    for (;;) {
      if (abort) return;
      std::size_t i = next++;
      if (i >= n) return;
      const auto& rec = cohort.records[i];
      WorkflowContext ctx{cfg, backend, index, options};
      ctx.options.clock = std::make_shared<LogicalClock>();
      ctx.options.audit_sink = nullptr;
      ctx.options.session_id.clear();
      auto& out = results[i];
      try {
        auto run = run_diagnosis(rec, ctx);
        out.session_id = run.state.session_id;
        out.outcome = run.state.outcome;
        out.usage = logged_usage(run.state);
      } catch (const DiagnosisError& e) {
        out.failed = true;
        out.error = e.what();
        out.session_id = e.state().session_id;
      } catch (const Error& e) {
        out.failed = true;
        out.error = e.what();
      }
      out.done = true;
      if (out.failed) {
        spdlog::warn("case {} failed: {}", rec.patient_id, out.error);
        if (static_cast<double>(++failures) > ceiling) abort = true;
      }
    }
  };
  std::size_t jobs = std::max<std::size_t>(1, std::min(eval.jobs, std::max<std::size_t>(n, 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (abort)
    throw EvaluationAborted("evaluation aborted: " + std::to_string(failures.load()) + " failed cases exceed " +
                            std::to_string(eval.failure_ceiling * 100) + "% of " + std::to_string(n));

  MetricsReport m;
  m.label = eval.label;
  m.total = n;
  double tokens = 0, wall = 0;
  std::size_t costed = 0;
  Json lines = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = cohort.records[i];
    const auto& r = results[i];
    bool positive = cohort.labels.at(rec.patient_id);
    Json line = {{"patient_id", rec.patient_id}, {"label", positive}, {"session_id", r.session_id}};
    if (r.failed) {
      ++m.failures;
      ++m.outcome_counts["FAILED"];
      line["outcome"] = "FAILED";
      line["predicted"] = nullptr;
      line["error"] = r.error;
    } else {
      const auto& o = *r.outcome;
      ++m.outcome_counts[std::string(o.kind_name())];
      line["outcome"] = o.label();
      tokens += static_cast<double>(r.usage.total_tokens());
      wall += r.usage.wall_seconds;
      ++costed;
      line["total_tokens"] = r.usage.total_tokens();
      line["wall_seconds"] = r.usage.wall_seconds;
      if (o.kind == OutcomeKind::Indeterminate) {
        ++m.indeterminate;
        line["predicted"] = nullptr;
      } else {
        bool predicted = o.kind == OutcomeKind::Confirmed;
        line["predicted"] = predicted;
        if (predicted && positive) ++m.tp;
        else if (predicted) ++m.fp;
        else if (positive) ++m.fn;
        else ++m.tn;
      }
    }
    lines.push_back(std::move(line));
  }
  if (costed > 0) {
    m.mean_tokens = tokens / static_cast<double>(costed);
    m.mean_wall_seconds = wall / static_cast<double>(costed);
  }
  compute_ratios(m);

  if (!eval.per_case_path.empty()) {
    std::ofstream out(eval.per_case_path, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + eval.per_case_path);
    for (const auto& line : lines) out << canonical_dump(line) << "\n";
    if (!out) throw StorageError("short write to " + eval.per_case_path);
  }
  return m;
}

namespace {

std::string pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::string compare_runs(std::vector<MetricsReport> runs) {
  std::stable_sort(runs.begin(), runs.end(),
                   [](const MetricsReport& a, const MetricsReport& b) { return a.label < b.label; });
  using Getter = std::optional<double> MetricsReport::*;
  const Getter cols[] = {&MetricsReport::accuracy, &MetricsReport::precision, &MetricsReport::recall,
                         &MetricsReport::f1};
  // Compare at the printed precision so equal-looking cells tie.
  std::vector<std::string> best(4);
  for (std::size_t c = 0; c < 4; ++c) {
    std::optional<double> top;
    for (const auto& r : runs)
      if (auto v = r.*cols[c]; v && (!top || std::stod(pct(v)) > *top)) top = std::stod(pct(v));
    if (top) best[c] = pct(*top / 100.0);
  }
  std::string out = "| Method | Acc. | Pre. | Rec. | F1 | Cases | Indet. | Failed | Tokens/case | Sec/case |\n";
  out += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : runs) {
    out += "| " + r.label;
    for (std::size_t c = 0; c < 4; ++c) {
      auto text = pct(r.*cols[c]);
      out += " | " + text + (r.*cols[c] && text == best[c] ? "*" : "");
    }
    char cost[64];
    std::snprintf(cost, sizeof cost, "%.1f | %.2f", r.mean_tokens, r.mean_wall_seconds);
    out += " | " + std::to_string(r.total) + " | " + std::to_string(r.indeterminate) + " | " +
           std::to_string(r.failures) + " | " + cost + " |\n";
  }
  return out;
}

}  // namespace pcosdx
