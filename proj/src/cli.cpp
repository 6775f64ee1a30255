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


#include "pcosdx/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "pcosdx/backends.hpp"
#include "pcosdx/clock.hpp"
#include "pcosdx/csv.hpp"
#include "pcosdx/diagnosis.hpp"
#include "pcosdx/engine.hpp"
#include "pcosdx/errors.hpp"
#include "pcosdx/evaluation.hpp"
#include "pcosdx/service.hpp"
#include "pcosdx/session_store.hpp"

#ifndef PCOSDX_DEFAULT_DATA_DIR
#define PCOSDX_DEFAULT_DATA_DIR "data"
#endif

namespace pcosdx {

namespace fs = std::filesystem;

std::string default_data_dir() {
  const char* env = std::getenv("PCOSDX_DATA_DIR");
  return env && *env ? env : PCOSDX_DEFAULT_DATA_DIR;
}

namespace {

struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand that runs an engine.
struct EngineFlags {
  std::string config;
  std::string thresholds;
  std::string kg;
  std::string backend;
  std::string cassette;
  std::string record;
  std::string lexicon;
  std::string embedder;
  std::string policy;
  std::size_t k = 0;
  std::size_t jobs = 0;

  void add(CLI::App* app, bool with_kg = true) {
    app->add_option("--config", config, "Engine config file (JSON, version 1)");
    app->add_option("--thresholds", thresholds, "Threshold config file");
    if (with_kg) app->add_option("--kg", kg, "Knowledge graph file");
    app->add_option("--backend", backend, "Agent backend")->check(CLI::IsMember({"rule", "replay", "remote"}));
    app->add_option("--cassette", cassette, "Cassette file for the replay backend");
    app->add_option("--record", record, "Append every agent call to this cassette");
    app->add_option("--lexicon", lexicon, "Lexicon for rule-oracle graph extraction");
    app->add_option("--embedder", embedder, "Embedding backend")->check(CLI::IsMember({"hash", "remote"}));
    app->add_option("--policy", policy, "Uncertain policy")->check(CLI::IsMember({"default", "strict"}));
    app->add_option("--k", k, "Retrieval depth")->check(CLI::PositiveNumber);
    app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  EngineConfig resolve() const {
    EngineConfig c;
    if (!config.empty()) c = load_engine_config(config);
    if (c.thresholds_path.empty()) c.thresholds_path = (fs::path(default_data_dir()) / "config" / "thresholds.json").string();
    if (!thresholds.empty()) c.thresholds_path = thresholds;
    if (!kg.empty()) c.kg_path = kg;
    if (!backend.empty()) c.backend = backend;
    if (!cassette.empty()) c.cassette_path = cassette;
    if (!record.empty()) c.record_path = record;
    if (!lexicon.empty()) c.lexicon_path = lexicon;
    if (!embedder.empty()) c.embedder = embedder;
    if (!policy.empty()) c.policy = *parse_policy(policy);
    if (k) c.retrieval_k = k;
    if (jobs) c.jobs = jobs;
    if (!cassette.empty() && backend.empty() && config.empty()) c.backend = "replay";
    return c;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("write failed: " + path);
}

// Writes to `path` when given, otherwise to `out`.
void emit(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_file(path, text);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// preprocess --------------------------------------------------------------

struct PreprocessFlags {
  std::string input;
  std::string schema;
  std::string patient_id;
  std::string out;
  EngineFlags engine;
};

int run_preprocess(const PreprocessFlags& f, std::ostream& out, std::ostream& err) {
  std::string text;
  if (ends_with(f.input, ".csv")) {
    if (f.schema.empty()) throw UsageFailure("preprocess: --schema is required for CSV input");
    SchemaMapping mapping = load_mapping(f.schema);
    std::size_t index = 0, failed = 0;
    for (const Row& row : read_csv(f.input)) {
      ++index;
      try {
        text += serialize(ingest_structured(row, mapping)) + "\n";
      } catch (const Error& e) {
        // Bad rows are reported and skipped; the run still fails at the end.
        err << f.input << ": record " << index;
        auto id = row.find(mapping.patient_id_column);
        if (id != row.end() && !id->second.empty()) err << " (" << id->second << ")";
        err << ": " << e.what() << "\n";
        ++failed;
      }
    }
    emit(out, f.out, text);
    return failed ? 2 : 0;
  } else {
    // Free-text note: extraction goes through the configured backend.
    EngineConfig cfg = f.engine.resolve();
    ThresholdConfig thresholds = load_threshold_config(cfg.thresholds_path);
    auto backend = make_backend(cfg, thresholds);
    std::string id = f.patient_id.empty() ? fs::path(f.input).stem().string() : f.patient_id;
    text = serialize(extract_from_text(read_file(f.input), *backend, id)) + "\n";
  }
  emit(out, f.out, text);
  return 0;
}

// kg build / kg query -----------------------------------------------------

struct KgBuildFlags {
  std::string corpus;
  std::string ontology;
  std::string dictionary;
  std::string out;
  std::string report;
  double percentile = 25.0;
  std::size_t buffer = 1;
  EngineFlags engine;
};

int run_kg_build(const KgBuildFlags& f, std::ostream& out, std::ostream& err) {
  std::string data = default_data_dir();
  EngineConfig cfg = f.engine.resolve();
  if (f.engine.lexicon.empty() && cfg.lexicon_path.empty())
    cfg.lexicon_path = (fs::path(data) / "kg" / "lexicon.json").string();
  Ontology ontology = load_ontology(f.ontology.empty() ? (fs::path(data) / "kg" / "ontology.json").string() : f.ontology);
  Dictionary dict = load_dictionary(
      f.dictionary.empty() ? (fs::path(data) / "kg" / "dictionary.json").string() : f.dictionary, ontology);
  std::vector<CorpusDocument> corpus = load_corpus(f.corpus);
  ThresholdConfig thresholds = load_threshold_config(cfg.thresholds_path);
  auto backend = make_backend(cfg, thresholds);
  auto embedder = make_embedder(cfg.embedder);
  BuildConfig bc;
  bc.chunking.breakpoint_percentile = f.percentile;
  bc.chunking.buffer_paragraphs = f.buffer;
  bc.jobs = cfg.jobs;
  BuildResult result = build_graph(corpus, ontology, dict, *embedder, *backend, bc);
  if (f.out.empty() || f.out == "-")
    out << serialize_graph(result.graph);
  else
    save_graph(result.graph, f.out);
  if (!f.report.empty()) write_file(f.report, pretty_dump(to_json(result.report)) + "\n");
  err << "graph: " << result.graph.chunks.size() << " chunks, " << result.graph.entities.size() << " entities, "
      << result.graph.relations.size() << " relations, " << result.report.unmatched_entities.size()
      << " unmatched, " << result.report.dropped_relations.size() << " dropped relations\n";
  return 0;
}

struct KgQueryFlags {
  std::string kg;
  std::string query;
  std::size_t k = 3;
  std::string embedder = "hash";
};

int run_kg_query(const KgQueryFlags& f, std::ostream& out) {
  KnowledgeGraph graph = load_graph(f.kg);
  auto embedder = make_embedder(f.embedder);
  if (graph.manifest.embedder_id != embedder->id())
    throw ConfigError("graph was built with embedder '" + graph.manifest.embedder_id + "'");
  RetrievalIndex index(graph, *embedder);
  out << pretty_dump(to_json(index.retrieve(f.query, f.k))) << "\n";
  return 0;
}

// diagnose ----------------------------------------------------------------

struct DiagnoseFlags {
  std::string patient;
  std::string out;
  std::string markdown;
  std::string format = "json";
  std::string state_out;
  std::string audit_log;
  std::string session_dir;
  std::string session_id;
  bool system_clock = false;
  EngineFlags engine;
};

int run_diagnose(const DiagnoseFlags& f, std::ostream& out, std::ostream& err) {
  PatientRecord record = parse_record(read_file(f.patient));
  Engine engine(f.engine.resolve());
  WorkflowContext ctx = engine.context();
  ctx.options.session_id = f.session_id;
  if (f.system_clock) ctx.options.clock = std::make_shared<SystemClock>();
  std::optional<SessionStore> store;
  if (!f.session_dir.empty()) store.emplace(f.session_dir);

  auto write_audit = [&](const WorkflowState& state) {
    if (f.audit_log.empty()) return;
    std::string lines;
    for (const AuditEvent& e : state.events) lines += canonical_dump(to_json(e)) + "\n";
    write_file(f.audit_log, lines);
  };

  try {
    DiagnosisRun run = run_diagnosis(record, ctx);
    write_audit(run.state);
    if (!f.state_out.empty()) write_file(f.state_out, pretty_dump(to_json(run.state)) + "\n");
    if (store) store->persist(run.state, run.report);
    ReportFormat format = f.format == "markdown" ? ReportFormat::Markdown : ReportFormat::Json;
    std::string text = render_report_text(run.report, format);
    if (!text.empty() && text.back() != '\n') text += '\n';
    emit(out, f.out, text);
    if (!f.markdown.empty()) write_file(f.markdown, render_report_text(run.report, ReportFormat::Markdown));
    err << "session " << run.state.session_id << ": " << run.report.outcome.label() << "\n";
    return 0;
  } catch (const DiagnosisError& e) {
    write_audit(e.state());
    if (store) store->persist(e.state(), std::nullopt, e.what());
    throw;
  }
}

// eval --------------------------------------------------------------------

struct EvalFlags {
  std::string dataset;
  std::string schema;
  std::string labels = "label";
  std::string metrics_out;
  std::string per_case;
  std::string run_label;
  double failure_ceiling = 0.2;
  std::vector<std::string> compare;
  EngineFlags engine;
};

int run_eval(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  LabeledCohort cohort;
  if (ends_with(f.dataset, ".csv")) {
    if (f.schema.empty()) throw UsageFailure("eval: --schema is required for CSV datasets");
    cohort = load_cohort_csv(f.dataset, load_mapping(f.schema), f.labels);
  } else {
    cohort = load_cohort_jsonl(f.dataset, f.labels);
  }
  Engine engine(f.engine.resolve());
  EvalOptions eo;
  eo.label = f.run_label.empty() ? engine.config().backend : f.run_label;
  eo.jobs = engine.config().jobs;
  eo.failure_ceiling = f.failure_ceiling;
  eo.per_case_path = f.per_case;
  MetricsReport m =
      evaluate_cohort(cohort, engine.thresholds(), engine.backend(), engine.index(), engine.workflow_options(), eo);
  if (!f.metrics_out.empty()) write_file(f.metrics_out, pretty_dump(to_json(m)) + "\n");
  std::vector<MetricsReport> runs{m};
  for (const auto& path : f.compare) runs.push_back(metrics_from_json(Json::parse(read_file(path))));
  out << compare_runs(runs);
  err << m.total << " cases, " << m.failures << " failed, " << m.indeterminate << " indeterminate\n";
  return 0;
}

// serve -------------------------------------------------------------------

struct ServeFlags {
  std::string bind;
  int port = -1;
  std::string session_dir;
  EngineFlags engine;
};

int run_serve(const ServeFlags& f, std::ostream& err) {
  EngineConfig cfg = f.engine.resolve();
  if (!f.bind.empty()) cfg.bind_address = f.bind;
  if (f.port >= 0) cfg.port = f.port;
  if (!f.session_dir.empty()) cfg.session_dir = f.session_dir;
  Engine engine(cfg);  // fail fast before binding
  SessionStore store(cfg.session_dir);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  Service service(engine, store);
  int port = service.start(cfg.bind_address, cfg.port);
  err << "listening on " << cfg.bind_address << ":" << port << "\n";
  int sig = 0;
  sigwait(&signals, &sig);
  service.stop();
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guideline-driven PCOS diagnostic workflow", "pcosdx"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  PreprocessFlags pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Normalize a CSV export or a free-text note into patient records");
  pre_cmd->add_option("--input", pre.input, "CSV file or text note")->required();
  pre_cmd->add_option("--schema", pre.schema, "Schema mapping (CSV input)");
  pre_cmd->add_option("--patient-id", pre.patient_id, "Patient id for a note (default: file stem)");
  pre_cmd->add_option("--out", pre.out, "Output file (default stdout)");
  pre.engine.add(pre_cmd, false);

  auto* kg_cmd = app.add_subcommand("kg", "Knowledge graph tools");
  kg_cmd->require_subcommand(1);
  KgBuildFlags build;
  auto* build_cmd = kg_cmd->add_subcommand("build", "Build a graph from a corpus directory");
  build_cmd->add_option("--corpus", build.corpus, "Directory of .txt/.md documents")->required();
  build_cmd->add_option("--ontology", build.ontology, "Ontology file");
  build_cmd->add_option("--dictionary", build.dictionary, "Dictionary file");
  build_cmd->add_option("--out", build.out, "Graph file (default stdout)");
  build_cmd->add_option("--report", build.report, "Build report file");
  build_cmd->add_option("--percentile", build.percentile, "Chunk breakpoint percentile")->check(CLI::Range(0.0, 100.0));
  build_cmd->add_option("--buffer", build.buffer, "Context paragraphs on each side of a chunk");
  build.engine.add(build_cmd, false);
  KgQueryFlags query;
  auto* query_cmd = kg_cmd->add_subcommand("query", "Retrieve guideline knowledge for a query");
  query_cmd->add_option("--kg", query.kg, "Graph file")->required();
  query_cmd->add_option("--query,-q", query.query, "Query text")->required();
  query_cmd->add_option("--k", query.k, "Number of items")->check(CLI::PositiveNumber);
  query_cmd->add_option("--embedder", query.embedder, "Embedding backend")->check(CLI::IsMember({"hash", "remote"}));

  DiagnoseFlags diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Run the diagnostic workflow on one patient record");
  diag_cmd->add_option("--patient", diag.patient, "Patient record JSON")->required();
  diag_cmd->add_option("--out", diag.out, "Report file (default stdout)");
  diag_cmd->add_option("--format", diag.format, "Report format for --out/stdout")
      ->check(CLI::IsMember({"json", "markdown"}));
  diag_cmd->add_option("--markdown", diag.markdown, "Also write a markdown report here");
  diag_cmd->add_option("--state-out", diag.state_out, "Write the workflow state here");
  diag_cmd->add_option("--audit-log", diag.audit_log, "Write the audit events (JSON lines) here");
  diag_cmd->add_option("--session-dir", diag.session_dir, "Persist the session into this store");
  diag_cmd->add_option("--session-id", diag.session_id, "Session id (default: derived from the inputs)");
  diag_cmd->add_flag("--wall-clock", diag.system_clock, "Wall-clock audit timestamps instead of logical ticks");
  diag.engine.add(diag_cmd);

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a labelled cohort");
  eval_cmd->add_option("--dataset", ev.dataset, "Cohort CSV or JSON lines")->required();
  eval_cmd->add_option("--schema", ev.schema, "Schema mapping (CSV datasets)");
  eval_cmd->add_option("--labels", ev.labels, "Label column");
  eval_cmd->add_option("--metrics-out", ev.metrics_out, "Metrics JSON file");
  eval_cmd->add_option("--per-case", ev.per_case, "Per-case results (JSON lines)");
  eval_cmd->add_option("--label", ev.run_label, "Run label in the comparison table");
  eval_cmd->add_option("--failure-ceiling", ev.failure_ceiling, "Abort above this failure rate")
      ->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--compare", ev.compare, "Earlier metrics files to tabulate alongside");
  ev.engine.add(eval_cmd);

  ServeFlags serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_cmd->add_option("--bind", serve.bind, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--session-dir", serve.session_dir, "Session store directory");
  serve.engine.add(serve_cmd);

  app.add_subcommand("version", "Print the engine version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (pre_cmd->parsed()) return run_preprocess(pre, out, err);
    if (build_cmd->parsed()) return run_kg_build(build, out, err);
    if (query_cmd->parsed()) return run_kg_query(query, out);
    if (diag_cmd->parsed()) return run_diagnose(diag, out, err);
    if (eval_cmd->parsed()) return run_eval(ev, out, err);
    if (serve_cmd->parsed()) return run_serve(serve, err);
    out << "pcosdx " << kEngineVersion << "\n";
    return 0;
  } catch (const UsageFailure& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& v : e.violations()) err << "  " << v << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace pcosdx
