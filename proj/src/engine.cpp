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

#include "pcosdx/engine.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "pcosdx/errors.hpp"

namespace pcosdx {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace

EngineConfig engine_config_from_json(const Json& j, const std::string& base_dir) {
  static const std::set<std::string> known = {
      "version",  "thresholds", "kg",           "backend",   "cassette", "record",
      "lexicon",  "embedder",   "policy",       "retrieval_k", "ehr_link_k", "ehr_min_score",
      "jobs",     "bind",       "port",         "session_dir"};
  if (!j.is_object()) throw ConfigError("engine config: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("engine config: unknown key '" + key + "'");
  if (j.value("version", 0) != kEngineConfigVersion)
    throw ConfigError("engine config: unsupported version (expected " + std::to_string(kEngineConfigVersion) + ")");
  EngineConfig c;
  try {
    c.thresholds_path = resolve(j.at("thresholds").get<std::string>(), base_dir);
    c.kg_path = resolve(j.value("kg", std::string()), base_dir);
    c.backend = j.value("backend", c.backend);
    c.cassette_path = resolve(j.value("cassette", std::string()), base_dir);
    c.record_path = resolve(j.value("record", std::string()), base_dir);
    c.lexicon_path = resolve(j.value("lexicon", std::string()), base_dir);
    c.embedder = j.value("embedder", c.embedder);
    auto policy = parse_policy(j.value("policy", std::string("default")));
    if (!policy) throw ConfigError("engine config: policy must be default or strict");
    c.policy = *policy;
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    c.ehr_link_k = j.value("ehr_link_k", c.ehr_link_k);
    c.ehr_min_score = j.value("ehr_min_score", c.ehr_min_score);
    c.jobs = j.value("jobs", c.jobs);
    c.bind_address = j.value("bind", c.bind_address);
    c.port = j.value("port", c.port);
    c.session_dir = resolve(j.value("session_dir", c.session_dir), base_dir);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("engine config: ") + e.what());
  }
  return c;
}

EngineConfig load_engine_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open engine config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return engine_config_from_json(j, fs::path(path).parent_path().string().empty()
                                        ? "."
                                        : fs::path(path).parent_path().string());
}

Json to_json(const EngineConfig& c) {
  return {{"version", kEngineConfigVersion},
          {"thresholds", c.thresholds_path},
          {"kg", c.kg_path},
          {"backend", c.backend},
          {"cassette", c.cassette_path},
          {"record", c.record_path},
          {"lexicon", c.lexicon_path},
          {"embedder", c.embedder},
          {"policy", to_string(c.policy)},
          {"retrieval_k", c.retrieval_k},
          {"ehr_link_k", c.ehr_link_k},
          {"ehr_min_score", c.ehr_min_score},
          {"jobs", c.jobs},
          {"bind", c.bind_address},
          {"port", c.port},
          {"session_dir", c.session_dir}};
}

std::unique_ptr<EmbeddingBackend> make_embedder(const std::string& kind) {
  if (kind == "hash") return std::make_unique<HashEmbedder>();
  if (kind == "remote") {
    auto env = remote_config_from_env();
    const char* model = std::getenv("MAPIS_EMBED_MODEL");
    return std::make_unique<RemoteEmbedder>(
        RemoteEmbedderConfig{env.api_base, env.api_key, model && *model ? model : env.model},
        std::make_shared<HttplibTransport>());
  }
  throw ConfigError("unknown embedder '" + kind + "' (expected hash or remote)");
}

std::shared_ptr<AgentBackend> make_backend(const EngineConfig& c, const ThresholdConfig& thresholds) {
  std::shared_ptr<AgentBackend> backend;
  if (c.backend == "rule") {
    std::optional<Lexicon> lexicon;
    if (!c.lexicon_path.empty()) lexicon = load_lexicon(c.lexicon_path);
    backend = std::make_shared<RuleOracleBackend>(thresholds, lexicon);
  } else if (c.backend == "replay") {
    if (c.cassette_path.empty()) throw ConfigError("replay backend needs a cassette");
    backend = std::make_shared<ReplayBackend>(c.cassette_path);
  } else if (c.backend == "remote") {
    backend = std::make_shared<RemoteBackend>(remote_config_from_env(), std::make_shared<HttplibTransport>());
  } else {
    throw ConfigError("unknown backend '" + c.backend + "' (expected rule, replay or remote)");
  }
  if (!c.record_path.empty()) backend = std::make_shared<RecordingBackend>(backend, c.record_path);
  return backend;
}

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.thresholds_path.empty()) throw ConfigError("no threshold configuration given");
  thresholds_ = load_threshold_config(cfg_.thresholds_path);
  backend_ = make_backend(cfg_, thresholds_);
  embedder_ = make_embedder(cfg_.embedder);
  if (!cfg_.kg_path.empty()) {
    if (!fs::exists(cfg_.kg_path)) throw ConfigError("knowledge graph not found: " + cfg_.kg_path);
    graph_ = load_graph(cfg_.kg_path);
    if (graph_->manifest.embedder_id != embedder_->id())
      throw ConfigError("knowledge graph was built with embedder '" + graph_->manifest.embedder_id +
                        "' but the engine uses '" + embedder_->id() + "'");
    index_ = std::make_unique<RetrievalIndex>(*graph_, *embedder_);
  }
}

WorkflowOptions Engine::workflow_options() const {
  WorkflowOptions o;
  o.policy = cfg_.policy;
  o.retrieval_k = cfg_.retrieval_k;
  o.ehr_link_k = cfg_.ehr_link_k;
  o.ehr_min_score = cfg_.ehr_min_score;
  return o;
}

WorkflowContext Engine::context() { return WorkflowContext{thresholds_, *backend_, index_.get(), workflow_options()}; }

}  // namespace pcosdx
