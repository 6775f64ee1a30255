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

// Engine configuration and the loaded runtime it describes.

#include <memory>
#include <optional>
#include <string>

#include "pcosdx/backends.hpp"
#include "pcosdx/embedding.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "pcosdx/workflow.hpp"

namespace pcosdx {

inline constexpr int kEngineConfigVersion = 1;

struct EngineConfig {
  std::string thresholds_path;
  std::string kg_path;       // empty: no knowledge injection
  std::string backend = "rule";  // rule | replay | remote
  std::string cassette_path;     // replay input
  std::string record_path;       // when set, every call is appended here
  std::string lexicon_path;      // rule-oracle KG extraction terms
  std::string embedder = "hash";  // hash | remote
  UncertainPolicy policy = UncertainPolicy::Default;
  std::size_t retrieval_k = 3;
  std::size_t ehr_link_k = 3;
  double ehr_min_score = 0.2;
  std::size_t jobs = 1;
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::string session_dir = "sessions";
};

// {"version": 1, ...field names above...}. Relative paths resolve against
// `base_dir`. Unknown keys are a ConfigError.
EngineConfig engine_config_from_json(const Json& j, const std::string& base_dir = ".");
EngineConfig load_engine_config(const std::string& path);
Json to_json(const EngineConfig& c);

std::unique_ptr<EmbeddingBackend> make_embedder(const std::string& kind);

// Rule/replay/remote backend, wrapped in a recorder when record_path is set.
std::shared_ptr<AgentBackend> make_backend(const EngineConfig& c, const ThresholdConfig& thresholds);

// Everything loaded and validated up front; any bad file throws before the
// engine is usable.
class Engine {
 public:
  explicit Engine(EngineConfig cfg);

  const EngineConfig& config() const { return cfg_; }
  const ThresholdConfig& thresholds() const { return thresholds_; }
  AgentBackend& backend() { return *backend_; }
  std::shared_ptr<AgentBackend> backend_ptr() { return backend_; }
  const KnowledgeGraph* graph() const { return graph_ ? &*graph_ : nullptr; }
  const RetrievalIndex* index() const { return index_.get(); }
  const EmbeddingBackend& embedder() const { return *embedder_; }

  WorkflowOptions workflow_options() const;
  WorkflowContext context();

 private:
  EngineConfig cfg_;
  ThresholdConfig thresholds_;
  std::shared_ptr<AgentBackend> backend_;
  std::unique_ptr<EmbeddingBackend> embedder_;
  std::optional<KnowledgeGraph> graph_;
  std::unique_ptr<RetrievalIndex> index_;
};

}  // namespace pcosdx
