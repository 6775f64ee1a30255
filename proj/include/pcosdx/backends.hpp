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

// AgentBackend implementations: the deterministic rule oracle, cassette
// record/replay, and the remote chat-completion client.

#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pcosdx/agent.hpp"
#include "pcosdx/http_transport.hpp"

namespace pcosdx {

// Term list driving the rule oracle's KG extraction: longest-match entity
// spotting and cue-phrase relations between neighbouring mentions.
struct Lexicon {
  struct Term {
    std::string term;
    std::string type;
  };
  struct Cue {
    std::string phrase;
    std::string relation;
  };
  std::vector<Term> terms;
  std::vector<Cue> cues;
};

Lexicon lexicon_from_json(const Json& j);
Lexicon load_lexicon(const std::string& path);

// Answers every prompt kind without a model. Clinical steps are answered by
// the guideline_rules evaluators applied to the prompt's task input, so a
// workflow run on this backend is the rule engine's verdict.
class RuleOracleBackend : public AgentBackend {
 public:
  explicit RuleOracleBackend(ThresholdConfig cfg, std::optional<Lexicon> lexicon = std::nullopt,
                             bool timed = false);
  BackendInfo info() const override;
  // Throws SliceError when the task input is not the step's slice.
  Completion complete(const PromptSpec& prompt) override;

 private:
  std::string answer(const PromptSpec& prompt) const;

  ThresholdConfig cfg_;
  std::optional<Lexicon> lexicon_;
  bool timed_;
};

struct CassetteEntry {
  std::string prompt_hash;
  std::string role;
  std::string step;
  std::string reply;
  Usage usage;
};

Json to_json(const CassetteEntry& e);
CassetteEntry cassette_entry_from_json(const Json& j);

// Serves recorded replies keyed by prompt hash. Never calls out.
class ReplayBackend : public AgentBackend {
 public:
  explicit ReplayBackend(const std::string& cassette_path);
  explicit ReplayBackend(std::vector<CassetteEntry> entries);
  BackendInfo info() const override;
  // Throws CassetteMiss.
  Completion complete(const PromptSpec& prompt) override;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, CassetteEntry> entries_;
  std::string id_;
};

// Forwards to `inner` and appends each new prompt/reply pair to a cassette
// file (JSON-lines). Prompts already recorded are not written twice.
class RecordingBackend : public AgentBackend {
 public:
  RecordingBackend(std::shared_ptr<AgentBackend> inner, std::string cassette_path);
  BackendInfo info() const override;
  Completion complete(const PromptSpec& prompt) override;

 private:
  std::shared_ptr<AgentBackend> inner_;
  std::string path_;
  std::mutex mu_;
  std::map<std::string, bool> written_;
};

struct RemoteBackendConfig {
  std::string api_base;
  std::string api_key;
  std::string model;
  int transport_retries = 2;
  std::size_t max_in_flight = 4;
  double backoff_base_seconds = 0.5;
  std::chrono::milliseconds timeout{120000};
};

// Reads MAPIS_API_KEY, MAPIS_API_BASE, MAPIS_MODEL. Throws ConfigError when
// any is unset.
RemoteBackendConfig remote_config_from_env();

// Provider-style POST {api_base}/chat/completions at temperature 0.
class RemoteBackend : public AgentBackend {
 public:
  RemoteBackend(RemoteBackendConfig cfg, std::shared_ptr<HttpTransport> transport);
  BackendInfo info() const override;
  // Retries transport failures, 429 and 5xx with jittered exponential
  // backoff, then throws BackendError.
  Completion complete(const PromptSpec& prompt) override;

 private:
  RemoteBackendConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
};

// Record built from a free-text note through the extraction agent. Every
// populated field has a provenance span into the note; fields the backend
// marks uncertain stay absent. Throws BackendError, SchemaError.
PatientRecord extract_from_text(std::string_view note, AgentBackend& backend,
                                std::string patient_id, const CallObserver& observer = {});

}  // namespace pcosdx
