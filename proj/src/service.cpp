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


#include "pcosdx/service.hpp"

#include <openssl/rand.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "pcosdx/clock.hpp"
#include "pcosdx/diagnosis.hpp"
#include "pcosdx/errors.hpp"

namespace pcosdx {

namespace {

HttpReply error_reply(int status, const std::string& message) { return {status, Json{{"error", message}}}; }

}  // namespace

std::string random_session_id() {
  unsigned char buf[16];
  if (RAND_bytes(buf, sizeof buf) != 1) throw Error("random session id: RAND_bytes failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : buf) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

Service::Service(Engine& engine, SessionStore& store) : engine_(engine), store_(store) {}

Service::~Service() { stop(); }

HttpReply Service::diagnose(const std::string& body) {
  PatientRecord record;
  try {
    record = record_from_json(Json::parse(body));
  } catch (const SchemaError& e) {
    return {400, Json{{"error", "invalid patient record"}, {"violations", e.violations()}}};
  } catch (const Json::exception& e) {
    return {400, Json{{"error", "malformed JSON"}, {"violations", {std::string(e.what())}}}};
  } catch (const Error& e) {
    return {400, Json{{"error", "invalid patient record"}, {"violations", {std::string(e.what())}}}};
  }

  WorkflowContext ctx = engine_.context();
  ctx.options.session_id = random_session_id();
  ctx.options.clock = std::make_shared<SystemClock>();
  try {
    DiagnosisRun run = run_diagnosis(record, ctx);
    Json out{{"session_id", run.state.session_id}, {"report", to_json(run.report)}};
    try {
      store_.persist(run.state, run.report);
    } catch (const StorageError& e) {
      spdlog::error("session {}: {}", run.state.session_id, e.what());
      out["storage_error"] = e.what();
    }
    return {200, out};
  } catch (const SchemaError& e) {
    return {400, Json{{"error", "invalid patient record"}, {"violations", e.violations()}}};
  } catch (const ConfigError& e) {
    return error_reply(400, e.what());
  } catch (const DiagnosisError& e) {
    Json out{{"error", e.what()}, {"session_id", e.state().session_id}};
    try {
      store_.persist(e.state(), std::nullopt, e.what());
    } catch (const StorageError& se) {
      spdlog::error("session {}: {}", e.state().session_id, se.what());
      out["storage_error"] = se.what();
    }
    return {502, out};
  } catch (const std::exception& e) {
    spdlog::error("diagnose: {}", e.what());
    return error_reply(500, "internal error");
  }
}

HttpReply Service::session(const std::string& session_id) const {
  if (!valid_session_id(session_id)) return error_reply(404, "unknown session");
  auto text = store_.load_text(session_id);
  if (!text) return error_reply(404, "unknown session");
  return {200, Json::parse(*text)};
}

HttpReply Service::kg_query(const std::string& body) const {
  if (!engine_.index()) return error_reply(503, "no knowledge graph loaded");
  std::string query;
  std::size_t k = 3;
  try {
    Json j = Json::parse(body);
    query = j.at("query").get<std::string>();
    if (j.contains("k")) {
      auto kk = j.at("k").get<long long>();
      if (kk < 1 || kk > 100) return error_reply(400, "k must be in [1, 100]");
      k = static_cast<std::size_t>(kk);
    }
  } catch (const Json::exception& e) {
    return error_reply(400, std::string("expected {\"query\": string, \"k\": int}: ") + e.what());
  }
  try {
    return {200, to_json(engine_.index()->retrieve(query, k))};
  } catch (const EmptyGraph& e) {
    return error_reply(503, e.what());
  } catch (const std::exception& e) {
    spdlog::error("kg query: {}", e.what());
    return error_reply(500, "internal error");
  }
}

HttpReply Service::health() const {
  return {200, Json{{"status", "ok"},
                    {"engine_version", kEngineVersion},
                    {"backend", engine_.backend_ptr()->info().id},
                    {"config_hash", config_hash(engine_.thresholds())},
                    {"kg_manifest_hash", engine_.graph() ? engine_.graph()->manifest_hash() : ""}}};
}

void Service::install_routes() {
  server_ = std::make_unique<httplib::Server>();
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(canonical_dump(r.body), "application/json");
  };
  server_->Post("/v1/diagnose", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, diagnose(req.body));
  });
  server_->Get(R"(/v1/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, session(req.matches[1]));
  });
  server_->Post("/v1/kg/query", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, kg_query(req.body));
  });
  server_->Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  server_->set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send(res, error_reply(500, "internal error"));
  });
}

int Service::start(const std::string& host, int port) {
  install_routes();
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  install_routes();
  if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("serving on {}:{}", host, port);
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace pcosdx
