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

#include "pcosdx/session_store.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "pcosdx/errors.hpp"

namespace pcosdx {

namespace fs = std::filesystem;

bool valid_session_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

SessionStore::SessionStore(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw StorageError("cannot create session directory " + dir_);
}

std::string SessionStore::path_for(const std::string& session_id) const {
  if (!valid_session_id(session_id)) throw StorageError("invalid session id '" + session_id + "'");
  return (fs::path(dir_) / (session_id + ".json")).string();
}

void SessionStore::persist(const WorkflowState& state, const std::optional<DiagnosticReport>& report,
                           const std::string& error) {
  auto final_path = path_for(state.session_id);
  Json doc = {{"state", to_json(state)}, {"report", report ? to_json(*report) : Json(nullptr)}};
  if (!error.empty()) doc["error"] = error;
  auto text = pretty_dump(doc);

  static std::atomic<unsigned long> counter{0};
  std::ostringstream tmp_name;
  tmp_name << ".tmp-" << state.session_id << "-" << ::getpid() << "-" << std::this_thread::get_id() << "-"
           << counter++;
  auto tmp = (fs::path(dir_) / tmp_name.str()).string();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw StorageError("short write to " + tmp);
    }
  }
  int rc = ::link(tmp.c_str(), final_path.c_str());
  int err = errno;
  std::error_code ec;
  fs::remove(tmp, ec);
  if (rc != 0) {
    if (err == EEXIST) throw StorageError("session " + state.session_id + " already stored");
    throw StorageError("cannot store session " + state.session_id + ": " + std::strerror(err));
  }
}

std::optional<std::string> SessionStore::load_text(const std::string& session_id) const {
  if (!valid_session_id(session_id)) return std::nullopt;
  std::ifstream in(path_for(session_id), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<StoredSession> SessionStore::load(const std::string& session_id) const {
  auto text = load_text(session_id);
  if (!text) return std::nullopt;
  Json doc;
  try {
    doc = Json::parse(*text);
  } catch (const Json::parse_error& e) {
    throw StorageError("corrupt session file for " + session_id + ": " + e.what());
  }
  StoredSession s;
  s.state = doc.at("state");
  if (!doc.at("report").is_null()) s.report = report_from_json(doc.at("report"));
  s.error = doc.value("error", std::string());
  return s;
}

}  // namespace pcosdx
