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

// Append-only directory of sessions, one canonical JSON file per session id.

#include <optional>
#include <string>

#include "pcosdx/report.hpp"

namespace pcosdx {

struct StoredSession {
  Json state;
  std::optional<DiagnosticReport> report;  // absent for aborted sessions
  std::string error;
};

class SessionStore {
 public:
  // Creates the directory if needed. Throws StorageError.
  explicit SessionStore(std::string dir);

  // Writes <dir>/<session_id>.json. An existing id is rejected with
  // StorageError; concurrent writers never interleave (the file appears
  // atomically via a hard link).
  void persist(const WorkflowState& state, const std::optional<DiagnosticReport>& report,
               const std::string& error = {});
  std::optional<StoredSession> load(const std::string& session_id) const;
  // Raw stored bytes, for byte-level comparison and the HTTP API.
  std::optional<std::string> load_text(const std::string& session_id) const;

  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& session_id) const;
  std::string dir_;
};

bool valid_session_id(std::string_view id);

}  // namespace pcosdx
