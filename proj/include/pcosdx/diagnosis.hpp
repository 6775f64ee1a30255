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

#include <exception>

#include "pcosdx/errors.hpp"
#include "pcosdx/report.hpp"
#include "pcosdx/workflow.hpp"

namespace pcosdx {

struct DiagnosisRun {
  WorkflowState state;
  DiagnosticReport report;
};

// A session stopped by an agent failure. Holds the partial state (with its
// audit events) and the original error.
class DiagnosisError : public Error {
 public:
  DiagnosisError(const std::string& what, WorkflowState state, std::exception_ptr cause)
      : Error(what), state_(std::move(state)), cause_(std::move(cause)) {}
  const WorkflowState& state() const { return state_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }
  bool cassette_miss() const;

 private:
  WorkflowState state_;
  std::exception_ptr cause_;
};

// Validates the record, runs the workflow and the report. Throws
// SchemaError (invalid record), ConfigError (missing lab cutoffs) before
// any agent call, and DiagnosisError once the session has started.
DiagnosisRun run_diagnosis(const PatientRecord& p, WorkflowContext& ctx);

}  // namespace pcosdx
