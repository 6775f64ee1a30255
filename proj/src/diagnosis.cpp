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

#include "pcosdx/diagnosis.hpp"

namespace pcosdx {

bool DiagnosisError::cassette_miss() const {
  try {
    std::rethrow_exception(cause_);
  } catch (const CassetteMiss&) {
    return true;
  } catch (...) {
    return false;
  }
}

DiagnosisRun run_diagnosis(const PatientRecord& p, WorkflowContext& ctx) {
  require_valid(p);
  require_cutoffs_for(p, ctx.cfg);
  DiagnosisRun run;
  try {
    run_workflow(p, run.state, ctx);
  } catch (const SchemaError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    log_event(run.state, ctx, "session_aborted", "", sha256_hex(e.what()));
    std::string what = "session " + run.state.session_id + " aborted: " + e.what();
    throw DiagnosisError(what, std::move(run.state), std::current_exception());
  }
  run.report = generate_report(p, run.state, ctx);
  return run;
}

}  // namespace pcosdx
