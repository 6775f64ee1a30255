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

#include <iosfwd>
#include <string>

namespace pcosdx {

// Entry point of the pcosdx tool. Exit codes: 0 success, 1 usage error,
// 2 runtime error. Data goes to `out`, diagnostics to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Bundled data directory: $PCOSDX_DATA_DIR, else the build-time default.
std::string default_data_dir();

}  // namespace pcosdx
