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

#include <string>
#include <string_view>

#include "json.hpp"

namespace pcosdx {

using Json = nlohmann::json;

// Canonical serialization: object keys sorted (nlohmann::json default map
// ordering), no insignificant whitespace, shortest round-trip doubles.
std::string canonical_dump(const Json& j);

// Pretty variant with the same key order, used for files meant to be read.
std::string pretty_dump(const Json& j);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// sha256 of canonical_dump(j).
std::string json_hash(const Json& j);

// Rounds to 9 decimal places. Applied to similarity scores before they are
// persisted so golden files do not depend on last-ulp differences.
double round_score(double x);

}  // namespace pcosdx
