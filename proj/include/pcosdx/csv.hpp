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
#include <vector>

#include "pcosdx/patient.hpp"

namespace pcosdx {

// RFC 4180 CSV: first line is the header, quoted fields may contain commas,
// doubled quotes and newlines. Rows shorter than the header are padded with
// blank cells; longer rows are a ValueError.
std::vector<Row> parse_csv(std::string_view text);
std::vector<Row> read_csv(const std::string& path);

}  // namespace pcosdx
