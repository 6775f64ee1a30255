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

#include <atomic>
#include <cstdint>
#include <string>

namespace pcosdx {

inline constexpr const char* kEngineVersion = "0.1.0";

// Source of audit timestamps. The logical clock makes session state
// byte-reproducible; the system clock is for deployed services.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::string now() = 0;
};

// RFC 3339 UTC with milliseconds.
class SystemClock : public Clock {
 public:
  std::string now() override;
};

// "logical:000001", "logical:000002", ...
class LogicalClock : public Clock {
 public:
  std::string now() override;

 private:
  std::atomic<std::uint64_t> tick_{0};
};

}  // namespace pcosdx
