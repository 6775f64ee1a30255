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

#include <stdexcept>
#include <string>
#include <vector>

namespace pcosdx {

// Root of every error the engine raises on purpose. Anything else escaping
// the library is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Patient ingestion.
class MappingError : public Error { using Error::Error; };
class UnitError : public Error { using Error::Error; };
class ValueError : public Error { using Error::Error; };

// A record (or a backend-produced record) violates PatientRecord invariants.
// Carries one message per violated field so callers can report them all.
class SchemaError : public Error {
 public:
  explicit SchemaError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

class ConfigError : public Error { using Error::Error; };

// Agent runtime.
class BackendError : public Error { using Error::Error; };
class ReplyError : public Error { using Error::Error; };
class SliceError : public Error { using Error::Error; };
class CassetteMiss : public Error { using Error::Error; };
class AssemblyError : public Error { using Error::Error; };

// Knowledge graph.
class EmbedError : public Error { using Error::Error; };
class EmptyGraph : public Error { using Error::Error; };
class GraphError : public Error { using Error::Error; };
class DictionaryError : public Error { using Error::Error; };

class StorageError : public Error { using Error::Error; };
class EvaluationAborted : public Error { using Error::Error; };

}  // namespace pcosdx
