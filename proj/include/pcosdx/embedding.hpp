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

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pcosdx/http_transport.hpp"

namespace pcosdx {

using Embedding = std::vector<double>;

// 0 when either vector is all zeros.
double cosine(const Embedding& a, const Embedding& b);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // Identifies the model; recorded into graph manifests.
  virtual std::string id() const = 0;
  // Throws EmbedError.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;

  Embedding embed_one(const std::string& text) const;
};

// Deterministic test embedder: signed feature hashing of character n-grams
// (words padded with '#') plus whole-word features, L2-normalized.
class HashEmbedder : public EmbeddingBackend {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::size_t ngram = 3,
                        std::uint64_t seed = 0x5eedULL);
  std::string id() const override;
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::size_t ngram_;
  std::uint64_t seed_;
};

struct RemoteEmbedderConfig {
  std::string api_base;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string model;
};

// Provider-style POST {api_base}/embeddings.
class RemoteEmbedder : public EmbeddingBackend {
 public:
  RemoteEmbedder(RemoteEmbedderConfig cfg, std::shared_ptr<HttpTransport> transport);
  std::string id() const override;
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

 private:
  RemoteEmbedderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace pcosdx
