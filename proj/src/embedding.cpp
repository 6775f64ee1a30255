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

#include "pcosdx/embedding.hpp"

#include <cctype>
#include <cmath>

#include "pcosdx/canonical.hpp"
#include "pcosdx/errors.hpp"

namespace pcosdx {
namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // Final avalanche so nearby n-grams spread over buckets.
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw EmbedError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Embedding EmbeddingBackend::embed_one(const std::string& text) const {
  auto v = embed(std::span<const std::string>(&text, 1));
  if (v.size() != 1) throw EmbedError("embedder returned wrong number of vectors");
  return std::move(v.front());
}

HashEmbedder::HashEmbedder(std::size_t dim, std::size_t ngram, std::uint64_t seed)
    : dim_(dim), ngram_(ngram), seed_(seed) {
  if (dim_ == 0 || ngram_ == 0) throw EmbedError("hash embedder: dim and ngram must be positive");
}

std::string HashEmbedder::id() const {
  return "hash-ngram-v1:d" + std::to_string(dim_) + ":n" + std::to_string(ngram_) + ":s" +
         std::to_string(seed_);
}

std::vector<Embedding> HashEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Embedding v(dim_, 0.0);
    auto add = [&](std::string_view feature) {
      auto h = fnv1a(feature, seed_);
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    for (const auto& w : words_of(text)) {
      add("w:" + w);
      std::string padded = "#" + w + "#";
      if (padded.size() <= ngram_) {
        add(padded);
        continue;
      }
      for (std::size_t i = 0; i + ngram_ <= padded.size(); ++i) {
        add(std::string_view(padded).substr(i, ngram_));
      }
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig cfg, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

std::string RemoteEmbedder::id() const { return "remote:" + cfg_.model; }

std::vector<Embedding> RemoteEmbedder::embed(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  Json body = {{"model", cfg_.model}, {"input", Json(std::vector<std::string>(texts.begin(), texts.end()))}};
  HttpRequest req;
  req.url = cfg_.api_base + "/embeddings";
  req.headers = {{"Authorization", "Bearer " + cfg_.api_key}, {"Content-Type", "application/json"}};
  req.body = body.dump();
  HttpResponse res;
  try {
    res = transport_->post(req);
  } catch (const BackendError& e) {
    throw EmbedError(e.what());
  }
  if (res.status / 100 != 2) {
    throw EmbedError("embedding request failed with HTTP " + std::to_string(res.status));
  }
  try {
    auto j = Json::parse(res.body);
    std::vector<Embedding> out(texts.size());
    for (const auto& item : j.at("data")) {
      auto idx = item.at("index").get<std::size_t>();
      if (idx >= out.size()) throw EmbedError("embedding index out of range");
      out[idx] = item.at("embedding").get<Embedding>();
    }
    for (const auto& e : out) {
      if (e.empty()) throw EmbedError("embedding response missing vectors");
    }
    return out;
  } catch (const Json::exception& e) {
    throw EmbedError(std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace pcosdx
