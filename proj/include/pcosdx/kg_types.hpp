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

// Data types of the three-layer knowledge graph: dictionary entries at the
// bottom, guideline-derived entities in the middle, per-session patient
// entities on top.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcosdx/canonical.hpp"

namespace pcosdx {

inline constexpr int kGraphFormatVersion = 1;

enum class Layer { Bottom, Middle, Top };
std::string_view to_string(Layer l);
std::optional<Layer> parse_layer(std::string_view s);

struct Chunk {
  std::string chunk_id;  // "<doc_id>#<ordinal, 3 digits>"
  std::string doc_id;
  int ordinal = 0;
  std::string text;  // core paragraphs joined by blank lines
  // Core paragraphs [para_begin, para_end); chunks of one document tile it.
  std::size_t para_begin = 0;
  std::size_t para_end = 0;
  // Core span widened by the buffer; overlaps neighbouring chunks.
  std::size_t context_begin = 0;
  std::size_t context_end = 0;
  std::string context_text;

  bool operator==(const Chunk&) const = default;
};

struct Entity {
  std::string entity_id;
  std::string name;
  std::string type;
  std::string context;
  Layer layer = Layer::Middle;
  // Empty for Bottom entities; merged Middle entities keep every source.
  std::vector<std::string> source_chunks;

  bool operator==(const Entity&) const = default;
};

struct OntologyLabel {
  std::string label;
  std::string description;
  bool operator==(const OntologyLabel&) const = default;
};

struct Ontology {
  std::vector<OntologyLabel> labels;
  bool contains(std::string_view label) const;
};

struct DictionaryEntry {
  std::string canonical_name;
  std::vector<std::string> aliases;
  std::string type;
  std::string definition;
};

struct Dictionary {
  std::vector<DictionaryEntry> entries;
};

struct Relation {
  std::string head;
  std::string relation_label;
  std::string tail;
  std::string source_chunk;

  auto operator<=>(const Relation&) const = default;
};

enum class LinkKind { DictionaryGrounding, EmbeddingSimilarity };
std::string_view to_string(LinkKind k);

struct CrossLink {
  std::string from_entity;
  std::string to_entity;
  LinkKind kind = LinkKind::DictionaryGrounding;
  double score = 1.0;

  bool operator==(const CrossLink&) const = default;
};

struct DocumentManifest {
  std::string sha256;
  std::size_t paragraphs = 0;
  bool operator==(const DocumentManifest&) const = default;
};

struct BuildManifest {
  std::map<std::string, DocumentManifest> corpus;  // doc_id -> manifest
  std::string embedder_id;
  std::string ontology_hash;
  std::string dictionary_hash;
  Json config = Json::object();

  bool operator==(const BuildManifest&) const = default;
};

struct KnowledgeGraph {
  BuildManifest manifest;
  std::vector<OntologyLabel> ontology;
  std::vector<Chunk> chunks;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::vector<CrossLink> links;

  bool empty() const { return entities.empty(); }
  const Entity* find_entity(std::string_view id) const;
  const Chunk* find_chunk(std::string_view id) const;
  std::string manifest_hash() const;
};

struct Citation {
  std::string doc_id;
  std::string chunk_id;
  std::string text_excerpt;
  bool operator==(const Citation&) const = default;
};

struct RetrievalItem {
  std::string entity_id;
  std::string name;
  std::string context;
  double score = 0.0;
  std::vector<Citation> citations;
  bool operator==(const RetrievalItem&) const = default;
};

struct RetrievalResult {
  std::vector<RetrievalItem> items;
  bool empty() const { return items.empty(); }
  bool operator==(const RetrievalResult&) const = default;
};

Json to_json(const Citation& c);
Json to_json(const RetrievalResult& r);
RetrievalResult retrieval_result_from_json(const Json& j);

}  // namespace pcosdx
