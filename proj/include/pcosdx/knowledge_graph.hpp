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

// Knowledge graph construction and retrieval.
//
// Build pipeline per document: paragraphs -> semantic chunks -> per-chunk
// entity extraction (ontology constrained) -> per-chunk relation extraction
// -> merge -> dictionary grounding. Everything is ordered canonically so the
// same corpus, configuration and embedder give a byte-identical graph file.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcosdx/agent.hpp"
#include "pcosdx/embedding.hpp"
#include "pcosdx/kg_types.hpp"

namespace pcosdx {

// Lowercase, whitespace collapsed, leading/trailing punctuation removed.
std::string normalize_name(std::string_view name);
std::string entity_id_for(Layer layer, std::string_view type, std::string_view name);

Json to_json(const Ontology& o);
Ontology ontology_from_json(const Json& j);
Ontology load_ontology(const std::string& path);

Json to_json(const Dictionary& d);
// Rejects dictionaries whose alias map is not functional after
// normalization, or whose types are outside `ontology` (when non-empty).
Dictionary dictionary_from_json(const Json& j, const Ontology& ontology = {});
Dictionary load_dictionary(const std::string& path, const Ontology& ontology = {});
// Index of the entry whose canonical name or alias normalizes to `name`.
std::optional<std::size_t> lookup_alias(const Dictionary& d, std::string_view name);
Entity bottom_entity(const DictionaryEntry& entry);

struct ChunkConfig {
  double breakpoint_percentile = 25.0;
  std::size_t buffer_paragraphs = 1;
};

std::vector<std::string> split_paragraphs(std::string_view text);

// Throws EmbedError on backend failure, Error on an empty document.
std::vector<Chunk> semantic_chunk(std::string_view doc_id, std::span<const std::string> paragraphs,
                                  const EmbeddingBackend& embedder, const ChunkConfig& cfg = {});

// Things dropped or left unlinked during a build.
struct BuildReport {
  std::vector<std::string> unmatched_entities;
  std::vector<Json> dropped_entities;
  std::vector<Json> dropped_relations;
};
Json to_json(const BuildReport& r);

std::vector<Entity> extract_entities(const Chunk& chunk, const Ontology& ontology,
                                     AgentBackend& backend, BuildReport* report = nullptr,
                                     const CallObserver& observer = {});

std::vector<Relation> extract_relations(const Chunk& chunk, std::span<const Entity> chunk_entities,
                                        AgentBackend& backend, BuildReport* report = nullptr,
                                        const CallObserver& observer = {});

struct DictionaryLinks {
  std::vector<CrossLink> links;
  std::vector<std::string> unmatched;  // Middle entity ids
};
DictionaryLinks link_dictionary(std::span<const Entity> middle, const Dictionary& dict);

struct ChunkSubgraph {
  Chunk chunk;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
};
KnowledgeGraph merge_subgraphs(std::vector<ChunkSubgraph> parts);

struct CorpusDocument {
  std::string doc_id;
  std::string text;
};
// Every .txt/.md file directly under `dir`, sorted by name. Throws Error
// ("empty corpus") when there is none.
std::vector<CorpusDocument> load_corpus(const std::string& dir);

struct BuildConfig {
  ChunkConfig chunking;
  std::size_t jobs = 1;
};

struct BuildResult {
  KnowledgeGraph graph;
  BuildReport report;
};

BuildResult build_graph(std::span<const CorpusDocument> corpus, const Ontology& ontology,
                        const Dictionary& dict, const EmbeddingBackend& embedder,
                        AgentBackend& backend, const BuildConfig& cfg = {});

// Throws GraphError on any invariant violation (provenance, layer
// discipline, canonical order).
void validate_graph(const KnowledgeGraph& g);

Json to_json(const KnowledgeGraph& g);
KnowledgeGraph graph_from_json(const Json& j);
std::string serialize_graph(const KnowledgeGraph& g);
void save_graph(const KnowledgeGraph& g, const std::string& path);
KnowledgeGraph load_graph(const std::string& path);

// Precomputed embeddings and adjacency over the Middle layer. The graph and
// embedder must outlive the index. Safe for concurrent queries.
class RetrievalIndex {
 public:
  RetrievalIndex(const KnowledgeGraph& graph, const EmbeddingBackend& embedder);

  // Two stages: rank dictionary-grounded Middle entities (the concept set;
  // all Middle entities when nothing is grounded) against the query, then
  // expand one hop along relations and re-score each candidate as the mean
  // of its best concept score and its own similarity. Ties break by
  // ascending entity id. Throws EmptyGraph, EmbedError.
  RetrievalResult retrieve(std::string_view query, std::size_t k) const;

  // Top-k Middle entities per Top entity, score >= min_score.
  std::vector<CrossLink> link_top(std::span<const Entity> top, std::size_t k,
                                  double min_score) const;

  const KnowledgeGraph& graph() const { return *graph_; }
  std::size_t concept_fanout(std::size_t k) const { return std::max<std::size_t>(k, 5); }

 private:
  const KnowledgeGraph* graph_;
  const EmbeddingBackend* embedder_;
  std::vector<std::size_t> middle_;  // indices into graph.entities
  std::vector<Embedding> embeddings_;
  std::vector<bool> is_concept_;
  std::vector<std::vector<std::size_t>> neighbours_;  // positions in middle_
};

RetrievalResult u_retrieve(std::string_view query, const KnowledgeGraph& graph,
                           const EmbeddingBackend& embedder, std::size_t k);

std::vector<CrossLink> link_ehr(std::span<const Entity> top_entities, const KnowledgeGraph& graph,
                                const EmbeddingBackend& embedder, std::size_t k, double min_score);

// One citation per source chunk; the excerpt is the sentence that mentions
// the entity, or the chunk text when no sentence does.
std::vector<Citation> entity_citations(const KnowledgeGraph& graph, const Entity& e);

// Text embedded for an entity: "<name>. <context>".
std::string entity_text(const Entity& e);

}  // namespace pcosdx
