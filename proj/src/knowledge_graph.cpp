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

#include "pcosdx/knowledge_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pcosdx/errors.hpp"

namespace pcosdx {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// kg_types

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::Bottom: return "bottom";
    case Layer::Middle: return "middle";
    case Layer::Top: return "top";
  }
  return "middle";
}

std::optional<Layer> parse_layer(std::string_view s) {
  if (s == "bottom") return Layer::Bottom;
  if (s == "middle") return Layer::Middle;
  if (s == "top") return Layer::Top;
  return std::nullopt;
}

std::string_view to_string(LinkKind k) {
  return k == LinkKind::DictionaryGrounding ? "dictionary" : "similarity";
}

namespace {

std::optional<LinkKind> parse_link_kind(std::string_view s) {
  if (s == "dictionary") return LinkKind::DictionaryGrounding;
  if (s == "similarity") return LinkKind::EmbeddingSimilarity;
  return std::nullopt;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : normalize_name(name)) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || u >= 0x80) {
      out += c;
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string chunk_id_for(std::string_view doc_id, int ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%03d", ordinal);
  return std::string(doc_id) + buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json parse_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

// Cuts to at most `n` bytes without splitting a UTF-8 sequence.
std::string utf8_prefix(std::string_view s, std::size_t n) {
  if (s.size() <= n) return std::string(s);
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return std::string(s.substr(0, n));
}

}  // namespace

bool Ontology::contains(std::string_view label) const {
  return std::any_of(labels.begin(), labels.end(),
                     [&](const OntologyLabel& l) { return l.label == label; });
}

const Entity* KnowledgeGraph::find_entity(std::string_view id) const {
  auto it = std::lower_bound(entities.begin(), entities.end(), id,
                             [](const Entity& e, std::string_view v) { return e.entity_id < v; });
  if (it != entities.end() && it->entity_id == id) return &*it;
  // Graphs under construction may not be sorted yet.
  for (const auto& e : entities)
    if (e.entity_id == id) return &e;
  return nullptr;
}

const Chunk* KnowledgeGraph::find_chunk(std::string_view id) const {
  for (const auto& c : chunks)
    if (c.chunk_id == id) return &c;
  return nullptr;
}

Json to_json(const Citation& c) {
  return {{"doc_id", c.doc_id}, {"chunk_id", c.chunk_id}, {"text_excerpt", c.text_excerpt}};
}

Json to_json(const RetrievalResult& r) {
  Json items = Json::array();
  for (const auto& it : r.items) {
    Json cites = Json::array();
    for (const auto& c : it.citations) cites.push_back(to_json(c));
    items.push_back({{"entity_id", it.entity_id},
                     {"name", it.name},
                     {"context", it.context},
                     {"score", it.score},
                     {"citations", cites}});
  }
  return {{"items", items}};
}

RetrievalResult retrieval_result_from_json(const Json& j) {
  RetrievalResult r;
  try {
    for (const auto& it : j.at("items")) {
      RetrievalItem item;
      item.entity_id = it.at("entity_id").get<std::string>();
      item.name = it.at("name").get<std::string>();
      item.context = it.at("context").get<std::string>();
      item.score = it.at("score").get<double>();
      for (const auto& c : it.at("citations"))
        item.citations.push_back({c.at("doc_id").get<std::string>(),
                                  c.at("chunk_id").get<std::string>(),
                                  c.at("text_excerpt").get<std::string>()});
      r.items.push_back(std::move(item));
    }
  } catch (const Json::exception& e) {
    throw SchemaError({std::string("retrieval result: ") + e.what()});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Names, ontology, dictionary

std::string normalize_name(std::string_view name) {
  std::string out;
  bool space = false;
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  auto punct = [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) && c != '%' && c != ')' && c != '(';
  };
  std::size_t b = 0, e = out.size();
  while (b < e && punct(out[b])) ++b;
  while (e > b && punct(out[e - 1])) --e;
  return trim(std::string_view(out).substr(b, e - b));
}

std::string entity_id_for(Layer layer, std::string_view type, std::string_view name) {
  switch (layer) {
    case Layer::Bottom: return "d:" + std::string(type) + ":" + slug(name);
    case Layer::Middle: return "m:" + std::string(type) + ":" + slug(name);
    case Layer::Top: return "t:" + slug(name);
  }
  return {};
}

Json to_json(const Ontology& o) {
  Json labels = Json::array();
  for (const auto& l : o.labels) labels.push_back({{"label", l.label}, {"description", l.description}});
  return {{"labels", labels}};
}

Ontology ontology_from_json(const Json& j) {
  Ontology o;
  std::set<std::string> seen;
  try {
    for (const auto& l : j.at("labels")) {
      OntologyLabel label{l.at("label").get<std::string>(), l.value("description", std::string())};
      if (label.label.empty()) throw Error("ontology: empty label");
      if (!seen.insert(label.label).second) throw Error("ontology: duplicate label " + label.label);
      o.labels.push_back(std::move(label));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("ontology: ") + e.what());
  }
  if (o.labels.empty()) throw Error("ontology: no labels");
  return o;
}

Ontology load_ontology(const std::string& path) { return ontology_from_json(parse_file(path)); }

Json to_json(const Dictionary& d) {
  Json entries = Json::array();
  for (const auto& e : d.entries)
    entries.push_back({{"canonical_name", e.canonical_name},
                       {"aliases", e.aliases},
                       {"type", e.type},
                       {"definition", e.definition}});
  return {{"entries", entries}};
}

Dictionary dictionary_from_json(const Json& j, const Ontology& ontology) {
  Dictionary d;
  try {
    for (const auto& e : j.at("entries")) {
      DictionaryEntry entry;
      entry.canonical_name = e.at("canonical_name").get<std::string>();
      entry.aliases = e.value("aliases", std::vector<std::string>{});
      entry.type = e.at("type").get<std::string>();
      entry.definition = e.value("definition", std::string());
      d.entries.push_back(std::move(entry));
    }
  } catch (const Json::exception& e) {
    throw DictionaryError(std::string("dictionary: ") + e.what());
  }
  std::map<std::string, std::size_t> owner;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    const auto& entry = d.entries[i];
    if (normalize_name(entry.canonical_name).empty())
      throw DictionaryError("dictionary: empty canonical name");
    if (!ontology.labels.empty() && !ontology.contains(entry.type))
      throw DictionaryError("dictionary: type '" + entry.type + "' of '" + entry.canonical_name +
                            "' is not in the ontology");
    if (!ids.insert(entity_id_for(Layer::Bottom, entry.type, entry.canonical_name)).second)
      throw DictionaryError("dictionary: duplicate entry " + entry.canonical_name);
    std::vector<std::string> names{entry.canonical_name};
    names.insert(names.end(), entry.aliases.begin(), entry.aliases.end());
    for (const auto& n : names) {
      auto key = normalize_name(n);
      auto [it, inserted] = owner.emplace(key, i);
      if (!inserted && it->second != i)
        throw DictionaryError("dictionary: alias '" + n + "' maps to both '" +
                              d.entries[it->second].canonical_name + "' and '" +
                              entry.canonical_name + "'");
    }
  }
  return d;
}

Dictionary load_dictionary(const std::string& path, const Ontology& ontology) {
  return dictionary_from_json(parse_file(path), ontology);
}

std::optional<std::size_t> lookup_alias(const Dictionary& d, std::string_view name) {
  auto key = normalize_name(name);
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    const auto& e = d.entries[i];
    if (normalize_name(e.canonical_name) == key) return i;
    for (const auto& a : e.aliases)
      if (normalize_name(a) == key) return i;
  }
  return std::nullopt;
}

Entity bottom_entity(const DictionaryEntry& entry) {
  Entity e;
  e.entity_id = entity_id_for(Layer::Bottom, entry.type, entry.canonical_name);
  e.name = entry.canonical_name;
  e.type = entry.type;
  e.context = entry.definition;
  e.layer = Layer::Bottom;
  return e;
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto t = trim(line);
    if (t.empty()) {
      flush();
    } else {
      // Markdown heading markers are layout, not content.
      std::size_t h = 0;
      while (h < t.size() && t[h] == '#') ++h;
      if (h > 0 && h < t.size() && t[h] == ' ') t = trim(std::string_view(t).substr(h));
      if (!current.empty()) current += ' ';
      current += t;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return out;
}

namespace {

// Linear interpolation between closest ranks.
double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(rank));
  auto hi = static_cast<std::size_t>(std::ceil(rank));
  return values[lo] + (values[hi] - values[lo]) * (rank - static_cast<double>(lo));
}

std::string join_paragraphs(std::span<const std::string> paras, std::size_t b, std::size_t e) {
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out += "\n\n";
    out += paras[i];
  }
  return out;
}

}  // namespace

std::vector<Chunk> semantic_chunk(std::string_view doc_id, std::span<const std::string> paragraphs,
                                  const EmbeddingBackend& embedder, const ChunkConfig& cfg) {
  if (paragraphs.empty()) throw Error("document " + std::string(doc_id) + " has no paragraphs");
  std::vector<std::size_t> cuts{0};
  if (paragraphs.size() > 1) {
    auto emb = embedder.embed(paragraphs);
    if (emb.size() != paragraphs.size()) throw EmbedError("embedder returned wrong batch size");
    std::vector<double> sims;
    for (std::size_t i = 0; i + 1 < emb.size(); ++i) sims.push_back(cosine(emb[i], emb[i + 1]));
    double threshold = percentile(sims, cfg.breakpoint_percentile);
    for (std::size_t i = 0; i < sims.size(); ++i)
      if (sims[i] < threshold) cuts.push_back(i + 1);
  }
  cuts.push_back(paragraphs.size());

  std::vector<Chunk> chunks;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    Chunk ch;
    ch.doc_id = std::string(doc_id);
    ch.ordinal = static_cast<int>(c);
    ch.chunk_id = chunk_id_for(doc_id, ch.ordinal);
    ch.para_begin = cuts[c];
    ch.para_end = cuts[c + 1];
    ch.context_begin = ch.para_begin >= cfg.buffer_paragraphs ? ch.para_begin - cfg.buffer_paragraphs : 0;
    ch.context_end = std::min(paragraphs.size(), ch.para_end + cfg.buffer_paragraphs);
    ch.text = join_paragraphs(paragraphs, ch.para_begin, ch.para_end);
    ch.context_text = join_paragraphs(paragraphs, ch.context_begin, ch.context_end);
    chunks.push_back(std::move(ch));
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Extraction

Json to_json(const BuildReport& r) {
  return {{"unmatched_entities", r.unmatched_entities},
          {"dropped_entities", r.dropped_entities},
          {"dropped_relations", r.dropped_relations}};
}

std::vector<Entity> extract_entities(const Chunk& chunk, const Ontology& ontology,
                                     AgentBackend& backend, BuildReport* report,
                                     const CallObserver& observer) {
  if (trim(chunk.text).empty()) return {};
  Json task = {{"chunk_id", chunk.chunk_id}, {"text", chunk.text}, {"context", chunk.context_text}};
  auto prompt = assemble_entity_prompt(task, ontology.labels);
  Json reply = call_json_agent(backend, prompt, observer);
  if (!reply.is_object() || !reply.contains("entities") || !reply["entities"].is_array())
    throw BackendError("entity extraction reply for " + chunk.chunk_id + " lacks an entities array");

  auto drop = [&](const Json& item, const std::string& why) {
    spdlog::warn("dropping entity in {}: {}", chunk.chunk_id, why);
    if (report) report->dropped_entities.push_back({{"chunk_id", chunk.chunk_id}, {"item", item}, {"reason", why}});
  };
  std::string haystack = lower(chunk.text);
  std::vector<Entity> out;
  std::set<std::string> seen;
  for (const auto& item : reply["entities"]) {
    if (!item.is_object() || !item.contains("name") || !item["name"].is_string() ||
        !item.contains("type") || !item["type"].is_string() || !item.contains("context") ||
        !item["context"].is_string()) {
      drop(item, "malformed");
      continue;
    }
    auto name = trim(item["name"].get<std::string>());
    auto type = item["type"].get<std::string>();
    auto context = trim(item["context"].get<std::string>());
    if (normalize_name(name).empty() || context.empty()) {
      drop(item, "empty name or context");
      continue;
    }
    if (!ontology.contains(type)) {
      drop(item, "type '" + type + "' not in ontology");
      continue;
    }
    if (haystack.find(lower(name)) == std::string::npos) {
      drop(item, "name not found in chunk text");
      continue;
    }
    Entity e;
    e.entity_id = entity_id_for(Layer::Middle, type, name);
    if (!seen.insert(e.entity_id).second) continue;
    e.name = name;
    e.type = type;
    e.context = context;
    e.layer = Layer::Middle;
    e.source_chunks = {chunk.chunk_id};
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Relation> extract_relations(const Chunk& chunk, std::span<const Entity> chunk_entities,
                                        AgentBackend& backend, BuildReport* report,
                                        const CallObserver& observer) {
  if (chunk_entities.size() < 2) return {};
  Json ents = Json::array();
  std::set<std::string> ids;
  for (const auto& e : chunk_entities) {
    ents.push_back({{"id", e.entity_id}, {"name", e.name}, {"type", e.type}, {"context", e.context}});
    ids.insert(e.entity_id);
  }
  Json task = {{"chunk_id", chunk.chunk_id}, {"text", chunk.text}, {"entities", ents}};
  Json reply = call_json_agent(backend, assemble_relation_prompt(task), observer);
  if (!reply.is_object() || !reply.contains("relations") || !reply["relations"].is_array())
    throw BackendError("relation extraction reply for " + chunk.chunk_id + " lacks a relations array");

  std::vector<Relation> out;
  for (const auto& item : reply["relations"]) {
    std::string why;
    if (!item.is_object() || !item.contains("head") || !item["head"].is_string() ||
        !item.contains("tail") || !item["tail"].is_string() || !item.contains("relation") ||
        !item["relation"].is_string()) {
      why = "malformed";
    } else if (!ids.count(item["head"].get<std::string>()) || !ids.count(item["tail"].get<std::string>())) {
      why = "endpoint is not an entity of this chunk";
    } else if (item["head"] == item["tail"]) {
      why = "self relation";
    } else if (trim(item["relation"].get<std::string>()).empty()) {
      why = "empty relation label";
    }
    if (!why.empty()) {
      spdlog::warn("dropping relation in {}: {}", chunk.chunk_id, why);
      if (report)
        report->dropped_relations.push_back({{"chunk_id", chunk.chunk_id}, {"item", item}, {"reason", why}});
      continue;
    }
    out.push_back({item["head"].get<std::string>(), trim(item["relation"].get<std::string>()),
                   item["tail"].get<std::string>(), chunk.chunk_id});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

DictionaryLinks link_dictionary(std::span<const Entity> middle, const Dictionary& dict) {
  DictionaryLinks out;
  for (const auto& e : middle) {
    if (e.layer != Layer::Middle) continue;
    auto idx = lookup_alias(dict, e.name);
    if (idx && dict.entries[*idx].type == e.type) {
      out.links.push_back({e.entity_id, bottom_entity(dict.entries[*idx]).entity_id,
                           LinkKind::DictionaryGrounding, 1.0});
    } else {
      out.unmatched.push_back(e.entity_id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Merge

namespace {

bool link_less(const CrossLink& a, const CrossLink& b) {
  return std::tie(a.from_entity, a.to_entity, a.kind, a.score) <
         std::tie(b.from_entity, b.to_entity, b.kind, b.score);
}

bool chunk_less(const Chunk& a, const Chunk& b) {
  return std::tie(a.doc_id, a.ordinal) < std::tie(b.doc_id, b.ordinal);
}

void canonicalize(KnowledgeGraph& g) {
  std::sort(g.chunks.begin(), g.chunks.end(), chunk_less);
  std::sort(g.entities.begin(), g.entities.end(),
            [](const Entity& a, const Entity& b) { return a.entity_id < b.entity_id; });
  std::sort(g.relations.begin(), g.relations.end());
  g.relations.erase(std::unique(g.relations.begin(), g.relations.end()), g.relations.end());
  std::sort(g.links.begin(), g.links.end(), link_less);
  g.links.erase(std::unique(g.links.begin(), g.links.end()), g.links.end());
}

}  // namespace

KnowledgeGraph merge_subgraphs(std::vector<ChunkSubgraph> parts) {
  std::sort(parts.begin(), parts.end(),
            [](const ChunkSubgraph& a, const ChunkSubgraph& b) { return chunk_less(a.chunk, b.chunk); });
  KnowledgeGraph g;
  struct Acc {
    Entity entity;
    std::vector<std::string> contexts;
  };
  std::map<std::string, Acc> merged;
  for (auto& part : parts) {
    auto entities = part.entities;
    std::sort(entities.begin(), entities.end(),
              [](const Entity& a, const Entity& b) { return a.entity_id < b.entity_id; });
    for (auto& e : entities) {
      auto it = merged.find(e.entity_id);
      if (it == merged.end()) {
        Acc acc{e, {e.context}};
        merged.emplace(e.entity_id, std::move(acc));
        continue;
      }
      auto& acc = it->second;
      for (const auto& s : e.source_chunks)
        if (std::find(acc.entity.source_chunks.begin(), acc.entity.source_chunks.end(), s) ==
            acc.entity.source_chunks.end())
          acc.entity.source_chunks.push_back(s);
      if (std::find(acc.contexts.begin(), acc.contexts.end(), e.context) == acc.contexts.end())
        acc.contexts.push_back(e.context);
    }
    for (auto& r : part.relations) g.relations.push_back(r);
    g.chunks.push_back(std::move(part.chunk));
  }
  for (auto& [id, acc] : merged) {
    std::string context;
    for (const auto& c : acc.contexts) {
      if (!context.empty()) context += " | ";
      context += c;
    }
    acc.entity.context = context;
    g.entities.push_back(std::move(acc.entity));
  }
  std::erase_if(g.relations, [&](const Relation& r) {
    return r.head == r.tail || !merged.count(r.head) || !merged.count(r.tail);
  });
  canonicalize(g);
  return g;
}

// ---------------------------------------------------------------------------
// Build

std::vector<CorpusDocument> load_corpus(const std::string& dir) {
  std::vector<CorpusDocument> docs;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("corpus directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    if (ext != ".txt" && ext != ".md") continue;
    docs.push_back({entry.path().stem().string(), read_file(entry.path().string())});
  }
  if (docs.empty()) throw Error("empty corpus: " + dir);
  std::sort(docs.begin(), docs.end(),
            [](const CorpusDocument& a, const CorpusDocument& b) { return a.doc_id < b.doc_id; });
  return docs;
}

BuildResult build_graph(std::span<const CorpusDocument> corpus, const Ontology& ontology,
                        const Dictionary& dict, const EmbeddingBackend& embedder,
                        AgentBackend& backend, const BuildConfig& cfg) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<CorpusDocument> docs(corpus.begin(), corpus.end());
  std::sort(docs.begin(), docs.end(),
            [](const CorpusDocument& a, const CorpusDocument& b) { return a.doc_id < b.doc_id; });

  BuildResult result;
  BuildManifest manifest;
  std::vector<Chunk> chunks;
  for (const auto& doc : docs) {
    if (manifest.corpus.count(doc.doc_id)) throw Error("duplicate document id " + doc.doc_id);
    auto paras = split_paragraphs(doc.text);
    manifest.corpus[doc.doc_id] = {sha256_hex(doc.text), paras.size()};
    auto doc_chunks = semantic_chunk(doc.doc_id, paras, embedder, cfg.chunking);
    chunks.insert(chunks.end(), doc_chunks.begin(), doc_chunks.end());
  }

  auto process = [&](const Chunk& chunk, BuildReport& report) {
    ChunkSubgraph part;
    part.chunk = chunk;
    part.entities = extract_entities(chunk, ontology, backend, &report);
    part.relations = extract_relations(chunk, part.entities, backend, &report);
    return part;
  };

  std::vector<ChunkSubgraph> parts(chunks.size());
  std::vector<BuildReport> reports(chunks.size());
  std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
  for (std::size_t start = 0; start < chunks.size(); start += jobs) {
    std::size_t end = std::min(chunks.size(), start + jobs);
    if (jobs == 1) {
      parts[start] = process(chunks[start], reports[start]);
      continue;
    }
    std::vector<std::future<ChunkSubgraph>> futures;
    for (std::size_t i = start; i < end; ++i)
      futures.push_back(std::async(std::launch::async, process, std::cref(chunks[i]), std::ref(reports[i])));
    for (std::size_t i = start; i < end; ++i) parts[i] = futures[i - start].get();
  }
  for (auto& r : reports) {
    result.report.dropped_entities.insert(result.report.dropped_entities.end(),
                                          r.dropped_entities.begin(), r.dropped_entities.end());
    result.report.dropped_relations.insert(result.report.dropped_relations.end(),
                                           r.dropped_relations.begin(), r.dropped_relations.end());
  }

  KnowledgeGraph g = merge_subgraphs(std::move(parts));
  auto grounding = link_dictionary(g.entities, dict);
  g.links = std::move(grounding.links);
  result.report.unmatched_entities = std::move(grounding.unmatched);
  for (const auto& entry : dict.entries) g.entities.push_back(bottom_entity(entry));

  manifest.embedder_id = embedder.id();
  manifest.ontology_hash = json_hash(to_json(ontology));
  manifest.dictionary_hash = json_hash(to_json(dict));
  manifest.config = {{"breakpoint_percentile", cfg.chunking.breakpoint_percentile},
                     {"buffer_paragraphs", cfg.chunking.buffer_paragraphs},
                     {"extraction_backend", backend.info().id}};
  g.manifest = std::move(manifest);
  g.ontology = ontology.labels;
  canonicalize(g);
  validate_graph(g);
  result.graph = std::move(g);
  return result;
}

// ---------------------------------------------------------------------------
// Validation and persistence

void validate_graph(const KnowledgeGraph& g) {
  auto fail = [](const std::string& msg) { throw GraphError(msg); };
  Ontology ontology{g.ontology};
  std::set<std::string> labels;
  for (const auto& l : g.ontology)
    if (l.label.empty() || !labels.insert(l.label).second) fail("ontology labels must be unique and non-empty");

  std::map<std::string, const Chunk*> chunks;
  std::map<std::string, std::vector<const Chunk*>> by_doc;
  for (std::size_t i = 0; i < g.chunks.size(); ++i) {
    const auto& c = g.chunks[i];
    if (i > 0 && !chunk_less(g.chunks[i - 1], c)) fail("chunks are not in canonical order");
    if (c.chunk_id != chunk_id_for(c.doc_id, c.ordinal)) fail("chunk id mismatch: " + c.chunk_id);
    if (!g.manifest.corpus.count(c.doc_id)) fail("chunk " + c.chunk_id + " from unknown document");
    if (c.para_begin >= c.para_end) fail("chunk " + c.chunk_id + " is empty");
    if (c.context_begin > c.para_begin || c.context_end < c.para_end)
      fail("chunk " + c.chunk_id + " context does not cover its core");
    chunks[c.chunk_id] = &c;
    by_doc[c.doc_id].push_back(&c);
  }
  for (const auto& [doc, manifest] : g.manifest.corpus) {
    auto it = by_doc.find(doc);
    if (it == by_doc.end()) fail("document " + doc + " has no chunks");
    std::size_t next = 0;
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      const Chunk* c = it->second[k];
      if (c->ordinal != static_cast<int>(k) || c->para_begin != next)
        fail("chunks of " + doc + " do not tile the document");
      next = c->para_end;
    }
    if (next != manifest.paragraphs) fail("chunks of " + doc + " do not tile the document");
  }

  std::map<std::string, Layer> layers;
  for (std::size_t i = 0; i < g.entities.size(); ++i) {
    const auto& e = g.entities[i];
    if (i > 0 && !(g.entities[i - 1].entity_id < e.entity_id))
      fail("entities are not unique and sorted by id");
    if (e.name.empty()) fail("entity " + e.entity_id + " has no name");
    if (!ontology.contains(e.type)) fail("entity " + e.entity_id + " has type outside the ontology");
    if (e.entity_id != entity_id_for(e.layer, e.type, e.name))
      fail("entity id malformed: " + e.entity_id);
    if (e.layer == Layer::Bottom) {
      if (!e.source_chunks.empty()) fail("bottom entity " + e.entity_id + " has source chunks");
    } else {
      if (e.source_chunks.empty()) fail("entity " + e.entity_id + " has no source chunk");
      for (const auto& s : e.source_chunks)
        if (!chunks.count(s)) fail("entity " + e.entity_id + " cites unknown chunk " + s);
    }
    layers[e.entity_id] = e.layer;
  }
  for (std::size_t i = 0; i < g.relations.size(); ++i) {
    const auto& r = g.relations[i];
    if (i > 0 && !(g.relations[i - 1] < r)) fail("relations are not unique and sorted");
    if (r.head == r.tail) fail("self relation on " + r.head);
    if (!layers.count(r.head) || !layers.count(r.tail)) fail("relation endpoint missing: " + r.head + " -> " + r.tail);
    if (r.relation_label.empty()) fail("relation without label");
    if (!chunks.count(r.source_chunk)) fail("relation cites unknown chunk " + r.source_chunk);
  }
  for (std::size_t i = 0; i < g.links.size(); ++i) {
    const auto& l = g.links[i];
    if (i > 0 && !link_less(g.links[i - 1], l)) fail("links are not unique and sorted");
    auto from = layers.find(l.from_entity);
    auto to = layers.find(l.to_entity);
    if (from == layers.end() || to == layers.end()) fail("link endpoint missing: " + l.from_entity);
    if (l.kind == LinkKind::DictionaryGrounding &&
        (from->second != Layer::Middle || to->second != Layer::Bottom))
      fail("dictionary link must join middle to bottom");
    if (l.kind == LinkKind::EmbeddingSimilarity &&
        (from->second != Layer::Top || to->second != Layer::Middle))
      fail("similarity link must join top to middle");
  }
}

namespace {

Json manifest_json(const BuildManifest& m) {
  Json corpus = Json::object();
  for (const auto& [doc, dm] : m.corpus) corpus[doc] = {{"sha256", dm.sha256}, {"paragraphs", dm.paragraphs}};
  return {{"corpus", corpus},
          {"embedder_id", m.embedder_id},
          {"ontology_hash", m.ontology_hash},
          {"dictionary_hash", m.dictionary_hash},
          {"config", m.config}};
}

}  // namespace

std::string KnowledgeGraph::manifest_hash() const { return json_hash(manifest_json(manifest)); }

Json to_json(const KnowledgeGraph& g) {
  Json chunks = Json::array();
  for (const auto& c : g.chunks)
    chunks.push_back({{"chunk_id", c.chunk_id},
                      {"doc_id", c.doc_id},
                      {"ordinal", c.ordinal},
                      {"text", c.text},
                      {"para_begin", c.para_begin},
                      {"para_end", c.para_end},
                      {"context_begin", c.context_begin},
                      {"context_end", c.context_end},
                      {"context_text", c.context_text}});
  Json entities = Json::array();
  for (const auto& e : g.entities)
    entities.push_back({{"entity_id", e.entity_id},
                        {"name", e.name},
                        {"type", e.type},
                        {"context", e.context},
                        {"layer", to_string(e.layer)},
                        {"source_chunks", e.source_chunks}});
  Json relations = Json::array();
  for (const auto& r : g.relations)
    relations.push_back({{"head", r.head}, {"relation", r.relation_label}, {"tail", r.tail}, {"source_chunk", r.source_chunk}});
  Json links = Json::array();
  for (const auto& l : g.links)
    links.push_back({{"from", l.from_entity}, {"to", l.to_entity}, {"kind", to_string(l.kind)}, {"score", l.score}});
  return {{"format", "pcosdx.kg"},
          {"version", kGraphFormatVersion},
          {"manifest", manifest_json(g.manifest)},
          {"ontology", to_json(Ontology{g.ontology})["labels"]},
          {"chunks", chunks},
          {"entities", entities},
          {"relations", relations},
          {"links", links}};
}

KnowledgeGraph graph_from_json(const Json& j) {
  KnowledgeGraph g;
  try {
    if (j.at("format") != "pcosdx.kg") throw GraphError("not a knowledge graph file");
    if (j.at("version") != kGraphFormatVersion)
      throw GraphError("unsupported graph version " + j.at("version").dump());
    const auto& m = j.at("manifest");
    for (const auto& [doc, dm] : m.at("corpus").items())
      g.manifest.corpus[doc] = {dm.at("sha256").get<std::string>(), dm.at("paragraphs").get<std::size_t>()};
    g.manifest.embedder_id = m.at("embedder_id").get<std::string>();
    g.manifest.ontology_hash = m.at("ontology_hash").get<std::string>();
    g.manifest.dictionary_hash = m.at("dictionary_hash").get<std::string>();
    g.manifest.config = m.at("config");
    g.ontology = ontology_from_json({{"labels", j.at("ontology")}}).labels;
    for (const auto& c : j.at("chunks")) {
      Chunk ch;
      ch.chunk_id = c.at("chunk_id").get<std::string>();
      ch.doc_id = c.at("doc_id").get<std::string>();
      ch.ordinal = c.at("ordinal").get<int>();
      ch.text = c.at("text").get<std::string>();
      ch.para_begin = c.at("para_begin").get<std::size_t>();
      ch.para_end = c.at("para_end").get<std::size_t>();
      ch.context_begin = c.at("context_begin").get<std::size_t>();
      ch.context_end = c.at("context_end").get<std::size_t>();
      ch.context_text = c.at("context_text").get<std::string>();
      g.chunks.push_back(std::move(ch));
    }
    for (const auto& e : j.at("entities")) {
      Entity ent;
      ent.entity_id = e.at("entity_id").get<std::string>();
      ent.name = e.at("name").get<std::string>();
      ent.type = e.at("type").get<std::string>();
      ent.context = e.at("context").get<std::string>();
      auto layer = parse_layer(e.at("layer").get<std::string>());
      if (!layer) throw GraphError("unknown layer for " + ent.entity_id);
      ent.layer = *layer;
      ent.source_chunks = e.at("source_chunks").get<std::vector<std::string>>();
      g.entities.push_back(std::move(ent));
    }
    for (const auto& r : j.at("relations"))
      g.relations.push_back({r.at("head").get<std::string>(), r.at("relation").get<std::string>(),
                             r.at("tail").get<std::string>(), r.at("source_chunk").get<std::string>()});
    for (const auto& l : j.at("links")) {
      auto kind = parse_link_kind(l.at("kind").get<std::string>());
      if (!kind) throw GraphError("unknown link kind");
      g.links.push_back({l.at("from").get<std::string>(), l.at("to").get<std::string>(), *kind,
                         l.at("score").get<double>()});
    }
  } catch (const Json::exception& e) {
    throw GraphError(std::string("malformed graph: ") + e.what());
  } catch (const GraphError&) {
    throw;
  } catch (const Error& e) {
    throw GraphError(std::string("malformed graph: ") + e.what());
  }
  validate_graph(g);
  return g;
}

std::string serialize_graph(const KnowledgeGraph& g) { return pretty_dump(to_json(g)); }

void save_graph(const KnowledgeGraph& g, const std::string& path) {
  auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp);
    out << serialize_graph(g);
    if (!out) throw StorageError("short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot move graph into place at " + path + ": " + ec.message());
}

KnowledgeGraph load_graph(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw GraphError(path + ": " + e.what());
  }
  return graph_from_json(j);
}

// ---------------------------------------------------------------------------
// Retrieval

std::string entity_text(const Entity& e) { return e.name + ". " + e.context; }

RetrievalIndex::RetrievalIndex(const KnowledgeGraph& graph, const EmbeddingBackend& embedder)
    : graph_(&graph), embedder_(&embedder) {
  std::map<std::string, std::size_t> position;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < graph.entities.size(); ++i) {
    const auto& e = graph.entities[i];
    if (e.layer != Layer::Middle) continue;
    position[e.entity_id] = middle_.size();
    middle_.push_back(i);
    texts.push_back(entity_text(e));
  }
  if (!texts.empty()) embeddings_ = embedder.embed(texts);
  if (embeddings_.size() != middle_.size()) throw EmbedError("embedder returned wrong batch size");

  is_concept_.assign(middle_.size(), false);
  bool any = false;
  for (const auto& l : graph.links) {
    if (l.kind != LinkKind::DictionaryGrounding) continue;
    auto it = position.find(l.from_entity);
    if (it != position.end()) {
      is_concept_[it->second] = true;
      any = true;
    }
  }
  if (!any) is_concept_.assign(middle_.size(), true);

  neighbours_.assign(middle_.size(), {});
  for (const auto& r : graph.relations) {
    auto h = position.find(r.head);
    auto t = position.find(r.tail);
    if (h == position.end() || t == position.end()) continue;
    neighbours_[h->second].push_back(t->second);
    neighbours_[t->second].push_back(h->second);
  }
  for (auto& n : neighbours_) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
}

std::vector<Citation> entity_citations(const KnowledgeGraph& graph, const Entity& e) {
  std::vector<Citation> out;
  auto needle = lower(e.name);
  for (const auto& chunk_id : e.source_chunks) {
    const Chunk* c = graph.find_chunk(chunk_id);
    if (!c) continue;
    // The sentence holding the mention; sentences end at ". " or a newline.
    std::string excerpt;
    auto hay = lower(c->text);
    auto at = hay.find(needle);
    if (at != std::string::npos) {
      std::size_t b = 0;
      for (std::size_t i = at; i > 0; --i) {
        if (c->text[i - 1] == '\n' || (i >= 2 && c->text[i - 2] == '.' && c->text[i - 1] == ' ')) {
          b = i;
          break;
        }
      }
      std::size_t e2 = c->text.size();
      for (std::size_t i = at + needle.size(); i < c->text.size(); ++i) {
        if (c->text[i] == '\n' || (c->text[i] == '.' && (i + 1 == c->text.size() || c->text[i + 1] == ' '))) {
          e2 = c->text[i] == '.' ? i + 1 : i;
          break;
        }
      }
      excerpt = trim(std::string_view(c->text).substr(b, e2 - b));
    }
    if (excerpt.empty()) excerpt = c->text;
    out.push_back({c->doc_id, c->chunk_id, utf8_prefix(excerpt, 400)});
  }
  return out;
}

RetrievalResult RetrievalIndex::retrieve(std::string_view query, std::size_t k) const {
  if (middle_.empty()) throw EmptyGraph("knowledge graph has no guideline entities");
  RetrievalResult result;
  if (k == 0) return result;
  Embedding q = embedder_->embed_one(std::string(query));
  std::vector<double> sims(middle_.size());
  for (std::size_t i = 0; i < middle_.size(); ++i) sims[i] = round_score(cosine(q, embeddings_[i]));

  auto id_of = [&](std::size_t pos) -> const std::string& { return graph_->entities[middle_[pos]].entity_id; };
  auto better = [&](std::size_t a, double sa, std::size_t b, double sb) {
    if (sa != sb) return sa > sb;
    return id_of(a) < id_of(b);
  };

  std::vector<std::size_t> concepts;
  for (std::size_t i = 0; i < middle_.size(); ++i)
    if (is_concept_[i]) concepts.push_back(i);
  std::sort(concepts.begin(), concepts.end(),
            [&](std::size_t a, std::size_t b) { return better(a, sims[a], b, sims[b]); });
  concepts.resize(std::min(concepts.size(), concept_fanout(k)));

  std::map<std::size_t, double> inherited;
  auto offer = [&](std::size_t pos, double s) {
    auto [it, inserted] = inherited.emplace(pos, s);
    if (!inserted) it->second = std::max(it->second, s);
  };
  for (auto c : concepts) {
    offer(c, sims[c]);
    for (auto n : neighbours_[c]) offer(n, sims[c]);
  }

  std::vector<std::pair<std::size_t, double>> scored;
  for (const auto& [pos, inh] : inherited) scored.emplace_back(pos, round_score(0.5 * inh + 0.5 * sims[pos]));
  std::sort(scored.begin(), scored.end(),
            [&](const auto& a, const auto& b) { return better(a.first, a.second, b.first, b.second); });
  if (scored.size() > k) scored.resize(k);
  for (const auto& [pos, score] : scored) {
    const auto& e = graph_->entities[middle_[pos]];
    result.items.push_back({e.entity_id, e.name, e.context, score, entity_citations(*graph_, e)});
  }
  return result;
}

std::vector<CrossLink> RetrievalIndex::link_top(std::span<const Entity> top, std::size_t k,
                                                double min_score) const {
  if (middle_.empty()) throw EmptyGraph("knowledge graph has no guideline entities");
  std::vector<CrossLink> out;
  if (top.empty() || k == 0) return out;
  std::vector<std::string> texts;
  for (const auto& t : top) texts.push_back(entity_text(t));
  auto embs = embedder_->embed(texts);
  if (embs.size() != top.size()) throw EmbedError("embedder returned wrong batch size");
  for (std::size_t t = 0; t < top.size(); ++t) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < middle_.size(); ++i) {
      double s = round_score(cosine(embs[t], embeddings_[i]));
      if (s >= min_score) scored.emplace_back(s, i);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return graph_->entities[middle_[a.second]].entity_id < graph_->entities[middle_[b.second]].entity_id;
    });
    if (scored.size() > k) scored.resize(k);
    for (const auto& [s, i] : scored)
      out.push_back({top[t].entity_id, graph_->entities[middle_[i]].entity_id, LinkKind::EmbeddingSimilarity, s});
  }
  std::sort(out.begin(), out.end(), link_less);
  return out;
}

RetrievalResult u_retrieve(std::string_view query, const KnowledgeGraph& graph,
                           const EmbeddingBackend& embedder, std::size_t k) {
  return RetrievalIndex(graph, embedder).retrieve(query, k);
}

std::vector<CrossLink> link_ehr(std::span<const Entity> top_entities, const KnowledgeGraph& graph,
                                const EmbeddingBackend& embedder, std::size_t k, double min_score) {
  return RetrievalIndex(graph, embedder).link_top(top_entities, k, min_score);
}

}  // namespace pcosdx
