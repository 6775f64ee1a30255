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


#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pcosdx/backends.hpp"
#include "pcosdx/canonical.hpp"
#include "pcosdx/errors.hpp"
#include "pcosdx/knowledge_graph.hpp"
#include "support.hpp"

namespace pcosdx {
namespace {

namespace fs = std::filesystem;
using testing::data_path;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json golden(const std::string& name) { return Json::parse(slurp(data_path("golden/" + name))); }

// Returns one fixed reply for every prompt.
class FixedBackend : public AgentBackend {
 public:
  explicit FixedBackend(Json reply) : reply_(canonical_dump(reply)) {}
  BackendInfo info() const override { return {"fixed", BackendKind::RuleOracle, std::nullopt}; }
  Completion complete(const PromptSpec&) override { return {reply_, {}}; }

 private:
  std::string reply_;
};

// Every text embeds to the same unit vector.
class ConstantEmbedder : public EmbeddingBackend {
 public:
  std::string id() const override { return "constant"; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override {
    Embedding e(8, 0.0f);
    e[0] = 1.0f;
    return std::vector<Embedding>(texts.size(), e);
  }
};

struct Fixture {
  Ontology ontology = load_ontology(data_path("kg/ontology.json"));
  Dictionary dict = load_dictionary(data_path("kg/dictionary.json"), ontology);
  HashEmbedder embedder;
  RuleOracleBackend backend{testing::shipped_thresholds(), load_lexicon(data_path("kg/lexicon.json"))};
  std::vector<CorpusDocument> corpus = load_corpus(data_path("corpus"));

  BuildResult build(std::size_t jobs = 1) {
    BuildConfig cfg;
    cfg.jobs = jobs;
    return build_graph(corpus, ontology, dict, embedder, backend, cfg);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

const KnowledgeGraph& bundled() {
  static KnowledgeGraph g = load_graph(data_path("kg/kg.json"));
  return g;
}

Entity middle(const std::string& name, const std::string& type, const std::string& chunk) {
  return {entity_id_for(Layer::Middle, type, name), name, type, name + " context", Layer::Middle, {chunk}};
}

TEST(Names, Normalization) {
  EXPECT_EQ(normalize_name("  Polycystic   Ovaries. "), "polycystic ovaries");
  EXPECT_EQ(normalize_name("PCO"), "pco");
  EXPECT_EQ(normalize_name("\"Hirsutism\","), "hirsutism");
  EXPECT_EQ(entity_id_for(Layer::Middle, "Symptom", "Irregular Cycles"), "m:Symptom:irregular_cycles");
  EXPECT_EQ(entity_id_for(Layer::Bottom, "Condition", "NCCAH"), "d:Condition:nccah");
}

TEST(Dictionary, AliasMapIsFunctional) {
  const auto& d = fixture().dict;
  std::map<std::string, std::size_t> owner;
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    std::vector<std::string> names{d.entries[i].canonical_name};
    names.insert(names.end(), d.entries[i].aliases.begin(), d.entries[i].aliases.end());
    for (const auto& n : names) {
      auto [it, inserted] = owner.emplace(normalize_name(n), i);
      EXPECT_TRUE(inserted || it->second == i) << n;
      ASSERT_EQ(lookup_alias(d, n), i) << n;
    }
  }
}

TEST(Dictionary, DuplicateAliasRejected) {
  Json j = {{"entries",
             {{{"canonical_name", "Polycystic Ovarian Morphology"}, {"aliases", {"PCO"}}, {"type", "ImagingFeature"}},
              {{"canonical_name", "Polycystic ovary"}, {"aliases", {"pco."}}, {"type", "ImagingFeature"}}}}};
  EXPECT_THROW(dictionary_from_json(j), DictionaryError);
}

TEST(Dictionary, TypeOutsideOntologyRejected) {
  Json j = {{"entries", {{{"canonical_name", "X"}, {"type", "Gene"}}}}};
  EXPECT_THROW(dictionary_from_json(j, fixture().ontology), DictionaryError);
}

TEST(LinkDictionary, AliasAndTypeConstraint) {
  const auto& d = fixture().dict;
  auto pco = middle("PCO", "ImagingFeature", "doc#000");
  auto links = link_dictionary(std::vector<Entity>{pco}, d);
  ASSERT_EQ(links.links.size(), 1u);
  EXPECT_EQ(links.links[0].to_entity, "d:ImagingFeature:polycystic_ovarian_morphology");
  EXPECT_EQ(links.links[0].kind, LinkKind::DictionaryGrounding);

  auto wrong_type = middle("PCO", "Treatment", "doc#000");
  auto nothing = middle("ovarian drilling", "Treatment", "doc#000");
  links = link_dictionary(std::vector<Entity>{wrong_type, nothing}, d);
  EXPECT_TRUE(links.links.empty());
  EXPECT_EQ(links.unmatched, (std::vector<std::string>{wrong_type.entity_id, nothing.entity_id}));
}

TEST(Chunking, TrivialDocuments) {
  HashEmbedder h;
  std::vector<std::string> one{"Only paragraph."};
  auto c = semantic_chunk("doc", one, h);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].chunk_id, "doc#000");
  EXPECT_EQ(c[0].para_begin, 0u);
  EXPECT_EQ(c[0].para_end, 1u);

  ConstantEmbedder k;
  std::vector<std::string> many{"a", "b", "c", "d", "e"};
  c = semantic_chunk("doc", many, k);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].para_end, 5u);
}

TEST(Chunking, BufferWidensContext) {
  auto paras = split_paragraphs(fixture().corpus[0].text);
  ChunkConfig cfg;
  cfg.buffer_paragraphs = 2;
  auto chunks = semantic_chunk("doc", paras, fixture().embedder, cfg);
  for (const auto& c : chunks) {
    EXPECT_EQ(c.context_begin, c.para_begin >= 2 ? c.para_begin - 2 : 0);
    EXPECT_EQ(c.context_end, std::min(paras.size(), c.para_end + 2));
  }
}

TEST(Chunking, MatchesGoldenBoundaries) {
  Json g = golden("chunk_boundaries.json");
  ASSERT_EQ(g.size(), fixture().corpus.size());
  for (const auto& doc : fixture().corpus) {
    auto paras = split_paragraphs(doc.text);
    auto chunks = semantic_chunk(doc.doc_id, paras, fixture().embedder);
    Json got = Json::array();
    std::size_t next = 0;
    for (const auto& c : chunks) {
      EXPECT_EQ(c.para_begin, next) << c.chunk_id;
      next = c.para_end;
      got.push_back({c.para_begin, c.para_end});
    }
    EXPECT_EQ(next, paras.size());
    EXPECT_EQ(got, g.at(doc.doc_id)) << doc.doc_id;
  }
}

TEST(Chunking, GuidelineExcerptHasTwelveParagraphs) {
  auto it = std::find_if(fixture().corpus.begin(), fixture().corpus.end(),
                         [](const CorpusDocument& d) { return d.doc_id == "diagnosis"; });
  ASSERT_NE(it, fixture().corpus.end());
  EXPECT_EQ(split_paragraphs(it->text).size(), 13u);  // heading plus twelve
}

TEST(ExtractEntities, RuleOracleKeywords) {
  Chunk c;
  c.chunk_id = "t#000";
  c.doc_id = "t";
  c.text = "Irregular cycles are defined as fewer than 8 cycles per year.";
  c.context_text = c.text;
  auto es = extract_entities(c, fixture().ontology, fixture().backend);
  auto it = std::find_if(es.begin(), es.end(), [](const Entity& e) { return e.name == "Irregular cycles"; });
  ASSERT_NE(it, es.end());
  EXPECT_EQ(it->type, "Symptom");
  EXPECT_EQ(it->entity_id, "m:Symptom:irregular_cycles");
  EXPECT_NE(it->context.find("8 cycles per year"), std::string::npos);
  EXPECT_EQ(it->source_chunks, std::vector<std::string>{"t#000"});
}

TEST(ExtractEntities, EmptyChunkAndValidation) {
  Chunk empty;
  empty.chunk_id = "t#000";
  EXPECT_TRUE(extract_entities(empty, fixture().ontology, fixture().backend).empty());

  Chunk c;
  c.chunk_id = "t#001";
  c.text = "Hirsutism is common.";
  FixedBackend b(Json{{"entities",
                       {{{"name", "Hirsutism"}, {"type", "Gene"}, {"context", "x"}},
                        {{"name", "Acne"}, {"type", "Symptom"}, {"context", "not in text"}},
                        {{"name", "Hirsutism"}, {"type", "Symptom"}, {"context", "excess hair"}}}}});
  BuildReport report;
  auto es = extract_entities(c, fixture().ontology, b, &report);
  ASSERT_EQ(es.size(), 1u);
  EXPECT_EQ(es[0].entity_id, "m:Symptom:hirsutism");
  EXPECT_EQ(report.dropped_entities.size(), 2u);
}

TEST(ExtractRelations, HirsutismIndicatesClinicalHyperandrogenism) {
  Chunk c;
  c.chunk_id = "t#000";
  c.text = "Hirsutism indicates clinical hyperandrogenism.";
  std::vector<Entity> es{middle("Hirsutism", "Symptom", "t#000"),
                         middle("clinical hyperandrogenism", "Criterion", "t#000")};
  auto rs = extract_relations(c, es, fixture().backend);
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0], (Relation{"m:Symptom:hirsutism", "indicates", "m:Criterion:clinical_hyperandrogenism", "t#000"}));
}

TEST(ExtractRelations, FewEntitiesAndForeignEndpoints) {
  Chunk c;
  c.chunk_id = "t#000";
  c.text = "Hirsutism indicates clinical hyperandrogenism.";
  std::vector<Entity> one{middle("Hirsutism", "Symptom", "t#000")};
  EXPECT_TRUE(extract_relations(c, one, fixture().backend).empty());
  EXPECT_TRUE(extract_relations(c, {}, fixture().backend).empty());

  std::vector<Entity> two{one[0], middle("clinical hyperandrogenism", "Criterion", "t#000")};
  FixedBackend b(Json{{"relations",
                       {{{"head", "m:Symptom:hirsutism"}, {"relation", "indicates"}, {"tail", "m:Condition:elsewhere"}},
                        {{"head", "m:Symptom:hirsutism"}, {"relation", "x"}, {"tail", "m:Symptom:hirsutism"}}}}});
  BuildReport report;
  EXPECT_TRUE(extract_relations(c, two, b, &report).empty());
  EXPECT_EQ(report.dropped_relations.size(), 2u);
}

TEST(Merge, DedupAndUnion) {
  ChunkSubgraph a{{"a#000", "a", 0, "x", 0, 1, 0, 1, "x"}, {middle("Acne", "Symptom", "a#000")}, {}};
  ChunkSubgraph b{{"b#000", "b", 0, "y", 0, 1, 0, 1, "y"}, {middle("acne.", "Symptom", "b#000")}, {}};
  b.entities[0].context = "other";
  auto g = merge_subgraphs({b, a});
  ASSERT_EQ(g.entities.size(), 1u);
  EXPECT_EQ(g.entities[0].source_chunks, (std::vector<std::string>{"a#000", "b#000"}));
  EXPECT_NE(g.entities[0].context.find("other"), std::string::npos);

  ChunkSubgraph c{{"c#000", "c", 0, "z", 0, 1, 0, 1, "z"},
                  {middle("Hirsutism", "Symptom", "c#000"), middle("TSH", "LabMarker", "c#000")},
                  {}};
  g = merge_subgraphs({a, c});
  EXPECT_EQ(g.entities.size(), 3u);
  EXPECT_EQ(g.chunks.size(), 2u);
}

TEST(Build, DeterministicAndMatchesBundledGraph) {
  auto first = serialize_graph(fixture().build(1).graph);
  auto second = serialize_graph(fixture().build(1).graph);
  auto parallel = serialize_graph(fixture().build(4).graph);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, parallel);
  EXPECT_EQ(first, slurp(data_path("kg/kg.json")));
}

TEST(Build, ProvenanceClosure) {
  const auto& g = bundled();
  EXPECT_NO_THROW(validate_graph(g));
  for (const auto& e : g.entities) {
    if (e.layer == Layer::Bottom) continue;
    ASSERT_FALSE(e.source_chunks.empty());
    for (const auto& s : e.source_chunks) EXPECT_NE(g.find_chunk(s), nullptr) << e.entity_id;
    for (const auto& cit : entity_citations(g, e)) {
      const Chunk* c = g.find_chunk(cit.chunk_id);
      ASSERT_NE(c, nullptr);
      EXPECT_NE(c->text.find(cit.text_excerpt), std::string::npos) << e.entity_id;
    }
  }
  for (const auto& r : g.relations) {
    EXPECT_NE(g.find_chunk(r.source_chunk), nullptr);
    EXPECT_NE(g.find_entity(r.head), nullptr);
    EXPECT_NE(g.find_entity(r.tail), nullptr);
  }
  EXPECT_EQ(g.manifest.embedder_id, fixture().embedder.id());
}

TEST(Build, ExpectedClinicalRelations) {
  const auto& g = bundled();
  auto has = [&](const Relation& r) { return std::find(g.relations.begin(), g.relations.end(), r) != g.relations.end(); };
  EXPECT_TRUE(has({"m:Symptom:hirsutism", "indicates", "m:Criterion:clinical_hyperandrogenism", "diagnosis#001"}));
  EXPECT_TRUE(has({"m:Symptom:irregular_menstrual_cycles", "defined_by", "m:Threshold:cycle_length", "diagnosis#000"}));
}

TEST(Build, LayerDisciplineEnforcedOnLoad) {
  Json j = to_json(bundled());
  j["links"].insert(j["links"].begin(),
                    Json{{"from", "d:Condition:nccah"}, {"to", "m:Condition:nccah"}, {"kind", "dictionary"}, {"score", 1.0}});
  EXPECT_THROW(graph_from_json(j), GraphError);
}

TEST(Build, PersistenceRoundTrip) {
  auto dir = fs::temp_directory_path() / "pcosdx_kg_test";
  fs::create_directories(dir);
  auto path = (dir / "kg.json").string();
  save_graph(bundled(), path);
  auto back = load_graph(path);
  EXPECT_EQ(serialize_graph(back), serialize_graph(bundled()));
  fs::remove_all(dir);
}

TEST(Build, EmptyCorpusRejected) {
  auto dir = fs::temp_directory_path() / "pcosdx_empty_corpus";
  fs::create_directories(dir);
  EXPECT_THROW(load_corpus(dir.string()), Error);
  fs::remove_all(dir);
}

TEST(Retrieval, MatchesGolden) {
  RetrievalIndex index(bundled(), fixture().embedder);
  for (const auto& q : golden("retrieval.json")) {
    auto r = index.retrieve(q.at("query").get<std::string>(), q.at("k").get<std::size_t>());
    ASSERT_EQ(r.items.size(), q.at("items").size()) << q.at("query");
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      EXPECT_EQ(r.items[i].entity_id, q["items"][i].at("entity_id")) << q.at("query") << " #" << i;
      EXPECT_NEAR(r.items[i].score, q["items"][i].at("score").get<double>(), 1e-9);
    }
  }
}

TEST(Retrieval, CycleDefinitionCitesItsChunk) {
  auto r = u_retrieve("irregular menstrual cycle definition", bundled(), fixture().embedder, 5);
  auto it = std::find_if(r.items.begin(), r.items.end(),
                         [](const RetrievalItem& i) { return i.entity_id == "m:Threshold:cycle_length"; });
  ASSERT_NE(it, r.items.end());
  ASSERT_FALSE(it->citations.empty());
  EXPECT_EQ(it->citations[0].chunk_id, "diagnosis#000");
  EXPECT_NE(it->citations[0].text_excerpt.find("cycle length"), std::string::npos);
}

TEST(Retrieval, Invariants) {
  RetrievalIndex index(bundled(), fixture().embedder);
  const char* queries[] = {"acne", "thyroid stimulating hormone", "metformin insulin", "ovarian volume", "xyz"};
  for (const char* q : queries) {
    for (std::size_t k : {1u, 3u, 7u}) {
      auto r = index.retrieve(q, k);
      EXPECT_LE(r.items.size(), k);
      for (std::size_t i = 0; i < r.items.size(); ++i) {
        EXPECT_FALSE(r.items[i].citations.empty()) << q;
        if (i > 0) {
          EXPECT_GE(r.items[i - 1].score, r.items[i].score);
          if (r.items[i - 1].score == r.items[i].score) EXPECT_LT(r.items[i - 1].entity_id, r.items[i].entity_id);
        }
      }
    }
  }
  EXPECT_TRUE(index.retrieve("acne", 0).empty());
}

TEST(Retrieval, ExactEntityTextRanksFirst) {
  RetrievalIndex index(bundled(), fixture().embedder);
  for (const auto& e : bundled().entities) {
    if (e.layer != Layer::Middle) continue;
    bool grounded = std::any_of(bundled().links.begin(), bundled().links.end(),
                                [&](const CrossLink& l) { return l.from_entity == e.entity_id; });
    if (!grounded) continue;
    auto r = index.retrieve(entity_text(e), 1);
    ASSERT_EQ(r.items.size(), 1u);
    EXPECT_EQ(r.items[0].entity_id, e.entity_id);
  }
}

TEST(Retrieval, StableUnderEntityPermutation) {
  std::mt19937_64 rng(77);
  RetrievalIndex ref(bundled(), fixture().embedder);
  for (int trial = 0; trial < 5; ++trial) {
    KnowledgeGraph g = bundled();
    std::shuffle(g.entities.begin(), g.entities.end(), rng);
    std::shuffle(g.relations.begin(), g.relations.end(), rng);
    std::shuffle(g.links.begin(), g.links.end(), rng);
    RetrievalIndex index(g, fixture().embedder);
    for (const char* q : {"hirsutism", "prolactin", "irregular menstrual cycle definition"})
      EXPECT_EQ(index.retrieve(q, 5), ref.retrieve(q, 5)) << q;
  }
}

TEST(Retrieval, EmptyGraph) {
  KnowledgeGraph g;
  EXPECT_THROW(u_retrieve("x", g, fixture().embedder, 3), EmptyGraph);
  EXPECT_THROW(link_ehr({}, g, fixture().embedder, 3, 0.0), EmptyGraph);
}

TEST(LinkEhr, MatchesGolden) {
  RetrievalIndex index(bundled(), fixture().embedder);
  for (const auto& fx : golden("ehr_links.json")) {
    Entity t;
    t.name = fx.at("name").get<std::string>();
    t.context = fx.at("context").get<std::string>();
    t.type = "Symptom";
    t.layer = Layer::Top;
    t.entity_id = entity_id_for(Layer::Top, t.type, t.name);
    t.source_chunks = {"ehr:test"};
    auto links = index.link_top(std::vector<Entity>{t}, fx.at("k").get<std::size_t>(), fx.at("min_score").get<double>());
    ASSERT_EQ(links.size(), fx.at("items").size()) << t.name;
    // link_top returns links ordered by target id; the golden is ranked.
    std::sort(links.begin(), links.end(), [](const CrossLink& a, const CrossLink& b) {
      return a.score != b.score ? a.score > b.score : a.to_entity < b.to_entity;
    });
    for (std::size_t i = 0; i < links.size(); ++i) {
      EXPECT_EQ(links[i].from_entity, t.entity_id);
      EXPECT_EQ(links[i].kind, LinkKind::EmbeddingSimilarity);
      EXPECT_EQ(links[i].to_entity, fx["items"][i].at("entity_id")) << t.name << " #" << i;
      EXPECT_NEAR(links[i].score, fx["items"][i].at("score").get<double>(), 1e-9);
    }
  }
}

TEST(LinkEhr, IdenticalTextAndUnreachableThreshold) {
  RetrievalIndex index(bundled(), fixture().embedder);
  const Entity* m = bundled().find_entity("m:Symptom:hirsutism");
  ASSERT_NE(m, nullptr);
  Entity t = *m;
  t.layer = Layer::Top;
  t.entity_id = entity_id_for(Layer::Top, t.type, t.name);
  auto links = index.link_top(std::vector<Entity>{t}, 1, 0.0);
  ASSERT_EQ(links.size(), 1u);
  EXPECT_EQ(links[0].to_entity, m->entity_id);
  EXPECT_DOUBLE_EQ(links[0].score, 1.0);
  EXPECT_TRUE(index.link_top(std::vector<Entity>{t}, 3, 1.01).empty());
}

}  // namespace
}  // namespace pcosdx
