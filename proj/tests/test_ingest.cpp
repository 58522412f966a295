#include "doctest.h"

#include <sstream>

#include "mga/dataset.hpp"
#include "mga/ingest.hpp"
#include "support.hpp"

using namespace mga;

namespace {

SceneObject object(int id, std::string category, std::vector<std::string> attributes = {}) {
  return SceneObject{id, std::move(category), std::move(attributes), {0.0, 1.0}};
}

SceneGraph scene(std::vector<SceneObject> objects, std::vector<SceneRelation> relations = {}) {
  SceneGraph sg;
  sg.objects = std::move(objects);
  sg.relations = std::move(relations);
  sg.grid_size = 1;
  sg.grid = {{0.5, 0.5}};
  return sg;
}

std::vector<std::string> labels(std::initializer_list<const char*> l) { return {l.begin(), l.end()}; }

}  // namespace

TEST_CASE("concept level of the girl and dog scene") {
  const LoadedSample s = load_sample(test::fixture("girl_dog.json"));
  const LevelData c = build_concept_level(s.scene);
  CHECK(c.labels == labels({"girl", "left", "right", "dog", "brown"}));
  // girl->left->dog, dog->right->girl, dog->brown
  const GraphPairs expected = {{0, 1}, {1, 3}, {3, 2}, {2, 0}, {3, 4}};
  CHECK(c.pairs == expected);
  CHECK(c.kinds == std::vector<ConceptKind>{ConceptKind::object, ConceptKind::relation,
                                            ConceptKind::relation, ConceptKind::object,
                                            ConceptKind::attribute});
}

TEST_CASE("concept level edge cases") {
  const LevelData single = build_concept_level(scene({object(0, "cat")}));
  CHECK(single.labels == labels({"cat"}));
  CHECK(single.pairs.empty());

  // Two objects, one relation, one attribute each: 5 nodes, 4 pairs.
  const LevelData two = build_concept_level(
      scene({object(0, "cup", {"red"}), object(1, "box", {"blue"})}, {{0, "on", 1}}));
  CHECK(two.labels == labels({"cup", "on", "box", "red", "blue"}));
  const GraphPairs expected = {{0, 1}, {1, 2}, {0, 3}, {2, 4}};
  CHECK(two.pairs == expected);

  CHECK_THROWS_AS(build_concept_level(scene({object(0, "cat")}, {{0, "near", 7}})), InvalidInput);
  CHECK_THROWS_AS(build_concept_level(scene({object(0, "cat"), object(0, "dog")})), InvalidInput);
  CHECK_THROWS_AS(build_concept_level(scene({object(0, "")})), InvalidInput);
}

TEST_CASE("merging collapses repeated relations and attributes only") {
  const SceneGraph sg = scene({object(0, "cube", {"red"}), object(1, "cube", {"red"}), object(2, "ball", {"red"})},
                              {{0, "left", 1}, {1, "left", 2}});
  const LevelData merged = merge_duplicate_concept_tokens(build_concept_level(sg));
  CHECK(merged.labels == labels({"cube", "left", "cube", "ball", "red"}));
  // both triples route through the single "left"; three owners point at "red"
  const GraphPairs expected = {{0, 1}, {1, 2}, {2, 1}, {1, 3}, {0, 4}, {2, 4}, {3, 4}};
  CHECK(merged.pairs == expected);

  const LevelData plain = build_concept_level(scene({object(0, "cup", {"red"}), object(1, "box")}, {{0, "on", 1}}));
  const LevelData same = merge_duplicate_concept_tokens(plain);
  CHECK(same.labels == plain.labels);
  CHECK(same.pairs == plain.pairs);
}

TEST_CASE("region level of the girl and dog scene") {
  const LoadedSample s = load_sample(test::fixture("girl_dog.json"));
  const LevelData r = build_region_level(s.scene);
  CHECK(r.features.rows() == 2);
  CHECK(r.features(0, 0) == 0.5);   // girl's region row
  CHECK(r.features(1, 0) == -0.5);  // dog's region row
  const GraphPairs expected = {{0, 1}, {1, 0}};
  CHECK(r.pairs == expected);

  CHECK(build_region_level(scene({object(0, "a"), object(1, "b")})).pairs.empty());
  const LevelData dup = build_region_level(scene({object(0, "a"), object(1, "b")}, {{0, "on", 1}, {0, "near", 1}}));
  CHECK(dup.pairs == GraphPairs{{0, 1}});
}

TEST_CASE("spatial level is fully connected") {
  const LevelData one = build_spatial_level(scene({object(0, "a")}));
  CHECK(one.token_count() == 1);
  CHECK(one.pairs == GraphPairs{{0, 0}});

  const LoadedSample s = load_sample(test::fixture("girl_dog.json"));
  const LevelData sp = build_spatial_level(s.scene);
  CHECK(sp.token_count() == 4);
  CHECK(sp.pairs.size() == 16);
  CHECK(pairs_to_matrix(sp.pairs, 4) == LeadGraph::ones(4));
}

TEST_CASE("entity and noun phrase levels") {
  QuestionParse qp;
  qp.tokens = {"is", "the", "brown", "dog", "left", "of", "the", "girl"};
  qp.entities = {"girl", "dog"};
  qp.noun_phrases = {{"the", "brown", "dog"}, {"left"}, {"the", "girl"}};
  const LevelData e = build_entity_level(qp);
  CHECK(e.labels == labels({"girl", "dog"}));
  CHECK(e.pairs.size() == 4);

  const LevelData np = build_noun_phrase_level(qp);
  CHECK(np.labels == labels({"brown", "dog", "girl"}));
  CHECK(np.pairs.size() == 9);

  QuestionParse content;
  content.noun_phrases = {{"red", "ball"}};
  CHECK(build_noun_phrase_level(content).labels == labels({"red", "ball"}));
  CHECK(build_entity_level(QuestionParse{}).token_count() == 0);
}

TEST_CASE("sentence level dependency adjacency") {
  QuestionParse two;
  two.tokens = {"a", "b"};
  two.dependencies = {{0, 1}};
  CHECK(*build_sentence_level(two).dep_adjacency == LeadGraph::ones(2));

  QuestionParse three;
  three.tokens = {"a", "b", "c"};
  const LevelData s = build_sentence_level(three);
  CHECK(*s.dep_adjacency == LeadGraph::identity(3));
  CHECK(s.pairs.size() == 9);

  const LoadedSample fx = load_sample(test::fixture("girl_dog.json"));
  const LeadGraph dep = *build_sentence_level(fx.question).dep_adjacency;
  CHECK(dep.is_symmetric());
  CHECK(dep.has_unit_diagonal());

  three.dependencies = {{0, 3}};
  CHECK_THROWS_AS(build_sentence_level(three), InvalidInput);
}

TEST_CASE("node reduction fuses identical labels across modalities") {
  LevelData image;
  image.labels = {"girl", "left", "dog"};
  image.pairs = {{0, 1}, {1, 2}};
  LevelData question;
  question.labels = {"dog", "ball"};
  question.pairs = fully_connected_pairs(2);
  const ReducedGraph r = node_reduction(image, question);
  CHECK(r.labels == labels({"girl", "left", "dog", "ball"}));
  CHECK(r.image_count == 3);
  CHECK(r.question_count() == 1);
  const GraphPairs expected = {{0, 1}, {1, 2}, {2, 2}, {2, 3}, {3, 2}, {3, 3}};
  CHECK(r.pairs == expected);
}

TEST_CASE("vocabulary maps unknown words to id zero") {
  const Vocabulary v({"what", "dog", "what"});
  CHECK(v.size() == 3);
  CHECK(v.id("dog") == 2);
  CHECK(v.id("zebra") == Vocabulary::kUnknown);
  CHECK(v.unknown_words({"dog", "zebra"}) == labels({"zebra"}));
}

TEST_CASE("word vector files parse and reject ragged rows") {
  std::istringstream good("red 0.5 1.0\nblue -1 2\n");
  const WordVectors wv = parse_word_vectors(good, "mem");
  CHECK(wv.dim == 2);
  CHECK(wv.vectors.at("blue")[1] == 2.0);
  std::istringstream bad("red 0.5 1.0\nblue -1\n");
  CHECK_THROWS_AS(parse_word_vectors(bad, "mem"), InvalidInput);
}

TEST_CASE("scene graph JSON round trip") {
  const LoadedSample s = load_sample(test::fixture("girl_dog.json"));
  const SceneGraph back = scene_graph_from_json(to_json(s.scene), "mem");
  CHECK(back.objects.size() == 2);
  CHECK(back.objects[1].attributes == labels({"brown"}));
  CHECK(back.grid == s.scene.grid);
  const QuestionParse q = question_parse_from_json(to_json(s.question), "mem");
  CHECK(q.dependencies == s.question.dependencies);

  nlohmann::json broken = to_json(s.scene);
  broken["relations"][0]["object"] = 9;
  CHECK_THROWS_AS(scene_graph_from_json(broken, "mem"), InvalidInput);
}
