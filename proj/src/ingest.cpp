#include "mga/ingest.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mga {

namespace {

constexpr std::array<std::string_view, 7> kDeterminers = {"a",    "an",    "the",  "this",
                                                          "that", "these", "those"};
constexpr std::array<std::string_view, 9> kPositionalWords = {
    "left", "right", "top", "bottom", "above", "below", "front", "behind", "near"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

GraphPairs dedup_pairs(const GraphPairs& pairs) {
  std::set<GraphPair> seen;
  GraphPairs out;
  for (const auto& p : pairs) {
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

}  // namespace

std::string_view level_name(Level level) {
  switch (level) {
    case Level::concepts: return "concept";
    case Level::regions: return "region";
    case Level::spatial: return "spatial";
    case Level::entities: return "entity";
    case Level::noun_phrases: return "noun_phrase";
    case Level::sentence: return "sentence";
  }
  return "?";
}

// ------------------------------------------------------------ validation

std::optional<std::size_t> SceneGraph::index_of(int id) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].id == id) return i;
  return std::nullopt;
}

void SceneGraph::validate() const {
  std::set<int> ids;
  for (const auto& o : objects) {
    if (!ids.insert(o.id).second) {
      throw InvalidInput("scene graph: duplicate object id " + std::to_string(o.id));
    }
    if (o.category.empty()) {
      throw InvalidInput("scene graph: object " + std::to_string(o.id) + " has no category");
    }
    if (!objects.empty() && o.region.size() != objects.front().region.size()) {
      throw InvalidInput("scene graph: object " + std::to_string(o.id) +
                         " region feature width differs from the first object");
    }
  }
  for (const auto& r : relations) {
    if (!ids.contains(r.subject) || !ids.contains(r.object)) {
      throw InvalidInput("scene graph: relation '" + r.predicate + "' references missing object " +
                         std::to_string(ids.contains(r.subject) ? r.object : r.subject));
    }
  }
  if (grid.size() != grid_size * grid_size) {
    throw InvalidInput("scene graph: grid has " + std::to_string(grid.size()) +
                       " cells, expected " + std::to_string(grid_size * grid_size));
  }
  for (const auto& cell : grid) {
    if (cell.size() != grid.front().size()) {
      throw InvalidInput("scene graph: grid cell feature widths differ");
    }
  }
}

void QuestionParse::validate() const {
  for (const auto& [h, d] : dependencies) {
    if (h >= tokens.size() || d >= tokens.size()) {
      throw InvalidInput("question parse: dependency edge (" + std::to_string(h) + ", " +
                         std::to_string(d) + ") out of range for " +
                         std::to_string(tokens.size()) + " tokens");
    }
  }
}

std::size_t LevelData::token_count() const {
  if (!labels.empty()) return labels.size();
  return features.empty() ? 0 : features.rows();
}

void LevelData::check_pairs() const {
  const std::size_t n = token_count();
  for (const auto& p : pairs) {
    if (p.src >= n || p.dst >= n) {
      throw InvalidInput(std::string(level_name(level)) + " level: pair (" +
                         std::to_string(p.src) + ", " + std::to_string(p.dst) +
                         ") out of range for " + std::to_string(n) + " tokens");
    }
  }
}

// ------------------------------------------------------------ image levels

LevelData build_concept_level(const SceneGraph& sg) {
  sg.validate();
  LevelData out;
  out.level = Level::concepts;

  const std::size_t n_obj = sg.objects.size();
  std::vector<std::size_t> object_node(n_obj);
  std::vector<std::size_t> relation_node(sg.relations.size());

  // A predicate node is placed right before the later of its two endpoint
  // objects, so related nodes stay close in the sequence.
  std::vector<std::vector<std::size_t>> before_object(n_obj);
  for (std::size_t r = 0; r < sg.relations.size(); ++r) {
    const std::size_t s = *sg.index_of(sg.relations[r].subject);
    const std::size_t o = *sg.index_of(sg.relations[r].object);
    before_object[std::max(s, o)].push_back(r);
  }
  for (std::size_t k = 0; k < n_obj; ++k) {
    for (std::size_t r : before_object[k]) {
      relation_node[r] = out.labels.size();
      out.labels.push_back(sg.relations[r].predicate);
      out.kinds.push_back(ConceptKind::relation);
    }
    object_node[k] = out.labels.size();
    out.labels.push_back(sg.objects[k].category);
    out.kinds.push_back(ConceptKind::object);
  }

  for (std::size_t r = 0; r < sg.relations.size(); ++r) {
    const std::size_t s = object_node[*sg.index_of(sg.relations[r].subject)];
    const std::size_t o = object_node[*sg.index_of(sg.relations[r].object)];
    out.pairs.push_back({s, relation_node[r]});
    out.pairs.push_back({relation_node[r], o});
  }
  for (std::size_t k = 0; k < n_obj; ++k) {
    for (const auto& attr : sg.objects[k].attributes) {
      out.pairs.push_back({object_node[k], out.labels.size()});
      out.labels.push_back(attr);
      out.kinds.push_back(ConceptKind::attribute);
    }
  }
  out.check_pairs();
  return out;
}

LevelData merge_duplicate_concept_tokens(const LevelData& level) {
  if (level.kinds.size() != level.labels.size()) {
    throw InvalidInput("merge_duplicate_concept_tokens: expects a concept level with node kinds");
  }
  LevelData out;
  out.level = level.level;
  std::map<std::pair<ConceptKind, std::string>, std::size_t> survivor;
  std::vector<std::size_t> remap(level.labels.size());
  for (std::size_t i = 0; i < level.labels.size(); ++i) {
    const ConceptKind kind = level.kinds[i];
    if (kind != ConceptKind::object) {
      auto [it, fresh] = survivor.try_emplace({kind, level.labels[i]}, out.labels.size());
      if (!fresh) {
        remap[i] = it->second;
        continue;
      }
    }
    remap[i] = out.labels.size();
    out.labels.push_back(level.labels[i]);
    out.kinds.push_back(kind);
  }
  GraphPairs mapped;
  mapped.reserve(level.pairs.size());
  for (const auto& p : level.pairs) mapped.push_back({remap.at(p.src), remap.at(p.dst)});
  out.pairs = dedup_pairs(mapped);
  return out;
}

LevelData build_region_level(const SceneGraph& sg) {
  sg.validate();
  LevelData out;
  out.level = Level::regions;
  const std::size_t n = sg.objects.size();
  const std::size_t d = n ? sg.objects.front().region.size() : 0;
  std::vector<double> data;
  data.reserve(n * d);
  for (const auto& o : sg.objects) data.insert(data.end(), o.region.begin(), o.region.end());
  out.features = Tensor({n, d}, std::move(data));
  GraphPairs pairs;
  for (const auto& r : sg.relations) pairs.push_back({*sg.index_of(r.subject), *sg.index_of(r.object)});
  out.pairs = dedup_pairs(pairs);
  return out;
}

LevelData build_spatial_level(const SceneGraph& sg) {
  sg.validate();
  if (sg.grid.empty()) throw InvalidInput("spatial level: scene graph has no grid cells");
  LevelData out;
  out.level = Level::spatial;
  const std::size_t n = sg.grid.size(), d = sg.grid.front().size();
  std::vector<double> data;
  data.reserve(n * d);
  for (const auto& cell : sg.grid) data.insert(data.end(), cell.begin(), cell.end());
  out.features = Tensor({n, d}, std::move(data));
  out.pairs = fully_connected_pairs(n);
  return out;
}

// --------------------------------------------------------- question levels

bool is_determiner(std::string_view word) {
  const std::string w = lower(word);
  return std::find(kDeterminers.begin(), kDeterminers.end(), w) != kDeterminers.end();
}

bool is_positional_word(std::string_view word) {
  const std::string w = lower(word);
  return std::find(kPositionalWords.begin(), kPositionalWords.end(), w) != kPositionalWords.end();
}

LevelData build_entity_level(const QuestionParse& qp) {
  LevelData out;
  out.level = Level::entities;
  out.labels = qp.entities;
  out.pairs = fully_connected_pairs(out.labels.size());
  return out;
}

LevelData build_noun_phrase_level(const QuestionParse& qp) {
  LevelData out;
  out.level = Level::noun_phrases;
  for (const auto& phrase : qp.noun_phrases) {
    for (const auto& word : phrase) {
      if (is_determiner(word) || is_positional_word(word)) continue;
      out.labels.push_back(word);
    }
  }
  out.pairs = fully_connected_pairs(out.labels.size());
  return out;
}

LevelData build_sentence_level(const QuestionParse& qp) {
  qp.validate();
  LevelData out;
  out.level = Level::sentence;
  out.labels = qp.tokens;
  LeadGraph dep = LeadGraph::identity(qp.tokens.size());
  for (const auto& [h, d] : qp.dependencies) {
    dep.set(h, d);
    dep.set(d, h);
  }
  out.dep_adjacency = std::move(dep);
  out.pairs = fully_connected_pairs(out.labels.size());
  return out;
}

// ------------------------------------------------------------ node reduction

ReducedGraph node_reduction(const LevelData& image_level, const LevelData& question_level) {
  if (image_level.labels.size() != image_level.token_count() ||
      question_level.labels.size() != question_level.token_count()) {
    throw InvalidInput("node_reduction: both levels must carry token labels");
  }
  image_level.check_pairs();
  question_level.check_pairs();

  ReducedGraph out;
  out.labels = image_level.labels;
  out.image_count = out.labels.size();
  std::map<std::string, std::size_t> first;
  for (std::size_t i = 0; i < out.labels.size(); ++i) first.try_emplace(out.labels[i], i);

  std::vector<std::size_t> remap(question_level.labels.size());
  for (std::size_t i = 0; i < question_level.labels.size(); ++i) {
    const auto& label = question_level.labels[i];
    auto [it, fresh] = first.try_emplace(label, out.labels.size());
    if (fresh) out.labels.push_back(label);
    remap[i] = it->second;
  }

  GraphPairs all = image_level.pairs;
  for (const auto& p : question_level.pairs) all.push_back({remap[p.src], remap[p.dst]});
  out.pairs = dedup_pairs(all);
  return out;
}

// ------------------------------------------------------------ vocabulary

Vocabulary::Vocabulary() : words_{std::string(kUnknownToken)} {
  index_.emplace(words_.front(), kUnknown);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    if (w == kUnknownToken) continue;
    if (index_.try_emplace(w, words_.size()).second) words_.push_back(w);
  }
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.contains(std::string(word));
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const std::vector<std::string>& labels) const {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(id(l));
  return out;
}

std::vector<std::string> Vocabulary::unknown_words(const std::vector<std::string>& labels) const {
  std::vector<std::string> out;
  for (const auto& l : labels)
    if (!contains(l)) out.push_back(l);
  return out;
}

// ------------------------------------------------------------ word vectors

WordVectors parse_word_vectors(std::istream& in, const std::string& source) {
  WordVectors wv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": non-numeric vector entry");
    }
    if (v.empty()) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": word without a vector");
    }
    if (wv.dim == 0) wv.dim = v.size();
    if (v.size() != wv.dim) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(wv.dim) + " values, got " + std::to_string(v.size()));
    }
    wv.vectors.insert_or_assign(word, std::move(v));
  }
  return wv;
}

WordVectors load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open word-vector file " + path);
  return parse_word_vectors(in, path);
}

// ------------------------------------------------------------ JSON

namespace {

using nlohmann::json;

const json& field(const json& j, const char* name, const std::string& source,
                  const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    throw InvalidInput(source + ": missing field '" + where + name + "'");
  }
  return j.at(name);
}

template <class T>
T get_as(const json& j, const char* name, const std::string& source, const std::string& where) {
  const json& v = field(j, name, source, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(source + ": field '" + where + name + "' has the wrong type");
  }
}

}  // namespace

SceneGraph scene_graph_from_json(const json& j, const std::string& source) {
  SceneGraph sg;
  const json& objects = field(j, "objects", source, "scene_graph.");
  if (!objects.is_array()) throw InvalidInput(source + ": 'scene_graph.objects' must be an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string where = "scene_graph.objects[" + std::to_string(i) + "].";
    SceneObject o;
    o.id = get_as<int>(objects[i], "id", source, where);
    o.category = get_as<std::string>(objects[i], "category", source, where);
    if (objects[i].contains("attributes")) {
      o.attributes = get_as<std::vector<std::string>>(objects[i], "attributes", source, where);
    }
    o.region = get_as<std::vector<double>>(objects[i], "region", source, where);
    sg.objects.push_back(std::move(o));
  }
  if (j.contains("relations")) {
    const json& rels = j.at("relations");
    for (std::size_t i = 0; i < rels.size(); ++i) {
      const std::string where = "scene_graph.relations[" + std::to_string(i) + "].";
      SceneRelation r;
      r.subject = get_as<int>(rels[i], "subject", source, where);
      r.predicate = get_as<std::string>(rels[i], "predicate", source, where);
      r.object = get_as<int>(rels[i], "object", source, where);
      sg.relations.push_back(std::move(r));
    }
  }
  const json& grid = field(j, "grid", source, "scene_graph.");
  sg.grid_size = get_as<std::size_t>(grid, "size", source, "scene_graph.grid.");
  sg.grid = get_as<std::vector<std::vector<double>>>(grid, "cells", source, "scene_graph.grid.");
  try {
    sg.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(source + ": " + e.what());
  }
  return sg;
}

QuestionParse question_parse_from_json(const json& j, const std::string& source) {
  QuestionParse qp;
  const std::string where = "question.";
  qp.tokens = get_as<std::vector<std::string>>(j, "tokens", source, where);
  qp.entities = get_as<std::vector<std::string>>(j, "entities", source, where);
  qp.noun_phrases = get_as<std::vector<std::vector<std::string>>>(j, "noun_phrases", source, where);
  const auto edges = get_as<std::vector<std::vector<std::size_t>>>(j, "dependencies", source, where);
  for (const auto& e : edges) {
    if (e.size() != 2) {
      throw InvalidInput(source + ": field 'question.dependencies' entries must be [head, dependent]");
    }
    qp.dependencies.emplace_back(e[0], e[1]);
  }
  try {
    qp.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(source + ": " + e.what());
  }
  return qp;
}

json to_json(const SceneGraph& sg) {
  json objects = json::array();
  for (const auto& o : sg.objects) {
    objects.push_back({{"id", o.id},
                       {"category", o.category},
                       {"attributes", o.attributes},
                       {"region", o.region}});
  }
  json rels = json::array();
  for (const auto& r : sg.relations) {
    rels.push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
  }
  return {{"objects", objects},
          {"relations", rels},
          {"grid", {{"size", sg.grid_size}, {"cells", sg.grid}}}};
}

json to_json(const QuestionParse& qp) {
  json deps = json::array();
  for (const auto& [h, d] : qp.dependencies) deps.push_back({h, d});
  return {{"tokens", qp.tokens},
          {"entities", qp.entities},
          {"noun_phrases", qp.noun_phrases},
          {"dependencies", deps}};
}

}  // namespace mga
