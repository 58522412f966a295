#include "mga/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace mga {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view template_name(QuestionTemplate t) {
  switch (t) {
    case QuestionTemplate::color: return "color";
    case QuestionTemplate::relation: return "relation";
    case QuestionTemplate::exists: return "exists";
  }
  return "?";
}

QuestionTemplate parse_template(std::string_view name) {
  if (name == "color") return QuestionTemplate::color;
  if (name == "relation") return QuestionTemplate::relation;
  if (name == "exists") return QuestionTemplate::exists;
  throw InvalidInput("unknown question template '" + std::string(name) + "'");
}

// ------------------------------------------------------------ spec

void ToyWorldSpec::validate() const {
  if (categories.empty()) throw InvalidInput("toy world: empty category set");
  if (colors.empty()) throw InvalidInput("toy world: empty color set");
  if (relations.size() != 2) throw InvalidInput("toy world: exactly two relations are required");
  if (templates.empty()) throw InvalidInput("toy world: no question templates");
  if (min_objects < 1 || min_objects > max_objects) {
    throw InvalidInput("toy world: need 1 <= min_objects <= max_objects");
  }
  if (max_objects > categories.size()) {
    throw InvalidInput("toy world: max_objects exceeds the number of categories");
  }
  if (max_objects > grid_size * grid_size) {
    throw InvalidInput("toy world: max_objects exceeds the grid cell count");
  }
  if (region_dim == 0 || spatial_dim == 0) throw InvalidInput("toy world: feature dims must be >= 1");
  const bool relation_q =
      std::find(templates.begin(), templates.end(), QuestionTemplate::relation) != templates.end();
  if (relation_q && min_objects < 2) {
    throw InvalidInput("toy world: relation questions need min_objects >= 2");
  }
  std::set<std::string> seen;
  for (const auto* list : {&categories, &colors, &relations}) {
    for (const auto& w : *list) {
      if (!seen.insert(w).second) throw InvalidInput("toy world: label '" + w + "' used twice");
    }
  }
  if (!(noise >= 0.0)) throw InvalidInput("toy world: noise must be >= 0");
}

ToyWorldSpec toy_world_spec_from(const KeyValueConfig& kv) {
  ToyWorldSpec s;
  s.categories = kv.get_list("categories", s.categories);
  s.colors = kv.get_list("colors", s.colors);
  s.relations = kv.get_list("relations", s.relations);
  s.min_objects = kv.get_size("min_objects", s.min_objects);
  s.max_objects = kv.get_size("max_objects", s.max_objects);
  std::vector<std::string> names;
  for (auto t : s.templates) names.emplace_back(template_name(t));
  s.templates.clear();
  for (const auto& n : kv.get_list("templates", names)) s.templates.push_back(parse_template(n));
  s.region_dim = kv.get_size("region_dim", s.region_dim);
  s.spatial_dim = kv.get_size("spatial_dim", s.spatial_dim);
  s.grid_size = kv.get_size("grid_size", s.grid_size);
  s.noise = kv.get_double("noise", s.noise);
  s.eval_samples = kv.get_size("eval_samples", s.eval_samples);
  kv.reject_unused();
  s.validate();
  return s;
}

ToyWorldSpec load_toy_world_spec(const std::string& path) {
  return toy_world_spec_from(KeyValueConfig::load(path));
}

std::vector<std::string> answer_vocabulary(const ToyWorldSpec& spec) {
  std::vector<std::string> out = {"no", "yes"};
  out.insert(out.end(), spec.colors.begin(), spec.colors.end());
  out.insert(out.end(), spec.categories.begin(), spec.categories.end());
  return out;
}

std::vector<std::string> word_vocabulary(const ToyWorldSpec& spec) {
  std::vector<std::string> out = {std::string(Vocabulary::kUnknownToken), "what", "color", "is",
                                  "the", "of", "there", "a"};
  out.insert(out.end(), spec.categories.begin(), spec.categories.end());
  out.insert(out.end(), spec.colors.begin(), spec.colors.end());
  out.insert(out.end(), spec.relations.begin(), spec.relations.end());
  return out;
}

// ------------------------------------------------------------ generation

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Fixed unit-variance vector for a label; identical on every run.
std::vector<double> label_vector(std::string_view tag, std::string_view label, std::size_t dim) {
  std::mt19937_64 rng(fnv1a(std::string(tag) + ":" + std::string(label)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> object_feature(std::string_view tag, const std::string& category,
                                   const std::string& color, std::size_t dim, double noise,
                                   std::mt19937_64& rng) {
  std::vector<double> v = label_vector(std::string(tag) + ".category", category, dim);
  const std::vector<double> c = label_vector(std::string(tag) + ".color", color, dim);
  std::normal_distribution<double> normal(0.0, noise > 0.0 ? noise : 1.0);
  for (std::size_t i = 0; i < dim; ++i) v[i] += c[i] + (noise > 0.0 ? normal(rng) : 0.0);
  return v;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

QuestionParse color_question(const std::string& category) {
  QuestionParse q;
  q.tokens = {"what", "color", "is", "the", category};
  q.entities = {"color", category};
  q.noun_phrases = {{"what", "color"}, {"the", category}};
  q.dependencies = {{2, 1}, {1, 0}, {2, 4}, {4, 3}};
  return q;
}

QuestionParse relation_question(const std::string& predicate, const std::string& category) {
  QuestionParse q;
  q.tokens = {"what", "is", predicate, "of", "the", category};
  q.entities = {predicate, category};
  q.noun_phrases = {{"what"}, {"the", category}};
  q.dependencies = {{1, 0}, {1, 2}, {2, 3}, {3, 5}, {5, 4}};
  return q;
}

QuestionParse exists_question(const std::string& category) {
  QuestionParse q;
  q.tokens = {"is", "there", "a", category};
  q.entities = {category};
  q.noun_phrases = {{"a", category}};
  q.dependencies = {{0, 1}, {0, 3}, {3, 2}};
  return q;
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index) {
  return splitmix64(splitmix64(corpus_seed) ^ (index + 1));
}

ToySample generate_sample(const ToyWorldSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t k =
      std::uniform_int_distribution<std::size_t>(spec.min_objects, spec.max_objects)(rng);

  // line[p] is the object index standing at position p; object list order
  // is shuffled independently so it carries no position information.
  std::vector<std::string> cats = spec.categories;
  std::shuffle(cats.begin(), cats.end(), rng);
  cats.resize(k);
  std::vector<std::size_t> line(k);
  for (std::size_t i = 0; i < k; ++i) line[i] = i;
  std::shuffle(line.begin(), line.end(), rng);

  ToySample s;
  SceneGraph& sg = s.scene;
  for (std::size_t i = 0; i < k; ++i) {
    SceneObject o;
    o.id = static_cast<int>(i);
    o.category = cats[i];
    o.attributes = {pick(spec.colors, rng)};
    o.region = object_feature("region", o.category, o.attributes[0], spec.region_dim, spec.noise, rng);
    sg.objects.push_back(std::move(o));
  }
  for (std::size_t p = 0; p + 1 < k; ++p) {
    const int a = static_cast<int>(line[p]);
    const int b = static_cast<int>(line[p + 1]);
    sg.relations.push_back({a, spec.relations[0], b});
    sg.relations.push_back({b, spec.relations[1], a});
  }
  sg.grid_size = spec.grid_size;
  std::normal_distribution<double> normal(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
  for (std::size_t c = 0; c < spec.grid_size * spec.grid_size; ++c) {
    if (c < k) {
      const SceneObject& o = sg.objects[line[c]];
      sg.grid.push_back(
          object_feature("spatial", o.category, o.attributes[0], spec.spatial_dim, spec.noise, rng));
    } else {
      std::vector<double> cell(spec.spatial_dim, 0.0);
      if (spec.noise > 0.0)
        for (double& x : cell) x = normal(rng);
      sg.grid.push_back(std::move(cell));
    }
  }

  s.question_template = pick(spec.templates, rng);
  switch (s.question_template) {
    case QuestionTemplate::color: {
      const SceneObject& o = pick(sg.objects, rng);
      s.question = color_question(o.category);
      break;
    }
    case QuestionTemplate::relation: {
      const SceneRelation& r = pick(sg.relations, rng);
      s.question = relation_question(r.predicate, sg.objects[static_cast<std::size_t>(r.object)].category);
      break;
    }
    case QuestionTemplate::exists: {
      std::vector<std::string> absent;
      for (const auto& c : spec.categories)
        if (std::find(cats.begin(), cats.end(), c) == cats.end()) absent.push_back(c);
      const bool ask_present = absent.empty() || std::bernoulli_distribution(0.5)(rng);
      s.question = exists_question(ask_present ? pick(cats, rng) : pick(absent, rng));
      break;
    }
  }
  auto answer = solve(sg, s.question, spec.relations);
  if (!answer) throw std::logic_error("toy world produced an unanswerable question");
  s.answer = *answer;
  return s;
}

// ------------------------------------------------------------ solver

std::optional<std::string> solve(const SceneGraph& scene, const QuestionParse& question,
                                 const std::vector<std::string>& relations) {
  const auto& t = question.tokens;
  auto find_category = [&](const std::string& c) -> const SceneObject* {
    for (const auto& o : scene.objects)
      if (o.category == c) return &o;
    return nullptr;
  };
  if (t.size() == 5 && t[0] == "what" && t[1] == "color" && t[2] == "is" && t[3] == "the") {
    const SceneObject* o = find_category(t[4]);
    if (!o || o->attributes.empty()) return std::nullopt;
    return o->attributes.front();
  }
  if (t.size() == 6 && t[0] == "what" && t[1] == "is" && t[3] == "of" && t[4] == "the") {
    if (std::find(relations.begin(), relations.end(), t[2]) == relations.end()) return std::nullopt;
    for (const auto& r : scene.relations) {
      if (r.predicate != t[2]) continue;
      const auto obj = scene.index_of(r.object);
      const auto sub = scene.index_of(r.subject);
      if (obj && sub && scene.objects[*obj].category == t[5]) return scene.objects[*sub].category;
    }
    return std::nullopt;
  }
  if (t.size() == 4 && t[0] == "is" && t[1] == "there" && t[2] == "a") {
    return std::string(find_category(t[3]) ? "yes" : "no");
  }
  return std::nullopt;
}

// ------------------------------------------------------------ sample files

json to_json(const ToySample& s) {
  json j;
  j["version"] = 1;
  j["template"] = std::string(template_name(s.question_template));
  j["scene_graph"] = to_json(s.scene);
  j["question"] = to_json(s.question);
  j["answer"] = s.answer;
  return j;
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j, int indent) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(indent) << '\n';
}

template <class T>
T required(const json& j, const char* name, const std::string& source) {
  if (!j.is_object() || !j.contains(name)) throw InvalidInput(source + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(source + ": field '" + std::string(name) + "' has the wrong type");
  }
}

void check_version(const json& j, const std::string& source) {
  const int v = required<int>(j, "version", source);
  if (v != 1) throw InvalidInput(source + ": field 'version' is " + std::to_string(v) + ", expected 1");
}

}  // namespace

ToySample toy_sample_from_json(const json& j, const std::string& source) {
  check_version(j, source);
  ToySample s;
  s.question_template = parse_template(required<std::string>(j, "template", source));
  if (!j.contains("scene_graph")) throw InvalidInput(source + ": missing field 'scene_graph'");
  if (!j.contains("question")) throw InvalidInput(source + ": missing field 'question'");
  s.scene = scene_graph_from_json(j.at("scene_graph"), source);
  s.question = question_parse_from_json(j.at("question"), source);
  s.answer = required<std::string>(j, "answer", source);
  return s;
}

LoadedSample load_sample(const fs::path& path) {
  const std::string source = path.string();
  const json j = read_json_file(path);
  check_version(j, source);
  LoadedSample s;
  s.path = source;
  if (!j.contains("scene_graph")) throw InvalidInput(source + ": missing field 'scene_graph'");
  if (!j.contains("question")) throw InvalidInput(source + ": missing field 'question'");
  s.scene = scene_graph_from_json(j.at("scene_graph"), source);
  s.question = question_parse_from_json(j.at("question"), source);
  s.answer = required<std::string>(j, "answer", source);
  return s;
}

// ------------------------------------------------------------ manifest

std::optional<std::size_t> DatasetManifest::answer_id(const std::string& label) const {
  auto it = std::find(answer_vocab.begin(), answer_vocab.end(), label);
  if (it == answer_vocab.end()) return std::nullopt;
  return static_cast<std::size_t>(it - answer_vocab.begin());
}

namespace {

std::string sample_name(const char* split, std::size_t i) {
  std::ostringstream os;
  os << "samples/" << split << '_' << std::setw(5) << std::setfill('0') << i << ".json";
  return os.str();
}

json manifest_json(const DatasetManifest& m) {
  json j;
  j["version"] = 1;
  j["answer_vocab"] = m.answer_vocab;
  j["word_vocab"] = m.word_vocab;
  j["region_dim"] = m.region_dim;
  j["spatial_dim"] = m.spatial_dim;
  j["grid_size"] = m.grid_size;
  j["samples"] = m.samples;
  j["eval_samples"] = m.eval_samples;
  return j;
}

void check_sample(const DatasetManifest& m, const LoadedSample& s) {
  if (!m.answer_id(s.answer)) {
    throw InvalidInput(s.path + ": field 'answer' value '" + s.answer + "' is not in the answer vocabulary");
  }
  for (std::size_t i = 0; i < s.scene.objects.size(); ++i) {
    if (s.scene.objects[i].region.size() != m.region_dim) {
      throw InvalidInput(s.path + ": field 'scene_graph.objects[" + std::to_string(i) +
                         "].region' has width " + std::to_string(s.scene.objects[i].region.size()) +
                         ", manifest region_dim is " + std::to_string(m.region_dim));
    }
  }
  if (s.scene.grid_size != m.grid_size) {
    throw InvalidInput(s.path + ": field 'scene_graph.grid.size' does not match the manifest grid_size");
  }
  for (const auto& cell : s.scene.grid) {
    if (cell.size() != m.spatial_dim) {
      throw InvalidInput(s.path + ": field 'scene_graph.grid.cells' width does not match spatial_dim");
    }
  }
}

}  // namespace

DatasetManifest gen_data(const ToyWorldSpec& spec, std::size_t n, std::uint64_t seed,
                         const fs::path& out_dir) {
  if (n < 1) throw InvalidInput("gen_data: n must be >= 1");
  spec.validate();
  fs::create_directories(out_dir / "samples");
  DatasetManifest m;
  m.root = out_dir;
  m.answer_vocab = answer_vocabulary(spec);
  m.word_vocab = word_vocabulary(spec);
  m.region_dim = spec.region_dim;
  m.spatial_dim = spec.spatial_dim;
  m.grid_size = spec.grid_size;
  const std::size_t total = n + spec.eval_samples;
  for (std::size_t i = 0; i < total; ++i) {
    const bool train = i < n;
    const std::string name = train ? sample_name("train", i) : sample_name("eval", i - n);
    const ToySample s = generate_sample(spec, sample_seed(seed, i));
    write_json_file(out_dir / name, to_json(s), -1);
    (train ? m.samples : m.eval_samples).push_back(name);
  }
  write_json_file(out_dir / "manifest.json", manifest_json(m), 2);
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  const std::string source = file.string();
  const json j = read_json_file(file);
  check_version(j, source);
  DatasetManifest m;
  m.root = file.parent_path();
  m.answer_vocab = required<std::vector<std::string>>(j, "answer_vocab", source);
  if (m.answer_vocab.empty()) throw InvalidInput(source + ": field 'answer_vocab' is empty");
  if (std::set<std::string>(m.answer_vocab.begin(), m.answer_vocab.end()).size() != m.answer_vocab.size()) {
    throw InvalidInput(source + ": field 'answer_vocab' has duplicate labels");
  }
  m.word_vocab = required<std::vector<std::string>>(j, "word_vocab", source);
  for (std::size_t i = 1; i < m.word_vocab.size(); ++i) {
    if (m.word_vocab[i] == Vocabulary::kUnknownToken) {
      throw InvalidInput(source + ": field 'word_vocab' may hold '<unk>' only at index 0");
    }
  }
  m.region_dim = required<std::size_t>(j, "region_dim", source);
  m.spatial_dim = required<std::size_t>(j, "spatial_dim", source);
  m.grid_size = required<std::size_t>(j, "grid_size", source);
  m.samples = required<std::vector<std::string>>(j, "samples", source);
  if (j.contains("eval_samples")) {
    m.eval_samples = required<std::vector<std::string>>(j, "eval_samples", source);
  }
  for (const auto* list : {&m.samples, &m.eval_samples}) {
    for (const auto& rel : *list) check_sample(m, load_sample(m.root / rel));
  }
  return m;
}

ModelConfig model_config_for(const DatasetManifest& manifest, ModelConfig base) {
  base.vocab_size = Vocabulary(manifest.word_vocab).size();
  base.answer_count = manifest.answer_vocab.size();
  base.region_dim = manifest.region_dim;
  base.spatial_dim = manifest.spatial_dim;
  return base;
}

Dataset build_dataset(const DatasetManifest& manifest, const std::vector<std::string>& files,
                      const ModelConfig& model, std::ostream* warnings) {
  const Vocabulary vocab(manifest.word_vocab);
  std::set<std::string> reported;
  Dataset out;
  out.reserve(files.size());
  for (const auto& rel : files) {
    const LoadedSample s = load_sample(manifest.root / rel);
    check_sample(manifest, s);
    const GranularityBundle bundle = ingest(s.scene, s.question, model.merge_concepts);
    for (const auto* labels : {&bundle.concepts.labels, &bundle.entities.labels,
                               &bundle.noun_phrases.labels, &bundle.sentence.labels}) {
      for (const auto& w : vocab.unknown_words(*labels)) {
        if (reported.insert(w).second && warnings) {
          *warnings << "warning: " << s.path << ": unknown word '" << w << "' mapped to "
                    << Vocabulary::kUnknownToken << '\n';
        }
      }
    }
    out.push_back({prepare_input(bundle, vocab, model.node_reduction), *manifest.answer_id(s.answer)});
  }
  return out;
}

}  // namespace mga
