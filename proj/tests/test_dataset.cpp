#include "doctest.h"

#include <fstream>
#include <sstream>

#include "mga/dataset.hpp"
#include "support.hpp"

using namespace mga;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mga_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ToyWorldSpec small_spec() {
  ToyWorldSpec s;
  s.eval_samples = 5;
  s.region_dim = 4;
  s.spatial_dim = 4;
  return s;
}

}  // namespace

TEST_CASE("toy world spec validation") {
  ToyWorldSpec s;
  s.categories.clear();
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = ToyWorldSpec{};
  s.max_objects = 5;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = ToyWorldSpec{};
  s.relations = {"left"};
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = ToyWorldSpec{};
  s.colors.push_back("cube");
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  CHECK_NOTHROW(ToyWorldSpec{}.validate());

  const auto kv = KeyValueConfig::parse_text("categories = a, b\ncolors = red\nmax_objects = 2\ntemplates = color\n", "mem");
  const ToyWorldSpec parsed = toy_world_spec_from(kv);
  CHECK(parsed.categories == std::vector<std::string>{"a", "b"});
  CHECK(parsed.templates == std::vector<QuestionTemplate>{QuestionTemplate::color});
  CHECK_THROWS_AS(toy_world_spec_from(KeyValueConfig::parse_text("colour = red\n", "mem")), InvalidInput);
}

TEST_CASE("generated samples are deterministic and always solvable") {
  const ToyWorldSpec spec;
  for (std::uint64_t i = 0; i < 300; ++i) {
    const ToySample s = generate_sample(spec, sample_seed(7, i));
    CHECK(to_json(s) == to_json(generate_sample(spec, sample_seed(7, i))));
    const auto answer = solve(s.scene, s.question, spec.relations);
    REQUIRE(answer);
    CHECK(*answer == s.answer);
    CHECK_NOTHROW(s.scene.validate());
    CHECK_NOTHROW(s.question.validate());
  }
  CHECK(sample_seed(7, 0) != sample_seed(7, 1));
  CHECK(sample_seed(7, 0) != sample_seed(8, 0));
}

TEST_CASE("relation answers depend on the relation pairs") {
  const ToyWorldSpec spec;
  std::size_t checked = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const ToySample s = generate_sample(spec, sample_seed(3, i));
    if (s.question_template != QuestionTemplate::relation) continue;
    SceneGraph flipped = s.scene;
    for (auto& r : flipped.relations) std::swap(r.subject, r.object);
    CHECK(solve(flipped, s.question, spec.relations) != s.answer);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("template parses follow the fixed edge lists") {
  const ToyWorldSpec spec;
  bool seen[3] = {};
  for (std::uint64_t i = 0; i < 100; ++i) {
    const ToySample s = generate_sample(spec, sample_seed(1, i));
    const auto& q = s.question;
    switch (s.question_template) {
      case QuestionTemplate::color:
        CHECK(q.tokens.size() == 5);
        CHECK(q.entities == std::vector<std::string>{"color", q.tokens[4]});
        seen[0] = true;
        break;
      case QuestionTemplate::relation:
        CHECK(q.tokens.size() == 6);
        CHECK(q.entities == std::vector<std::string>{q.tokens[2], q.tokens[5]});
        seen[1] = true;
        break;
      case QuestionTemplate::exists:
        CHECK(q.tokens.size() == 4);
        CHECK(q.entities == std::vector<std::string>{q.tokens[3]});
        seen[2] = true;
        break;
    }
  }
  CHECK((seen[0] && seen[1] && seen[2]));
}

TEST_CASE("scene layout: relations chain adjacent line positions") {
  const ToySample s = generate_sample(ToyWorldSpec{}, 42);
  const std::size_t k = s.scene.objects.size();
  CHECK(s.scene.relations.size() == 2 * (k - 1));
  CHECK(s.scene.grid.size() == 9);
  for (const auto& o : s.scene.objects) CHECK(o.attributes.size() == 1);
}

TEST_CASE("gen_data is byte-identical across runs and loads back") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  const DatasetManifest ma = gen_data(small_spec(), 12, 9, a);
  gen_data(small_spec(), 12, 9, b);
  CHECK(ma.samples.size() == 12);
  CHECK(ma.eval_samples.size() == 5);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  for (const auto& f : ma.samples) CHECK(slurp(a / f) == slurp(b / f));

  const DatasetManifest back = load_manifest(a);
  CHECK(back.answer_vocab == answer_vocabulary(small_spec()));
  CHECK(back.word_vocab.front() == "<unk>");
  CHECK(back.samples == ma.samples);
  CHECK(load_manifest(a / "manifest.json").grid_size == 3);

  const ModelConfig mc = model_config_for(back, ModelConfig{});
  CHECK(mc.vocab_size == back.word_vocab.size());
  CHECK(mc.answer_count == back.answer_vocab.size());
  CHECK(mc.region_dim == 4);
  const Dataset d = build_dataset(back, back.samples, mc, nullptr);
  CHECK(d.size() == 12);
  CHECK_THROWS_AS(gen_data(small_spec(), 0, 1, scratch("gen_zero")), InvalidInput);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("manifest schema errors name the field and file") {
  const fs::path dir = scratch("schema");
  gen_data(small_spec(), 3, 2, dir);
  nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));

  auto expect_error = [&](const nlohmann::json& doc, const std::string& needle) {
    std::ofstream(dir / "manifest.json") << doc.dump();
    try {
      load_manifest(dir);
      FAIL("expected a schema error");
    } catch (const InvalidInput& e) {
      const std::string what = e.what();
      CHECK(what.find(needle) != std::string::npos);
      CHECK(what.find("manifest.json") != std::string::npos);
    }
  };
  nlohmann::json missing = m;
  missing.erase("answer_vocab");
  expect_error(missing, "answer_vocab");
  nlohmann::json empty = m;
  empty["answer_vocab"] = nlohmann::json::array();
  expect_error(empty, "answer_vocab");
  nlohmann::json version = m;
  version["version"] = 2;
  expect_error(version, "version");

  // A sample whose answer is outside the vocabulary names the sample file.
  std::ofstream(dir / "manifest.json") << m.dump();
  const fs::path sample = dir / m["samples"][0].get<std::string>();
  nlohmann::json sj = nlohmann::json::parse(slurp(sample));
  sj["answer"] = "purple";
  std::ofstream(sample) << sj.dump();
  try {
    load_manifest(dir);
    FAIL("expected a schema error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find(sample.filename().string()) != std::string::npos);
    CHECK(std::string(e.what()).find("answer") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown question words map to the unknown id with one warning") {
  const fs::path dir = scratch("unknown");
  const DatasetManifest m0 = gen_data(small_spec(), 2, 4, dir);
  const fs::path sample = dir / m0.samples[0];
  nlohmann::json sj = nlohmann::json::parse(slurp(sample));
  sj["question"]["tokens"][0] = "whence";
  std::ofstream(sample) << sj.dump();
  const DatasetManifest m = load_manifest(dir);
  std::ostringstream warnings;
  const ModelConfig mc = model_config_for(m, ModelConfig{});
  const Dataset d = build_dataset(m, {m.samples[0], m.samples[0]}, mc, &warnings);
  CHECK(d.front().input.sentence_ids.front() == Vocabulary::kUnknown);
  const std::string w = warnings.str();
  CHECK(w.find("whence") != std::string::npos);
  CHECK(w.find("whence", w.find("whence") + 1) == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("sample JSON round trip") {
  const ToySample s = generate_sample(ToyWorldSpec{}, 5);
  const ToySample back = toy_sample_from_json(to_json(s), "mem");
  CHECK(to_json(back) == to_json(s));
  CHECK(back.question_template == s.question_template);
  nlohmann::json broken = to_json(s);
  broken.erase("question");
  CHECK_THROWS_AS(toy_sample_from_json(broken, "mem"), InvalidInput);
  CHECK(template_name(parse_template("exists")) == "exists");
  CHECK_THROWS_AS(parse_template("count"), InvalidInput);
}
