#pragma once

// Synthetic toy-VQA world, per-sample JSON files and the dataset manifest.
//
// Manifest (manifest.json, version 1):
//   {"version": 1, "answer_vocab": [...], "word_vocab": ["<unk>", ...],
//    "region_dim": d_r, "spatial_dim": d_s, "grid_size": g,
//    "samples": ["samples/train_00000.json", ...], "eval_samples": [...]}
// Sample paths are relative to the manifest's directory.
//
// Sample (version 1):
//   {"version": 1, "template": "color" | "relation" | "exists",
//    "scene_graph": {...}, "question": {...}, "answer": "red"}

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mga/config.hpp"
#include "mga/ingest.hpp"
#include "mga/model.hpp"
#include "mga/training.hpp"

namespace mga {

enum class QuestionTemplate { color, relation, exists };
std::string_view template_name(QuestionTemplate t);
QuestionTemplate parse_template(std::string_view name);

struct ToyWorldSpec {
  std::vector<std::string> categories = {"cube", "ball", "cup", "box"};
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  /// Exactly two predicates: the first means "subject is before object" on
  /// the line, the second the converse.
  std::vector<std::string> relations = {"left", "right"};
  std::size_t min_objects = 2;
  std::size_t max_objects = 4;
  std::vector<QuestionTemplate> templates = {QuestionTemplate::color, QuestionTemplate::relation,
                                             QuestionTemplate::exists};
  std::size_t region_dim = 16;
  std::size_t spatial_dim = 16;
  std::size_t grid_size = 3;
  double noise = 0.1;
  /// Held-out samples written alongside the n training samples.
  std::size_t eval_samples = 0;

  /// Throws InvalidInput on an empty category set or inconsistent sizes.
  void validate() const;
};

ToyWorldSpec toy_world_spec_from(const KeyValueConfig& kv);
ToyWorldSpec load_toy_world_spec(const std::string& path);

struct ToySample {
  QuestionTemplate question_template = QuestionTemplate::color;
  SceneGraph scene;
  QuestionParse question;
  std::string answer;
};

/// Closed answer set: no, yes, colors, categories.
std::vector<std::string> answer_vocabulary(const ToyWorldSpec& spec);
/// "<unk>", template words, categories, colors, relations.
std::vector<std::string> word_vocabulary(const ToyWorldSpec& spec);

/// Deterministic in (spec, seed): the same pair always gives the same sample.
ToySample generate_sample(const ToyWorldSpec& spec, std::uint64_t seed);
/// Seed of sample `index` derived from the corpus seed.
std::uint64_t sample_seed(std::uint64_t corpus_seed, std::uint64_t index);

/// Answers a templated question from the scene graph alone. Returns nullopt
/// if the question is not one of the templates or has no answer.
std::optional<std::string> solve(const SceneGraph& scene, const QuestionParse& question,
                                 const std::vector<std::string>& relations);

nlohmann::json to_json(const ToySample& sample);
ToySample toy_sample_from_json(const nlohmann::json& j, const std::string& source);

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> answer_vocab;
  std::vector<std::string> word_vocab;
  std::vector<std::string> samples;
  std::vector<std::string> eval_samples;
  std::size_t region_dim = 0;
  std::size_t spatial_dim = 0;
  std::size_t grid_size = 0;

  std::optional<std::size_t> answer_id(const std::string& label) const;
};

/// Writes n training samples plus spec.eval_samples held-out ones under
/// `out_dir` and returns the manifest written to out_dir/manifest.json.
DatasetManifest gen_data(const ToyWorldSpec& spec, std::size_t n, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

/// Accepts the manifest file or its directory. Parses and validates every
/// sample file; errors name the field and the file.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct LoadedSample {
  std::string path;
  SceneGraph scene;
  QuestionParse question;
  std::string answer;
};

LoadedSample load_sample(const std::filesystem::path& path);

/// Converts loaded samples into model inputs. Words outside the vocabulary
/// map to the unknown id; each distinct one is reported once on `warnings`.
Dataset build_dataset(const DatasetManifest& manifest, const std::vector<std::string>& files,
                      const ModelConfig& model, std::ostream* warnings);

/// Model config with vocabulary, answer and feature sizes taken from the
/// manifest.
ModelConfig model_config_for(const DatasetManifest& manifest, ModelConfig base);

}  // namespace mga
