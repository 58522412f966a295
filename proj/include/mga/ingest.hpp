#pragma once

// Structured inputs (scene graph, question parse) and their conversion into
// the six granularity levels: concept / region / spatial on the image side,
// entity / noun phrase / sentence on the question side. Every level carries
// its tokens plus the graph pairs that become its lead graph.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "mga/lead_graph.hpp"
#include "mga/tensor.hpp"

namespace mga {

struct SceneObject {
  int id = 0;
  std::string category;
  std::vector<std::string> attributes;
  std::vector<double> region;
};

struct SceneRelation {
  int subject = 0;
  std::string predicate;
  int object = 0;
};

struct SceneGraph {
  std::vector<SceneObject> objects;
  std::vector<SceneRelation> relations;
  std::size_t grid_size = 0;
  /// grid_size^2 cells in row-major order, each of the same width.
  std::vector<std::vector<double>> grid;

  /// Position of the object with the given id in `objects`.
  std::optional<std::size_t> index_of(int id) const;
  /// Throws InvalidInput on dangling relation ids, duplicate object ids,
  /// empty categories or ragged feature vectors.
  void validate() const;
};

struct QuestionParse {
  std::vector<std::string> tokens;
  std::vector<std::string> entities;
  std::vector<std::vector<std::string>> noun_phrases;
  /// (head index, dependent index) into `tokens`.
  std::vector<std::pair<std::size_t, std::size_t>> dependencies;

  void validate() const;
};

enum class Level { concepts, regions, spatial, entities, noun_phrases, sentence };
std::string_view level_name(Level level);

enum class ConceptKind { object, relation, attribute };

struct LevelData {
  Level level = Level::concepts;
  /// Token labels for concept / entity / noun-phrase / sentence levels.
  std::vector<std::string> labels;
  /// Concept level only: kind of each node in `labels`.
  std::vector<ConceptKind> kinds;
  /// Raw feature rows for region / spatial levels, [n x d].
  Tensor features;
  GraphPairs pairs;
  /// Sentence level only: symmetric dependency mask with self loops.
  std::optional<LeadGraph> dep_adjacency;

  std::size_t token_count() const;
  /// Throws InvalidInput if any pair index >= token_count().
  void check_pairs() const;
};

// ------------------------------------------------------------ image levels

/// Concept nodes: object categories in object order, each preceded by the
/// predicate nodes of the relations whose later endpoint it is; attribute
/// nodes follow all objects. Each triple contributes (subject -> predicate)
/// and (predicate -> object); each attribute contributes (owner -> attribute).
LevelData build_concept_level(const SceneGraph& sg);

/// Collapses relation nodes sharing a label, and attribute nodes sharing a
/// label, onto their first occurrence. Object nodes are never merged.
/// Duplicate pairs are removed (first occurrence kept).
LevelData merge_duplicate_concept_tokens(const LevelData& level);

/// Region features in object order; one (subject, object) pair per distinct
/// related object pair.
LevelData build_region_level(const SceneGraph& sg);

/// g^2 grid cells in row-major order, fully connected including self pairs.
LevelData build_spatial_level(const SceneGraph& sg);

// --------------------------------------------------------- question levels

LevelData build_entity_level(const QuestionParse& qp);
LevelData build_noun_phrase_level(const QuestionParse& qp);
LevelData build_sentence_level(const QuestionParse& qp);

bool is_determiner(std::string_view word);
bool is_positional_word(std::string_view word);

// ------------------------------------------------------------ node reduction

/// Concept and entity graphs fused into one node set: image nodes keep their
/// positions, question tokens whose label already exists map onto the first
/// node with that label, the rest are appended. Edge sets are unioned.
struct ReducedGraph {
  std::vector<std::string> labels;
  GraphPairs pairs;
  std::size_t image_count = 0;

  std::size_t question_count() const { return labels.size() - image_count; }
};

ReducedGraph node_reduction(const LevelData& image_level, const LevelData& question_level);

// ------------------------------------------------------------ vocabulary

/// Word vocabulary with id 0 reserved for unknown words.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  bool contains(std::string_view word) const;
  /// Unknown words map to kUnknown.
  std::size_t id(std::string_view word) const;
  std::vector<std::size_t> ids(const std::vector<std::string>& labels) const;
  /// Words in `labels` missing from the vocabulary.
  std::vector<std::string> unknown_words(const std::vector<std::string>& labels) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ------------------------------------------------------------ word vectors

/// Vectors from a text file with lines "word v1 v2 ... vd".
struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

WordVectors load_word_vectors(const std::string& path);
WordVectors parse_word_vectors(std::istream& in, const std::string& source);

// ------------------------------------------------------------ JSON

SceneGraph scene_graph_from_json(const nlohmann::json& j, const std::string& source);
QuestionParse question_parse_from_json(const nlohmann::json& j, const std::string& source);
nlohmann::json to_json(const SceneGraph& sg);
nlohmann::json to_json(const QuestionParse& qp);

}  // namespace mga
