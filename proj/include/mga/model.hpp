#pragma once

// Three-stream model: concept-entity (ce), region-noun phrase (rn) and
// spatial-sentence (ss) alignment streams, decision fusion, the four-term
// loss and averaged-logit prediction.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mga/autodiff.hpp"
#include "mga/ingest.hpp"
#include "mga/lead_graph.hpp"
#include "mga/params.hpp"
#include "mga/transformer.hpp"

namespace mga {

enum class Stream : std::size_t { ce = 0, rn = 1, ss = 2 };
inline constexpr std::array<Stream, 3> kStreams = {Stream::ce, Stream::rn, Stream::ss};
std::string_view stream_name(Stream s);
Stream parse_stream(std::string_view name);

enum class Pooling { mean, sep };

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t d_emb = 32;
  std::size_t vocab_size = 1;
  std::size_t answer_count = 2;
  std::size_t region_dim = 16;
  std::size_t spatial_dim = 16;
  Pooling pooling = Pooling::mean;
  StreamOptions stream_options;
  /// Merge repeated relation / attribute labels in the concept level.
  bool merge_concepts = true;
  /// Ablation: fuse identically labelled concept and entity nodes.
  bool node_reduction = false;
  std::array<bool, 3> active_streams = {true, true, true};
  std::uint64_t seed = 1;

  std::size_t active_count() const;
  bool is_active(Stream s) const { return active_streams[static_cast<std::size_t>(s)]; }
  void validate() const;
};

/// The six granularity levels of one (image, question) pair.
struct GranularityBundle {
  LevelData concepts, regions, spatial;
  LevelData entities, noun_phrases, sentence;
};

GranularityBundle ingest(const SceneGraph& sg, const QuestionParse& qp, bool merge_concepts);

/// Everything the network reads for one sample: token ids or features plus
/// the single-modality lead graphs of each stream.
struct ModelInput {
  std::vector<std::size_t> concept_ids;
  LeadGraph concept_graph;
  std::vector<std::size_t> entity_ids;
  LeadGraph entity_graph;

  Tensor region_features;
  LeadGraph region_graph;
  std::vector<std::size_t> noun_phrase_ids;
  LeadGraph noun_phrase_graph;

  Tensor spatial_features;
  LeadGraph spatial_graph;
  std::vector<std::size_t> sentence_ids;
  LeadGraph dep_adjacency;
  LeadGraph sentence_graph;
};

ModelInput prepare_input(const GranularityBundle& bundle, const Vocabulary& vocab,
                         bool reduce_nodes);

/// Final hidden states of one stream; SEP sits at row `sep_index`.
struct StreamOutput {
  ad::Var hidden;
  std::size_t sep_index = 0;
};

/// Per-stream logits (absent for inactive streams) and the fused logits.
struct LogitsBundle {
  std::array<std::optional<ad::Var>, 3> stream;
  ad::Var fused;
};

struct LogitValues {
  std::array<std::optional<std::vector<double>>, 3> stream;
  std::vector<double> fused;
};

LogitValues values(const LogitsBundle& logits);

struct Prediction {
  std::array<std::optional<std::size_t>, 3> stream;
  std::size_t fused = 0;
  /// argmax of the average of all present logit vectors.
  std::size_t averaged = 0;
};

/// First index of the maximum.
std::size_t argmax(std::span<const double> v);
std::size_t predict(const LogitValues& logits);
Prediction predict_all(const LogitValues& logits);

/// Unweighted sum of the cross-entropy of every present logit vector.
ad::Var loss(const LogitsBundle& logits, std::size_t answer);

struct EmbeddingParams {
  ParamId w1, b1, w2, b2;
};

struct ProjectionParams {
  ParamId w, b;
};

struct FusionParams {
  std::array<ParamId, 3> ln_gain, ln_bias, proj, cls_w, cls_b;
  ParamId fused_proj, fused_cls_w, fused_cls_b;
};

/// Label tokens: table row -> Linear -> ReLU -> Linear, giving [n x d_model].
ad::Var embed_tokens(std::span<const std::size_t> ids, ParamId table, const EmbeddingParams& mlp,
                     ParamBinding& params, std::size_t d_emb);
/// Raw feature rows [n x d_in] -> Linear -> [n x d_model].
ad::Var project_features(const Tensor& features, const ProjectionParams& proj,
                         ParamBinding& params);

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const FusionParams& fusion_params() const { return fusion_; }

  /// Hidden states of every active stream.
  std::array<std::optional<StreamOutput>, 3> encode(const ModelInput& input,
                                                     ParamBinding& binding) const;
  /// Pool each stream (mean or SEP row), LayerNorm, project; concatenate the
  /// projections in ce, rn, ss order and project again for the fused head.
  LogitsBundle fuse(const std::array<std::optional<StreamOutput>, 3>& hidden,
                    ParamBinding& binding) const;
  LogitsBundle forward(const ModelInput& input, ParamBinding& binding) const;

  /// Context-aware sentence tokens from the dependency-masked pre-encoder.
  ad::Var sentence_tokens(const ModelInput& input, ParamBinding& binding) const;

  /// Parameter block ids owned by one stream (encoder, SEP, its token
  /// embeddings, its fusion head). The shared word table is not included.
  std::vector<ParamId> stream_private_params(Stream s) const;

  /// Copies the named rows of a word-vector file into the word table. The
  /// file dimension must equal d_emb. Returns the number of rows set.
  std::size_t load_word_vectors(const WordVectors& vectors, const Vocabulary& vocab);

  ParamId word_table() const { return word_table_; }

 private:
  ModelConfig config_;
  ParamStore params_;
  ParamId word_table_;
  EmbeddingParams concept_mlp_, entity_mlp_, noun_phrase_mlp_, sentence_mlp_;
  ProjectionParams region_proj_, spatial_proj_;
  std::array<StreamParams, 3> streams_;
  EncoderParams sentence_encoder_;
  FusionParams fusion_;
  std::vector<ParamId> stream_blocks_[3];
};

}  // namespace mga
