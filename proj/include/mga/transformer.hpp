#pragma once

// Granularity-alignment transformer encoder: multi-head attention whose
// softmax weights are multiplied by a binary lead graph and renormalised per
// row, wrapped in post-norm encoder layers.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mga/autodiff.hpp"
#include "mga/lead_graph.hpp"
#include "mga/params.hpp"

namespace mga {

struct EncoderConfig {
  std::size_t num_layers = 3;
  std::size_t num_heads = 8;
  std::size_t d_model = 32;
  std::size_t d_ff = 128;
  /// Rows of the learned positional table; longer sequences are rejected.
  std::size_t max_len = 64;
  double eps_norm = 1e-5;
  /// Masked rows whose surviving weight sums to at most this are zeroed.
  double eps_row = 1e-12;

  std::size_t d_k() const { return d_model / num_heads; }
  void validate() const;
};

struct LayerParams {
  // Per-head projections are the column blocks of these d_model x d_model
  // matrices: head h uses columns [h*d_k, (h+1)*d_k).
  ParamId w_q, w_k, w_v, w_o;
  ParamId ff1_w, ff1_b, ff2_w, ff2_b;
  ParamId ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderParams {
  std::vector<LayerParams> layers;
  ParamId positional;
};

EncoderParams register_encoder(ParamStore& store, const std::string& prefix,
                               const EncoderConfig& config, Initializer& init);

/// Masked attention for one head:
///   A = softmax(Q K^T / sqrt(d_k)),  M = A .* G,
///   out = rownorm(M) V, where an all-masked row (sum <= eps_row) yields zeros.
ad::Var ga_attention(const ad::Var& q, const ad::Var& k, const ad::Var& v, const LeadGraph& mask,
                     double eps_row);

/// The same computation for `num_heads` heads packed side by side in the
/// columns of q, k, v ([n x heads*d_k]); all heads share one mask. Output is
/// the concatenation of the head outputs.
ad::Var ga_attention_heads(const ad::Var& q, const ad::Var& k, const ad::Var& v,
                           const LeadGraph& mask, std::size_t num_heads, double eps_row);

ad::Var multi_head_ga(const ad::Var& x, const LeadGraph& mask, const LayerParams& p,
                      const EncoderConfig& config, ParamBinding& params);

/// Y = LN(X + MHGA(X, G));  Z = LN(Y + FFN(Y)), FFN = ReLU two-layer.
ad::Var encoder_layer(const ad::Var& x, const LeadGraph& mask, const LayerParams& p,
                      const EncoderConfig& config, ParamBinding& params);

/// Adds the first n rows of the positional table to x [n x d_model].
ad::Var add_positions(const ad::Var& x, const EncoderParams& p, const EncoderConfig& config,
                      ParamBinding& params);

/// Image-side tokens and lead graph of one stream. The SEP token may be
/// appended exactly once; a second append throws std::logic_error.
class ImageSide {
 public:
  ImageSide(ad::Var tokens, LeadGraph graph);

  void append_sep(const ad::Var& sep, bool connect);
  bool has_sep() const { return has_sep_; }
  const ad::Var& tokens() const { return tokens_; }
  const LeadGraph& graph() const { return graph_; }
  std::size_t size() const { return graph_.size(); }

 private:
  ad::Var tokens_;
  LeadGraph graph_;
  bool has_sep_ = false;
};

struct StreamParams {
  EncoderParams encoder;
  ParamId sep;
};

struct StreamOptions {
  /// false replaces every layer mask by all-ones (unguided attention).
  bool use_lead_graphs = true;
  /// SEP row/column open to the whole image block.
  bool sep_connect = true;
};

StreamParams register_stream(ParamStore& store, const std::string& prefix,
                             const EncoderConfig& config, Initializer& init);

/// Per-layer masks for a stream whose image side (with SEP) has graph
/// `image_with_sep` and whose question side has graph `question`.
std::array<LeadGraph, 3> stream_masks(const LeadGraph& image_with_sep, const LeadGraph& question,
                                      const StreamOptions& options);

/// Appends SEP to the image tokens, concatenates [image ; SEP ; question],
/// adds positions and runs the encoder with layer i masked by mask i.
/// Returns hidden states [(nI + 1 + nQ) x d_model].
ad::Var encode_stream(const ad::Var& image_tokens, const ad::Var& question_tokens,
                      const LeadGraph& image_graph, const LeadGraph& question_graph,
                      const EncoderConfig& config, const StreamParams& p,
                      const StreamOptions& options, ParamBinding& params);

/// Context-aware question words: an encoder stack with the dependency
/// adjacency as the mask of every layer. The adjacency must be symmetric
/// with a unit diagonal.
ad::Var sentence_pretransform(const ad::Var& words, const LeadGraph& dep_adjacency,
                              const EncoderConfig& config, const EncoderParams& p,
                              const StreamOptions& options, ParamBinding& params);

}  // namespace mga
