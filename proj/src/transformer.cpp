#include "mga/transformer.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "mga/kernels.hpp"

namespace mga {

void EncoderConfig::validate() const {
  if (num_layers == 0) throw InvalidInput("encoder: num_layers must be positive");
  if (num_heads == 0) throw InvalidInput("encoder: num_heads must be positive");
  if (d_model == 0 || d_model % num_heads != 0) {
    throw InvalidInput("encoder: d_model " + std::to_string(d_model) +
                       " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (d_ff == 0) throw InvalidInput("encoder: d_ff must be positive");
  if (max_len == 0) throw InvalidInput("encoder: max_len must be positive");
  if (!(eps_norm > 0.0) || !(eps_row > 0.0)) throw InvalidInput("encoder: eps values must be > 0");
}

EncoderParams register_encoder(ParamStore& store, const std::string& prefix,
                               const EncoderConfig& config, Initializer& init) {
  config.validate();
  const std::size_t d = config.d_model, f = config.d_ff;
  EncoderParams p;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string pre = prefix + ".layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.w_q = store.add(pre + "attn.w_q", init.linear_weight(d, d));
    lp.w_k = store.add(pre + "attn.w_k", init.linear_weight(d, d));
    lp.w_v = store.add(pre + "attn.w_v", init.linear_weight(d, d));
    lp.w_o = store.add(pre + "attn.w_o", init.linear_weight(d, d));
    lp.ff1_w = store.add(pre + "ffn.w1", init.linear_weight(d, f));
    lp.ff1_b = store.add(pre + "ffn.b1", init.linear_bias(d, f));
    lp.ff2_w = store.add(pre + "ffn.w2", init.linear_weight(f, d));
    lp.ff2_b = store.add(pre + "ffn.b2", init.linear_bias(f, d));
    lp.ln1_gain = store.add(pre + "ln1.gain", init.constant({d}, 1.0));
    lp.ln1_bias = store.add(pre + "ln1.bias", init.constant({d}, 0.0));
    lp.ln2_gain = store.add(pre + "ln2.gain", init.constant({d}, 1.0));
    lp.ln2_bias = store.add(pre + "ln2.bias", init.constant({d}, 0.0));
    p.layers.push_back(lp);
  }
  p.positional = store.add(prefix + ".positional", init.embedding({config.max_len, d}));
  return p;
}

// ------------------------------------------------------------ attention

namespace {

// Per-head forward state kept for the backward rule.
struct AttentionCache {
  std::size_t n = 0, heads = 0, dk = 0;
  std::vector<double> probs;    // softmax weights A, [heads][n][n]
  std::vector<double> weights;  // renormalised masked weights P, [heads][n][n]
  std::vector<double> row_sum;  // sum of A .* G per row, [heads][n]
};

}  // namespace

ad::Var ga_attention_heads(const ad::Var& q, const ad::Var& k, const ad::Var& v,
                           const LeadGraph& mask, std::size_t num_heads, double eps_row) {
  const std::size_t n = q.rows(), width = q.cols();
  if (k.rows() != n || v.rows() != n || k.cols() != width || v.cols() != width) {
    throw InvalidInput("ga_attention: Q, K, V shapes disagree");
  }
  if (mask.size() != n) {
    throw InvalidInput("ga_attention: mask is " + std::to_string(mask.size()) + "x" +
                       std::to_string(mask.size()) + " for " + std::to_string(n) + " tokens");
  }
  if (num_heads == 0 || width % num_heads != 0) {
    throw InvalidInput("ga_attention: width " + std::to_string(width) +
                       " not divisible into " + std::to_string(num_heads) + " heads");
  }
  const std::size_t dk = width / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  auto cache = std::make_shared<AttentionCache>();
  cache->n = n;
  cache->heads = num_heads;
  cache->dk = dk;
  cache->probs.assign(num_heads * n * n, 0.0);
  cache->weights.assign(num_heads * n * n, 0.0);
  cache->row_sum.assign(num_heads * n, 0.0);

  auto qv = q.value(), kv = k.value(), vv = v.value();
  std::vector<double> out(n * width, 0.0);
  std::vector<double> scores(n * n);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t c0 = h * dk;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += qv[i * width + c0 + c] * kv[j * width + c0 + c];
        scores[i * n + j] = s * scale;
      }
    double* a = cache->probs.data() + h * n * n;
    double* p = cache->weights.data() + h * n * n;
    kernels::softmax_rows(scores.data(), a, n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (mask(i, j)) r += a[i * n + j];
      cache->row_sum[h * n + i] = r;
      if (r > eps_row) {
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = mask(i, j) ? a[i * n + j] / r : 0.0;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double w = p[i * n + j];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < dk; ++c) out[i * width + c0 + c] += w * vv[j * width + c0 + c];
      }
    }
  }

  const ad::Var ins[] = {q, k, v};
  return q.tape().record(
      {n, width}, std::move(out), ins,
      [q, k, v, mask, cache, eps_row, scale](std::span<const double> g, std::span<const double>,
                                             ad::Tape& t) {
        const std::size_t n = cache->n, dk = cache->dk, width = cache->heads * dk;
        auto qv = q.value(), kv = k.value(), vv = v.value();
        auto gq = t.grad_of(q);
        auto gk = t.grad_of(k);
        auto gv = t.grad_of(v);
        std::vector<double> d_weights(n * n), d_scores(n * n);
        for (std::size_t h = 0; h < cache->heads; ++h) {
          const std::size_t c0 = h * dk;
          const double* a = cache->probs.data() + h * n * n;
          const double* p = cache->weights.data() + h * n * n;
          // dV = P^T dO ; dP = dO V^T
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double w = p[i * n + j];
              double s = 0.0;
              for (std::size_t c = 0; c < dk; ++c) {
                const double go = g[i * width + c0 + c];
                s += go * vv[j * width + c0 + c];
                if (!gv.empty() && w != 0.0) gv[j * width + c0 + c] += w * go;
              }
              d_weights[i * n + j] = s;
            }
          // Through the row renormalisation and the mask to dA, then through
          // the softmax to the scores.
          for (std::size_t i = 0; i < n; ++i) {
            const double r = cache->row_sum[h * n + i];
            if (!(r > eps_row)) {
              for (std::size_t j = 0; j < n; ++j) d_scores[i * n + j] = 0.0;
              continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += d_weights[i * n + j] * p[i * n + j];
            double da_dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double da = mask(i, j) ? (d_weights[i * n + j] - dot) / r : 0.0;
              d_scores[i * n + j] = da;
              da_dot += da * a[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j)
              d_scores[i * n + j] = a[i * n + j] * (d_scores[i * n + j] - da_dot) * scale;
          }
          // dQ = dS K ; dK = dS^T Q
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double ds = d_scores[i * n + j];
              if (ds == 0.0) continue;
              for (std::size_t c = 0; c < dk; ++c) {
                if (!gq.empty()) gq[i * width + c0 + c] += ds * kv[j * width + c0 + c];
                if (!gk.empty()) gk[j * width + c0 + c] += ds * qv[i * width + c0 + c];
              }
            }
        }
      });
}

ad::Var ga_attention(const ad::Var& q, const ad::Var& k, const ad::Var& v, const LeadGraph& mask,
                     double eps_row) {
  return ga_attention_heads(q, k, v, mask, 1, eps_row);
}

ad::Var multi_head_ga(const ad::Var& x, const LeadGraph& mask, const LayerParams& p,
                      const EncoderConfig& config, ParamBinding& params) {
  const ad::Var q = ad::matmul(x, params(p.w_q));
  const ad::Var k = ad::matmul(x, params(p.w_k));
  const ad::Var v = ad::matmul(x, params(p.w_v));
  const ad::Var heads = ga_attention_heads(q, k, v, mask, config.num_heads, config.eps_row);
  return ad::matmul(heads, params(p.w_o));
}

ad::Var encoder_layer(const ad::Var& x, const LeadGraph& mask, const LayerParams& p,
                      const EncoderConfig& config, ParamBinding& params) {
  const ad::Var attn = multi_head_ga(x, mask, p, config, params);
  const ad::Var y = ad::layer_norm_rows(ad::add(x, attn), params(p.ln1_gain), params(p.ln1_bias),
                                        config.eps_norm);
  const ad::Var hidden = ad::relu(ad::linear(y, params(p.ff1_w), params(p.ff1_b)));
  const ad::Var ff = ad::linear(hidden, params(p.ff2_w), params(p.ff2_b));
  return ad::layer_norm_rows(ad::add(y, ff), params(p.ln2_gain), params(p.ln2_bias),
                             config.eps_norm);
}

ad::Var add_positions(const ad::Var& x, const EncoderParams& p, const EncoderConfig& config,
                      ParamBinding& params) {
  const std::size_t n = x.rows();
  if (n > config.max_len) {
    throw InvalidInput("sequence of " + std::to_string(n) + " tokens exceeds max_len " +
                       std::to_string(config.max_len));
  }
  return ad::add(x, ad::slice_rows(params(p.positional), 0, n));
}

// ------------------------------------------------------------ streams

ImageSide::ImageSide(ad::Var tokens, LeadGraph graph)
    : tokens_(std::move(tokens)), graph_(std::move(graph)) {
  if (tokens_.rows() != graph_.size()) {
    throw InvalidInput("image side: " + std::to_string(tokens_.rows()) + " tokens vs " +
                       std::to_string(graph_.size()) + "-node lead graph");
  }
}

void ImageSide::append_sep(const ad::Var& sep, bool connect) {
  if (has_sep_) throw std::logic_error("SEP token already appended to this image side");
  const std::size_t d = sep.size();
  const ad::Var row = ad::reshape(sep, {1, d});
  const ad::Var parts[] = {tokens_, row};
  tokens_ = ad::concat_rows(parts);
  graph_ = mga::append_sep(graph_, connect);
  has_sep_ = true;
}

StreamParams register_stream(ParamStore& store, const std::string& prefix,
                             const EncoderConfig& config, Initializer& init) {
  StreamParams p;
  p.encoder = register_encoder(store, prefix, config, init);
  p.sep = store.add(prefix + ".sep", init.embedding({config.d_model}));
  return p;
}

std::array<LeadGraph, 3> stream_masks(const LeadGraph& image_with_sep, const LeadGraph& question,
                                      const StreamOptions& options) {
  if (!options.use_lead_graphs) {
    const std::size_t n = image_with_sep.size() + question.size();
    return {LeadGraph::ones(n), LeadGraph::ones(n), LeadGraph::ones(n)};
  }
  return layer_masks(image_with_sep, question);
}

ad::Var encode_stream(const ad::Var& image_tokens, const ad::Var& question_tokens,
                      const LeadGraph& image_graph, const LeadGraph& question_graph,
                      const EncoderConfig& config, const StreamParams& p,
                      const StreamOptions& options, ParamBinding& params) {
  if (question_tokens.rows() != question_graph.size()) {
    throw InvalidInput("encode_stream: " + std::to_string(question_tokens.rows()) +
                       " question tokens vs " + std::to_string(question_graph.size()) +
                       "-node lead graph");
  }
  ImageSide image(image_tokens, image_graph);
  image.append_sep(params(p.sep), options.sep_connect);
  const auto masks = stream_masks(image.graph(), question_graph, options);

  const ad::Var parts[] = {image.tokens(), question_tokens};
  ad::Var x = add_positions(ad::concat_rows(parts), p.encoder, config, params);
  for (std::size_t l = 0; l < p.encoder.layers.size(); ++l) {
    x = encoder_layer(x, mask_for_layer(masks, l), p.encoder.layers[l], config, params);
  }
  return x;
}

ad::Var sentence_pretransform(const ad::Var& words, const LeadGraph& dep_adjacency,
                              const EncoderConfig& config, const EncoderParams& p,
                              const StreamOptions& options, ParamBinding& params) {
  if (dep_adjacency.size() != words.rows()) {
    throw InvalidInput("sentence_pretransform: adjacency size " +
                       std::to_string(dep_adjacency.size()) + " vs " +
                       std::to_string(words.rows()) + " words");
  }
  if (!dep_adjacency.is_symmetric() || !dep_adjacency.has_unit_diagonal()) {
    throw InvalidInput("sentence_pretransform: adjacency must be symmetric with unit diagonal");
  }
  const LeadGraph mask =
      options.use_lead_graphs ? dep_adjacency : LeadGraph::ones(dep_adjacency.size());
  ad::Var x = add_positions(words, p, config, params);
  for (const auto& layer : p.layers) x = encoder_layer(x, mask, layer, config, params);
  return x;
}

}  // namespace mga
