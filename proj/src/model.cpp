#include "mga/model.hpp"

#include <algorithm>
#include <cmath>

namespace mga {

std::string_view stream_name(Stream s) {
  switch (s) {
    case Stream::ce: return "ce";
    case Stream::rn: return "rn";
    case Stream::ss: return "ss";
  }
  return "?";
}

Stream parse_stream(std::string_view name) {
  for (Stream s : kStreams)
    if (stream_name(s) == name) return s;
  throw InvalidInput("unknown stream '" + std::string(name) + "' (expected ce, rn or ss)");
}

std::size_t ModelConfig::active_count() const {
  return static_cast<std::size_t>(std::count(active_streams.begin(), active_streams.end(), true));
}

void ModelConfig::validate() const {
  encoder.validate();
  if (d_emb == 0) throw InvalidInput("model: d_emb must be positive");
  if (vocab_size == 0) throw InvalidInput("model: vocab_size must be positive");
  if (answer_count == 0) throw InvalidInput("model: answer_count must be positive");
  if (active_count() == 0) throw InvalidInput("model: at least one stream must be active");
}

// ------------------------------------------------------------ ingestion

GranularityBundle ingest(const SceneGraph& sg, const QuestionParse& qp, bool merge_concepts) {
  GranularityBundle b;
  b.concepts = build_concept_level(sg);
  if (merge_concepts) b.concepts = merge_duplicate_concept_tokens(b.concepts);
  b.regions = build_region_level(sg);
  b.spatial = build_spatial_level(sg);
  b.entities = build_entity_level(qp);
  b.noun_phrases = build_noun_phrase_level(qp);
  b.sentence = build_sentence_level(qp);
  return b;
}

ModelInput prepare_input(const GranularityBundle& b, const Vocabulary& vocab,
                         bool reduce_nodes) {
  ModelInput in;
  if (reduce_nodes) {
    const ReducedGraph r = node_reduction(b.concepts, b.entities);
    const std::size_t ni = r.image_count;
    const auto split = r.labels.begin() + static_cast<std::ptrdiff_t>(ni);
    in.concept_ids = vocab.ids(std::vector<std::string>(r.labels.begin(), split));
    in.entity_ids = vocab.ids(std::vector<std::string>(split, r.labels.end()));
    GraphPairs image_pairs, question_pairs;
    // Pairs that cross the two blocks are already covered by the all-ones
    // cross-modal blocks of the layer masks.
    for (const auto& p : r.pairs) {
      if (p.src < ni && p.dst < ni) image_pairs.push_back(p);
      if (p.src >= ni && p.dst >= ni) question_pairs.push_back({p.src - ni, p.dst - ni});
    }
    in.concept_graph = pairs_to_matrix(image_pairs, ni);
    in.entity_graph = pairs_to_matrix(question_pairs, r.question_count());
  } else {
    in.concept_ids = vocab.ids(b.concepts.labels);
    in.concept_graph = pairs_to_matrix(b.concepts.pairs, b.concepts.token_count());
    in.entity_ids = vocab.ids(b.entities.labels);
    in.entity_graph = pairs_to_matrix(b.entities.pairs, b.entities.token_count());
  }
  in.region_features = b.regions.features;
  in.region_graph = pairs_to_matrix(b.regions.pairs, b.regions.token_count());
  in.noun_phrase_ids = vocab.ids(b.noun_phrases.labels);
  in.noun_phrase_graph = pairs_to_matrix(b.noun_phrases.pairs, b.noun_phrases.token_count());
  in.spatial_features = b.spatial.features;
  in.spatial_graph = pairs_to_matrix(b.spatial.pairs, b.spatial.token_count());
  in.sentence_ids = vocab.ids(b.sentence.labels);
  in.dep_adjacency = b.sentence.dep_adjacency.value_or(LeadGraph::identity(b.sentence.token_count()));
  in.sentence_graph = pairs_to_matrix(b.sentence.pairs, b.sentence.token_count());
  return in;
}

// ------------------------------------------------------------ logits

LogitValues values(const LogitsBundle& logits) {
  LogitValues out;
  for (std::size_t s = 0; s < 3; ++s) {
    if (!logits.stream[s]) continue;
    auto v = logits.stream[s]->value();
    out.stream[s] = std::vector<double>(v.begin(), v.end());
  }
  auto f = logits.fused.value();
  out.fused.assign(f.begin(), f.end());
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::size_t predict(const LogitValues& logits) {
  std::vector<double> avg = logits.fused;
  std::size_t count = 1;
  for (const auto& s : logits.stream) {
    if (!s) continue;
    if (s->size() != avg.size()) throw InvalidInput("predict: logit vectors differ in length");
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += (*s)[i];
    ++count;
  }
  for (double& v : avg) v /= static_cast<double>(count);
  return argmax(avg);
}

Prediction predict_all(const LogitValues& logits) {
  Prediction p;
  for (std::size_t s = 0; s < 3; ++s)
    if (logits.stream[s]) p.stream[s] = argmax(*logits.stream[s]);
  p.fused = argmax(logits.fused);
  p.averaged = predict(logits);
  return p;
}

ad::Var loss(const LogitsBundle& logits, std::size_t answer) {
  ad::Var total;
  for (const auto& s : logits.stream) {
    if (!s) continue;
    const ad::Var ce = ad::cross_entropy_logits(*s, answer);
    total = total.valid() ? ad::add(total, ce) : ce;
  }
  const ad::Var ce = ad::cross_entropy_logits(logits.fused, answer);
  return total.valid() ? ad::add(total, ce) : ce;
}

// ------------------------------------------------------------ embeddings

ad::Var embed_tokens(std::span<const std::size_t> ids, ParamId table, const EmbeddingParams& mlp,
                     ParamBinding& params, std::size_t d_emb) {
  const ad::Var t = params(table);
  if (t.cols() != d_emb) throw InvalidInput("embed_tokens: table width mismatch");
  const ad::Var rows = ad::gather_rows(t, ids);
  const ad::Var hidden = ad::relu(ad::linear(rows, params(mlp.w1), params(mlp.b1)));
  return ad::linear(hidden, params(mlp.w2), params(mlp.b2));
}

ad::Var project_features(const Tensor& features, const ProjectionParams& proj,
                         ParamBinding& params) {
  const ad::Var w = params(proj.w);
  const std::size_t d_in = w.rows();
  Tensor x = features;
  if (x.empty()) {
    x = Tensor({0, d_in});
  } else if (x.cols() != d_in) {
    throw InvalidInput("project_features: feature width " + std::to_string(x.cols()) +
                       " vs projection input " + std::to_string(d_in));
  }
  return ad::linear(params.tape().constant(std::move(x)), w, params(proj.b));
}

// ------------------------------------------------------------ model

namespace {

EmbeddingParams register_mlp(ParamStore& store, const std::string& prefix, std::size_t d_in,
                             std::size_t d_model, Initializer& init) {
  EmbeddingParams p;
  p.w1 = store.add(prefix + ".w1", init.linear_weight(d_in, d_model));
  p.b1 = store.add(prefix + ".b1", init.linear_bias(d_in, d_model));
  p.w2 = store.add(prefix + ".w2", init.linear_weight(d_model, d_model));
  p.b2 = store.add(prefix + ".b2", init.linear_bias(d_model, d_model));
  return p;
}

ProjectionParams register_projection(ParamStore& store, const std::string& prefix,
                                     std::size_t d_in, std::size_t d_model, Initializer& init) {
  ProjectionParams p;
  p.w = store.add(prefix + ".w", init.linear_weight(d_in, d_model));
  p.b = store.add(prefix + ".b", init.linear_bias(d_in, d_model));
  return p;
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Initializer init(config_.seed);
  const std::size_t d = config_.encoder.d_model, c = config_.answer_count;

  word_table_ = params_.add("embed.words", init.embedding({config_.vocab_size, config_.d_emb}));

  auto track = [this](Stream s, std::size_t first) {
    for (std::size_t i = first; i < params_.size(); ++i) stream_blocks_[static_cast<std::size_t>(s)].push_back({i});
  };

  if (config_.is_active(Stream::ce)) {
    const std::size_t first = params_.size();
    concept_mlp_ = register_mlp(params_, "embed.concept", config_.d_emb, d, init);
    entity_mlp_ = register_mlp(params_, "embed.entity", config_.d_emb, d, init);
    streams_[0] = register_stream(params_, "stream.ce", config_.encoder, init);
    track(Stream::ce, first);
  }
  if (config_.is_active(Stream::rn)) {
    const std::size_t first = params_.size();
    region_proj_ = register_projection(params_, "embed.region", config_.region_dim, d, init);
    noun_phrase_mlp_ = register_mlp(params_, "embed.noun_phrase", config_.d_emb, d, init);
    streams_[1] = register_stream(params_, "stream.rn", config_.encoder, init);
    track(Stream::rn, first);
  }
  if (config_.is_active(Stream::ss)) {
    const std::size_t first = params_.size();
    spatial_proj_ = register_projection(params_, "embed.spatial", config_.spatial_dim, d, init);
    sentence_mlp_ = register_mlp(params_, "embed.sentence", config_.d_emb, d, init);
    sentence_encoder_ = register_encoder(params_, "sentence", config_.encoder, init);
    streams_[2] = register_stream(params_, "stream.ss", config_.encoder, init);
    track(Stream::ss, first);
  }

  for (Stream s : kStreams) {
    if (!config_.is_active(s)) continue;
    const auto i = static_cast<std::size_t>(s);
    const std::size_t first = params_.size();
    const std::string pre = "fusion." + std::string(stream_name(s)) + ".";
    fusion_.ln_gain[i] = params_.add(pre + "ln.gain", init.constant({d}, 1.0));
    fusion_.ln_bias[i] = params_.add(pre + "ln.bias", init.constant({d}, 0.0));
    fusion_.proj[i] = params_.add(pre + "proj", init.linear_weight(d, d));
    fusion_.cls_w[i] = params_.add(pre + "cls.w", init.linear_weight(d, c));
    fusion_.cls_b[i] = params_.add(pre + "cls.b", init.linear_bias(d, c));
    track(s, first);
  }
  const std::size_t cat = d * config_.active_count();
  fusion_.fused_proj = params_.add("fusion.ga.proj", init.linear_weight(cat, d));
  fusion_.fused_cls_w = params_.add("fusion.ga.cls.w", init.linear_weight(d, c));
  fusion_.fused_cls_b = params_.add("fusion.ga.cls.b", init.linear_bias(d, c));
}

ad::Var Model::sentence_tokens(const ModelInput& input, ParamBinding& binding) const {
  const ad::Var words =
      embed_tokens(input.sentence_ids, word_table_, sentence_mlp_, binding, config_.d_emb);
  return sentence_pretransform(words, input.dep_adjacency, config_.encoder, sentence_encoder_,
                               config_.stream_options, binding);
}

std::array<std::optional<StreamOutput>, 3> Model::encode(const ModelInput& input,
                                                          ParamBinding& binding) const {
  std::array<std::optional<StreamOutput>, 3> out;
  const auto& opt = config_.stream_options;
  const auto& enc = config_.encoder;
  if (config_.is_active(Stream::ce)) {
    const ad::Var image =
        embed_tokens(input.concept_ids, word_table_, concept_mlp_, binding, config_.d_emb);
    const ad::Var question =
        embed_tokens(input.entity_ids, word_table_, entity_mlp_, binding, config_.d_emb);
    out[0] = StreamOutput{encode_stream(image, question, input.concept_graph, input.entity_graph,
                                        enc, streams_[0], opt, binding),
                          input.concept_ids.size()};
  }
  if (config_.is_active(Stream::rn)) {
    const ad::Var image = project_features(input.region_features, region_proj_, binding);
    const ad::Var question =
        embed_tokens(input.noun_phrase_ids, word_table_, noun_phrase_mlp_, binding, config_.d_emb);
    out[1] = StreamOutput{encode_stream(image, question, input.region_graph,
                                        input.noun_phrase_graph, enc, streams_[1], opt, binding),
                          image.rows()};
  }
  if (config_.is_active(Stream::ss)) {
    const ad::Var image = project_features(input.spatial_features, spatial_proj_, binding);
    const ad::Var question = sentence_tokens(input, binding);
    out[2] = StreamOutput{encode_stream(image, question, input.spatial_graph,
                                        input.sentence_graph, enc, streams_[2], opt, binding),
                          image.rows()};
  }
  return out;
}

LogitsBundle Model::fuse(const std::array<std::optional<StreamOutput>, 3>& hidden,
                         ParamBinding& binding) const {
  LogitsBundle out;
  std::vector<ad::Var> projected;
  for (Stream s : kStreams) {
    const auto i = static_cast<std::size_t>(s);
    if (!config_.is_active(s)) continue;
    if (!hidden[i]) throw InvalidInput("fuse: missing output of stream " + std::string(stream_name(s)));
    const ad::Var& h = hidden[i]->hidden;
    const ad::Var pooled = config_.pooling == Pooling::mean
                               ? ad::mean_rows(h)
                               : ad::slice_rows(h, hidden[i]->sep_index, hidden[i]->sep_index + 1);
    const ad::Var normed = ad::layer_norm_rows(pooled, binding(fusion_.ln_gain[i]),
                                               binding(fusion_.ln_bias[i]),
                                               config_.encoder.eps_norm);
    const ad::Var proj = ad::matmul(normed, binding(fusion_.proj[i]));
    projected.push_back(proj);
    out.stream[i] = ad::linear(proj, binding(fusion_.cls_w[i]), binding(fusion_.cls_b[i]));
  }
  const ad::Var fused = ad::matmul(ad::concat_cols(projected), binding(fusion_.fused_proj));
  out.fused = ad::linear(fused, binding(fusion_.fused_cls_w), binding(fusion_.fused_cls_b));
  return out;
}

LogitsBundle Model::forward(const ModelInput& input, ParamBinding& binding) const {
  return fuse(encode(input, binding), binding);
}

std::vector<ParamId> Model::stream_private_params(Stream s) const {
  return stream_blocks_[static_cast<std::size_t>(s)];
}

std::size_t Model::load_word_vectors(const WordVectors& vectors, const Vocabulary& vocab) {
  if (vectors.dim != config_.d_emb) {
    throw InvalidInput("word vectors have dimension " + std::to_string(vectors.dim) +
                       " but d_emb is " + std::to_string(config_.d_emb));
  }
  Tensor& table = params_.at(word_table_);
  if (table.rows() != vocab.size()) throw InvalidInput("word table / vocabulary size mismatch");
  std::size_t set = 0;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    auto it = vectors.vectors.find(vocab.word(id));
    if (it == vectors.vectors.end()) continue;
    std::copy(it->second.begin(), it->second.end(),
              table.storage().begin() + static_cast<std::ptrdiff_t>(id * config_.d_emb));
    ++set;
  }
  return set;
}

}  // namespace mga
