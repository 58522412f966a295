#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mga/autodiff.hpp"
#include "mga/dataset.hpp"
#include "mga/model.hpp"
#include "mga/tensor.hpp"
#include "mga/training.hpp"

namespace mga::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(MGA_FIXTURE_DIR) / name;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(std::move(shape));
  for (double& x : t.storage()) x = normal(rng);
  return t;
}

/// Largest relative error between autodiff and central differences over every
/// coordinate of every input, for loss = sum(f(inputs) .* weights).
inline double max_fd_error(std::vector<Tensor> inputs,
                           const std::function<ad::Var(std::vector<ad::Var>&)>& f,
                           double step = 1e-5) {
  auto run = [&](bool with_grad, std::vector<Tensor>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, with_grad));
    const ad::Var out = f(vars);
    const Tensor w = random_tensor(out.shape(), 99);
    const ad::Var l = ad::sum(ad::mul(out, tape.constant(w)));
    if (grads) {
      tape.backward(l);
      for (const ad::Var& v : vars) grads->emplace_back(v.shape(), std::vector<double>(v.grad().begin(), v.grad().end()));
    }
    return l.item();
  };
  std::vector<Tensor> analytic;
  run(true, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + step;
      const double plus = run(false, nullptr);
      inputs[i][j] = saved - step;
      const double minus = run(false, nullptr);
      inputs[i][j] = saved;
      const double fd = (plus - minus) / (2.0 * step);
      const double ad = analytic[i][j];
      worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8}));
    }
  }
  return worst;
}

/// Model input for a single sample file with a vocabulary built from its own
/// words, plus the matching model config.
struct SingleSample {
  ModelConfig config;
  Example example;
};

inline SingleSample single_sample(const std::filesystem::path& path, ModelConfig config = {}) {
  const LoadedSample s = load_sample(path);
  const GranularityBundle b = ingest(s.scene, s.question, config.merge_concepts);
  std::vector<std::string> words;
  for (const auto* labels : {&b.concepts.labels, &b.entities.labels, &b.noun_phrases.labels,
                             &b.sentence.labels}) {
    for (const auto& w : *labels)
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  const Vocabulary vocab(words);
  config.vocab_size = vocab.size();
  config.answer_count = 3;
  config.region_dim = b.regions.features.cols();
  config.spatial_dim = b.spatial.features.cols();
  return {config, Example{prepare_input(b, vocab, config.node_reduction), 1}};
}

}  // namespace mga::test
