#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mga/model.hpp"
#include "mga/params.hpp"

namespace mga {

struct Example {
  ModelInput input;
  std::size_t answer = 0;
};
using Dataset = std::vector<Example>;

// ------------------------------------------------------------ Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig hyper;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static OptimizerState zeros_like(const ParamStore& params, AdamConfig hyper);
};

/// Thrown when a gradient entry is NaN or infinite; names the block.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update of every block.
void adam_step(ParamStore& params, const std::vector<Tensor>& grads, OptimizerState& state);

// ------------------------------------------------------------ training

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::uint64_t seed = 7;
  /// Global L2 norm clip; 0 disables.
  double grad_clip = 0.0;
  std::size_t checkpoint_interval = 0;
  /// OpenMP threads for the per-sample loop; 0 keeps the runtime default.
  int threads = 0;
};

/// Accuracy columns reported everywhere: ce, rn, ss, GA, averaged.
struct Accuracy {
  std::array<std::optional<double>, 3> stream;
  double fused = 0.0;
  double averaged = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  Accuracy accuracy;

  nlohmann::ordered_json to_json() const;
};

/// Loss, gradient and prediction of one sample.
struct SampleResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  Prediction prediction;
};

SampleResult sample_gradient(const Model& model, const Example& example);

/// Mean of per-sample gradients, summed in sample order.
struct BatchResult {
  std::vector<Tensor> grads;
  std::vector<double> losses;
  std::vector<Prediction> predictions;
};

BatchResult batch_gradient(const Model& model, const Dataset& data,
                           const std::vector<std::size_t>& indices, int threads = 0);

using EpochCallback = std::function<void(const EpochMetrics&, const Model&, const OptimizerState&)>;

/// Seeded minibatch training. Returns one metrics record per epoch.
std::vector<EpochMetrics> train(Model& model, OptimizerState& state, const Dataset& data,
                                const TrainConfig& config, const EpochCallback& on_epoch = {});

struct AccuracyReport {
  std::size_t count = 0;
  Accuracy accuracy;
  nlohmann::ordered_json to_json() const;
};

/// Top-1 accuracy of every head and of the averaged prediction. Throws
/// InvalidInput on an empty dataset.
AccuracyReport evaluate(const Model& model, const Dataset& data, int threads = 0);

// ------------------------------------------------------------ gradcheck

struct GradcheckEntry {
  std::string block;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  /// Analytic and central-difference values at the worst coordinate.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> blocks;
  double step = 0.0;
  double tolerance = 0.0;
  double abs_tolerance = 0.0;

  bool passed() const;
  std::string to_text() const;
};

using LossFn = std::function<ad::Var(ParamBinding&)>;

/// Central finite differences of `loss` against its autodiff gradient on a
/// seeded random subset of coordinates per block, plus the coordinate with
/// the largest analytic gradient. Relative error is
/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8). A coordinate passes when its
/// relative error is below `tolerance` or, if `abs_tolerance` > 0, its
/// absolute error is below `abs_tolerance`.
GradcheckReport gradcheck(ParamStore& params, const LossFn& loss, double step, double tolerance,
                          std::size_t coords_per_block, std::uint64_t seed,
                          double abs_tolerance = 0.0);

GradcheckReport gradcheck(Model& model, const Example& example, double step, double tolerance,
                          std::size_t coords_per_block = 6, std::uint64_t seed = 1,
                          double abs_tolerance = 0.0);

/// Multiplies every normal(0, 0.02) block (word table, positional tables,
/// SEP vectors) by `factor`. At the raw initial scale all question tokens
/// are nearly identical and first-layer attention gradients fall below
/// what central differences resolve; 50 gives unit-variance tables.
void rescale_embedding_blocks(Model& model, double factor);

}  // namespace mga
