#pragma once

// Command-line entry points and the run helpers they share with the
// acceptance harness.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mga/checkpoint.hpp"
#include "mga/config.hpp"
#include "mga/dataset.hpp"
#include "mga/model.hpp"
#include "mga/training.hpp"

namespace mga {

struct TrainOutcome {
  Model model;
  OptimizerState optimizer;
  std::vector<EpochMetrics> history;
  AccuracyReport train_accuracy;
  std::optional<AccuracyReport> eval_accuracy;
};

struct TrainRequest {
  RunConfig config;
  /// One JSON object per epoch, newline separated.
  std::ostream* metrics = nullptr;
  std::ostream* warnings = nullptr;
  /// Final checkpoint; with checkpoint_interval > 0 also "<path>.epoch<N>".
  std::optional<std::filesystem::path> checkpoint;
};

/// Trains on the manifest's training split and scores both splits.
TrainOutcome run_training(const DatasetManifest& manifest, const TrainRequest& request);

/// Lead-graph text dump: '#' header lines naming the tokens, then one row of
/// space-separated 0/1 per token in [image ; SEP ; question] order.
std::string dump_leadgraph(const std::filesystem::path& sample, Stream stream, std::size_t layer,
                           const ModelConfig& config = {});

struct AblationRow {
  std::string corpus;
  std::string variant;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
};

/// Full model, all-ones lead graphs and each single-stream model on
/// `manifest`; full vs all-ones again on `relation_manifest` if given.
std::vector<AblationRow> run_ablation(const DatasetManifest& manifest,
                                      const DatasetManifest* relation_manifest,
                                      const RunConfig& base, std::ostream* progress);
std::string ablation_table(const std::vector<AblationRow>& rows);

/// `args` excludes the program name. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mga
