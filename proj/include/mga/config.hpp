#pragma once

// Flat "key = value" text documents used for run configs and toy-world
// specs. '#' starts a comment; blank lines are ignored.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mga/model.hpp"
#include "mga/training.hpp"

namespace mga {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source);
  static KeyValueConfig parse_text(const std::string& text, const std::string& source);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; whitespace around items is trimmed.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  /// Throws InvalidInput naming the first key never read through a getter.
  void reject_unused() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  const std::string* lookup(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

/// Everything a `train` run reads from its config file. Dataset-derived
/// sizes (vocabulary, answers, feature widths) are filled in from the
/// manifest, not from the file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AdamConfig adam;
  std::string word_vectors;
};

/// Desk-scale defaults: d_model 32, 3 layers, 8 heads, d_ff 128, lr 1e-4,
/// batch 16.
RunConfig default_run_config();
RunConfig run_config_from(const KeyValueConfig& kv);
/// Round-trips through run_config_from(parse_text(...)).
std::string to_text(const RunConfig& config);

}  // namespace mga
