#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mga/autodiff.hpp"
#include "mga/tensor.hpp"

namespace mga {

/// Index of a named parameter block inside a ParamStore.
struct ParamId {
  std::size_t index = 0;
};

/// Named parameter blocks in registration order. The order is part of the
/// checkpoint format and of the gradient reduction order.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor init);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& at(ParamId id) { return tensors_.at(id.index); }
  const Tensor& at(ParamId id) const { return tensors_.at(id.index); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  std::optional<ParamId> find(const std::string& name) const;

  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-tape view of a ParamStore. Parameters are bound lazily the first time
/// they are used, reading the store's storage in place.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamStore& store);

  ad::Var operator()(ParamId id);
  ad::Tape& tape() const { return *tape_; }
  const ParamStore& store() const { return *store_; }

  /// Gradients after Tape::backward(), one tensor per block in store order;
  /// unused blocks get zeros.
  std::vector<Tensor> gradients() const;
  bool is_bound(ParamId id) const { return bound_[id.index].valid(); }

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  std::vector<ad::Var> bound_;
};

/// Seeded initialisers.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  Tensor linear_weight(std::size_t fan_in, std::size_t fan_out);
  Tensor linear_bias(std::size_t fan_in, std::size_t fan_out);
  /// normal(0, 0.02)
  Tensor embedding(Shape shape);
  Tensor constant(Shape shape, double value) { return Tensor(std::move(shape), value); }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace mga
