#include "mga/params.hpp"

#include <cmath>

namespace mga {

ParamId ParamStore::add(std::string name, Tensor init) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter block '" + name + "'");
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(init));
  return ParamId{tensors_.size() - 1};
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamBinding::ParamBinding(ad::Tape& tape, const ParamStore& store)
    : tape_(&tape), store_(&store), bound_(store.size()) {}

ad::Var ParamBinding::operator()(ParamId id) {
  ad::Var& v = bound_.at(id.index);
  if (!v.valid()) v = tape_->bind(store_->at(id), true);
  return v;
}

std::vector<Tensor> ParamBinding::gradients() const {
  std::vector<Tensor> out;
  out.reserve(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    const Tensor& p = store_->at(i);
    if (bound_[i].valid() && !bound_[i].grad().empty()) {
      auto g = bound_[i].grad();
      out.emplace_back(p.shape(), std::vector<double>(g.begin(), g.end()));
    } else {
      out.emplace_back(p.shape(), 0.0);
    }
  }
  return out;
}

Tensor Initializer::linear_weight(std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({fan_in, fan_out});
  for (double& v : t.storage()) v = dist(rng_);
  return t;
}

Tensor Initializer::linear_bias(std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({fan_out});
  for (double& v : t.storage()) v = dist(rng_);
  return t;
}

Tensor Initializer::embedding(Shape shape) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = dist(rng_);
  return t;
}

}  // namespace mga
