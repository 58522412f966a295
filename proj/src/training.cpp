#include "mga/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mga {

// ------------------------------------------------------------ Adam

OptimizerState OptimizerState::zeros_like(const ParamStore& params, AdamConfig hyper) {
  OptimizerState s;
  s.hyper = hyper;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.first_moment.emplace_back(params.at(i).shape(), 0.0);
    s.second_moment.emplace_back(params.at(i).shape(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<Tensor>& grads, OptimizerState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw InvalidInput("adam_step: gradient / state block count does not match parameters");
  }
  for (std::size_t b = 0; b < grads.size(); ++b) {
    if (grads[b].size() != params.at(b).size()) {
      throw InvalidInput("adam_step: gradient shape mismatch for '" + params.name(b) + "'");
    }
    if (!grads[b].all_finite()) {
      throw NonFiniteGradient("non-finite gradient in block '" + params.name(b) + "' at step " +
                              std::to_string(state.step + 1));
    }
  }
  const AdamConfig& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t b = 0; b < grads.size(); ++b) {
    auto theta = params.at(b).data();
    auto g = grads[b].data();
    auto m = state.first_moment[b].data();
    auto v = state.second_moment[b].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

// ------------------------------------------------------------ metrics

namespace {

nlohmann::ordered_json accuracy_json(const Accuracy& a) {
  nlohmann::ordered_json j;
  for (Stream s : kStreams) {
    const auto& v = a.stream[static_cast<std::size_t>(s)];
    j["acc_" + std::string(stream_name(s))] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
  }
  j["acc_ga"] = a.fused;
  j["acc_avg"] = a.averaged;
  return j;
}

struct AccuracyCounter {
  std::array<std::size_t, 3> stream{};
  std::array<bool, 3> present{};
  std::size_t fused = 0, averaged = 0, total = 0;

  void add(const Prediction& p, std::size_t answer) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (!p.stream[s]) continue;
      present[s] = true;
      stream[s] += *p.stream[s] == answer;
    }
    fused += p.fused == answer;
    averaged += p.averaged == answer;
    ++total;
  }

  Accuracy result() const {
    Accuracy a;
    const double n = static_cast<double>(total);
    for (std::size_t s = 0; s < 3; ++s)
      if (present[s]) a.stream[s] = static_cast<double>(stream[s]) / n;
    a.fused = static_cast<double>(fused) / n;
    a.averaged = static_cast<double>(averaged) / n;
    return a;
  }
};

// Runs body(i) for i in [0, n) on the OpenMP team; the first exception is
// rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#ifdef _OPENMP
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(team)
#endif
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(mga_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

nlohmann::ordered_json EpochMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  const nlohmann::ordered_json acc = accuracy_json(accuracy);
  for (const auto& [k, v] : acc.items()) j[k] = v;
  return j;
}

nlohmann::ordered_json AccuracyReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = count;
  const nlohmann::ordered_json acc = accuracy_json(accuracy);
  for (const auto& [k, v] : acc.items()) j[k] = v;
  return j;
}

// ------------------------------------------------------------ gradients

SampleResult sample_gradient(const Model& model, const Example& example) {
  ad::Tape tape;
  ParamBinding binding(tape, model.params());
  const LogitsBundle logits = model.forward(example.input, binding);
  const ad::Var l = loss(logits, example.answer);
  tape.backward(l);
  SampleResult r;
  r.loss = l.item();
  r.grads = binding.gradients();
  r.prediction = predict_all(values(logits));
  return r;
}

BatchResult batch_gradient(const Model& model, const Dataset& data,
                           const std::vector<std::size_t>& indices, int threads) {
  if (indices.empty()) throw InvalidInput("batch_gradient: empty batch");
  std::vector<SampleResult> per_sample(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    per_sample[i] = sample_gradient(model, data.at(indices[i]));
  });

  BatchResult out;
  out.grads = std::move(per_sample[0].grads);
  for (std::size_t i = 1; i < per_sample.size(); ++i) {
    for (std::size_t b = 0; b < out.grads.size(); ++b) {
      auto acc = out.grads[b].data();
      auto g = per_sample[i].grads[b].data();
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& t : out.grads)
    for (double& v : t.storage()) v *= inv;
  for (auto& r : per_sample) {
    out.losses.push_back(r.loss);
    out.predictions.push_back(r.prediction);
  }
  return out;
}

namespace {

void clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads)
    for (double v : t.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double s = max_norm / norm;
  for (auto& t : grads)
    for (double& v : t.storage()) v *= s;
}

}  // namespace

std::vector<EpochMetrics> train(Model& model, OptimizerState& state, const Dataset& data,
                                const TrainConfig& config, const EpochCallback& on_epoch) {
  if (data.empty()) throw InvalidInput("train: empty dataset");
  if (config.batch_size == 0) throw InvalidInput("train: batch_size must be >= 1");
  const std::size_t classes = model.config().answer_count;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].answer >= classes) {
      throw InvalidInput("train: sample " + std::to_string(i) + " answer id " +
                         std::to_string(data[i].answer) + " outside the answer vocabulary of " +
                         std::to_string(classes));
    }
  }
  if (state.first_moment.size() != model.params().size()) {
    throw InvalidInput("train: optimizer state does not match the model parameters");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochMetrics> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    AccuracyCounter counter;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      BatchResult r = batch_gradient(model, data, batch, config.threads);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        loss_sum += r.losses[i];
        counter.add(r.predictions[i], data[batch[i]].answer);
      }
      if (config.grad_clip > 0.0) clip_global_norm(r.grads, config.grad_clip);
      adam_step(model.params(), r.grads, state);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(data.size());
    m.accuracy = counter.result();
    history.push_back(m);
    if (on_epoch) on_epoch(m, model, state);
  }
  return history;
}

AccuracyReport evaluate(const Model& model, const Dataset& data, int threads) {
  if (data.empty()) throw InvalidInput("evaluate: empty dataset");
  std::vector<Prediction> preds(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    ad::Tape tape;
    ParamBinding binding(tape, model.params());
    preds[i] = predict_all(values(model.forward(data[i].input, binding)));
  });
  AccuracyCounter counter;
  for (std::size_t i = 0; i < data.size(); ++i) counter.add(preds[i], data[i].answer);
  AccuracyReport r;
  r.count = data.size();
  r.accuracy = counter.result();
  return r;
}

// ------------------------------------------------------------ gradcheck

bool GradcheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.passed; });
}

std::string GradcheckReport::to_text() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& b : blocks) {
    os << (b.passed ? "PASS " : "FAIL ") << b.block << "  coords=" << b.checked
       << "  max_rel_err=" << std::scientific << b.max_rel_error << "  max_abs_err=" << b.max_abs_error << "  (ad " << b.worst_analytic
       << ", fd " << b.worst_numeric << ")" << std::defaultfloat << '\n';
  }
  os << (passed() ? "gradcheck passed" : "gradcheck FAILED") << " (" << blocks.size()
     << " blocks, step " << step << ", tol " << tolerance;
  if (abs_tolerance > 0.0) os << ", abs tol " << abs_tolerance;
  os << ")\n";
  return os.str();
}

GradcheckReport gradcheck(ParamStore& params, const LossFn& loss_fn, double step,
                          double tolerance, std::size_t coords_per_block, std::uint64_t seed,
                          double abs_tolerance) {
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    ParamBinding binding(tape, params);
    const ad::Var l = loss_fn(binding);
    tape.backward(l);
    analytic = binding.gradients();
  }
  auto evaluate_loss = [&]() {
    ad::Tape tape;
    ParamBinding binding(tape, params);
    return loss_fn(binding).item();
  };

  std::mt19937_64 rng(seed);
  GradcheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  report.abs_tolerance = abs_tolerance;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor& theta = params.at(b);
    const std::size_t n = theta.size();
    std::set<std::size_t> coords;
    if (n > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t k = 0; k < coords_per_block && coords.size() < n; ++k) coords.insert(pick(rng));
      std::size_t largest = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(analytic[b][i]) > std::abs(analytic[b][largest])) largest = i;
      coords.insert(largest);
    }
    GradcheckEntry entry;
    entry.block = params.name(b);
    for (std::size_t i : coords) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double plus = evaluate_loss();
      theta[i] = saved - step;
      const double minus = evaluate_loss();
      theta[i] = saved;
      const double fd = (plus - minus) / (2.0 * step);
      const double ad = analytic[b][i];
      const double abs = std::abs(ad - fd);
      const double rel = abs / std::max({std::abs(ad), std::abs(fd), 1e-8});
      if (rel >= entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_analytic = ad;
        entry.worst_numeric = fd;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs);
      if (!(rel < tolerance || (abs_tolerance > 0.0 && abs < abs_tolerance))) entry.passed = false;
      ++entry.checked;
    }
    report.blocks.push_back(entry);
  }
  return report;
}

GradcheckReport gradcheck(Model& model, const Example& example, double step, double tolerance,
                          std::size_t coords_per_block, std::uint64_t seed, double abs_tolerance) {
  const Model& view = model;
  return gradcheck(
      model.params(),
      [&](ParamBinding& binding) { return loss(view.forward(example.input, binding), example.answer); },
      step, tolerance, coords_per_block, seed, abs_tolerance);
}

void rescale_embedding_blocks(Model& model, double factor) {
  ParamStore& p = model.params();
  for (std::size_t b = 0; b < p.size(); ++b) {
    const std::string& name = p.name(b);
    if (name == "embed.words" || name.ends_with(".positional") || name.ends_with(".sep")) {
      for (double& x : p.at(b).storage()) x *= factor;
    }
  }
}

}  // namespace mga
