#include "mga/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "mga/kernels.hpp"

namespace mga::ad {

// ---------------------------------------------------------------- Var

const Shape& Var::shape() const { return tape_->node(*this).shape; }
std::size_t Var::size() const { return tape_->node(*this).length; }

std::size_t Var::rows() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[0];
  if (s.size() == 1) return 1;
  throw InvalidInput("rows() on tensor of shape " + shape_string(s));
}

std::size_t Var::cols() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  throw InvalidInput("cols() on tensor of shape " + shape_string(s));
}

bool Var::requires_grad() const { return tape_->node(*this).requires_grad; }

std::span<const double> Var::value() const {
  const auto& n = tape_->node(*this);
  return {n.data(), n.length};
}

double Var::item() const {
  if (size() != 1) throw InvalidInput("item() on non-scalar " + shape_string(shape()));
  return value()[0];
}

std::span<const double> Var::grad() const { return tape_->node(*this).grad; }

Tensor Var::to_tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------- Tape

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.shape = value.shape();
  n.length = value.size();
  n.owned = std::move(value.storage());
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::bind(const Tensor& value, bool requires_grad) {
  Node n;
  n.shape = value.shape();
  n.length = value.size();
  n.external = value.data().data();
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
                 BackwardFn backward) {
  assert(shape_size(shape) == value.size());
  Node n;
  n.shape = std::move(shape);
  n.length = value.size();
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    assert(in.tape_ == this);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw InvalidInput("backward: loss lives on another tape");
  if (node(loss).length != 1) {
    throw InvalidInput("backward: loss must be scalar, got shape " +
                       shape_string(node(loss).shape));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad.assign(n.length, 0.0);
    } else {
      n.grad.clear();
    }
  }
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward) continue;
    n.backward(std::span<const double>(n.grad), std::span<const double>(n.data(), n.length),
               *this);
  }
}

std::span<double> Tape::grad_of(const Var& v) { return nodes_[v.id_].grad; }

// ---------------------------------------------------------------- helpers

namespace {

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw InvalidInput(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

// ---------------------------------------------------------------- ops

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw InvalidInput("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                       " * " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  const Var ins[] = {a, b};
  return a.tape().record(matrix_shape(m, n), std::move(out), ins,
                         [a, b, m, k, n](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           auto gb = t.grad_of(b);
                           if (!ga.empty()) {
                             kernels::gemm_a_bt(g.data(), b.value().data(), ga.data(), m, n, k,
                                                true);
                           }
                           if (!gb.empty()) {
                             kernels::gemm_at_b(a.value().data(), g.data(), gb.data(), k, m, n,
                                                true);
                           }
                         });
}

Var transpose(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  auto x = a.value();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  const Var ins[] = {a};
  return a.tape().record(matrix_shape(n, m), std::move(out), ins,
                         [a, m, n](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                         });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw InvalidInput("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  auto x = a.value();
  const Var ins[] = {a};
  return a.tape().record(std::move(shape), std::vector<double>(x.begin(), x.end()), ins,
                         [a](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const Var ins[] = {a, b};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, b](std::span<const double> g, std::span<const double>, Tape& t) {
                           for (const Var& v : {a, b}) {
                             auto gv = t.grad_of(v);
                             if (gv.empty()) continue;
                             for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
                           }
                         });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const Var ins[] = {a, b};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, b](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           auto gb = t.grad_of(b);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (!ga.empty()) ga[i] += g[i];
                             if (!gb.empty()) gb[i] -= g[i];
                           }
                         });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const Var ins[] = {a, b};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, b](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto x = a.value(), y = b.value();
                           auto ga = t.grad_of(a);
                           auto gb = t.grad_of(b);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (!ga.empty()) ga[i] += g[i] * y[i];
                             if (!gb.empty()) gb[i] += g[i] * x[i];
                           }
                         });
}

Var scale(const Var& a, double s) {
  auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  const Var ins[] = {a};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, s](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                         });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw InvalidInput("add_row: row length " + std::to_string(row.size()) +
                       " vs matrix width " + std::to_string(n));
  }
  auto x = a.value(), r = row.value();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
  const Var ins[] = {a, row};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, row, m, n](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           auto gr = t.grad_of(row);
                           if (!ga.empty())
                             for (std::size_t i = 0; i < m * n; ++i) ga[i] += g[i];
                           if (!gr.empty())
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
                         });
}

Var relu(const Var& a) {
  auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  const Var ins[] = {a};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto x = a.value();
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (x[i] > 0.0) ga[i] += g[i];
                         });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const Var ins[] = {a};
  return a.tape().record(Shape{}, {s}, ins, [a](std::span<const double> g, std::span<const double>, Tape& t) {
    auto ga = t.grad_of(a);
    for (double& v : ga) v += g[0];
  });
}

Var mean_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw InvalidInput("mean_rows: no rows");
  auto x = a.value();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out) v *= inv;
  const Var ins[] = {a};
  return a.tape().record(matrix_shape(1, n), std::move(out), ins,
                         [a, m, n, inv](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<double> out;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (p.cols() != n) {
      throw InvalidInput("concat_rows: width " + std::to_string(p.cols()) + " vs " +
                         std::to_string(n));
    }
    m += p.rows();
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return parts[0].tape().record(matrix_shape(m, n), std::move(out), parts,
                                [captured](std::span<const double> g, std::span<const double>, Tape& t) {
                                  std::size_t offset = 0;
                                  for (const Var& p : captured) {
                                    auto gp = t.grad_of(p);
                                    for (std::size_t i = 0; i < gp.size(); ++i)
                                      gp[i] += g[offset + i];
                                    offset += p.size();
                                  }
                                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (p.rows() != m) {
      throw InvalidInput("concat_cols: height " + std::to_string(p.rows()) + " vs " +
                         std::to_string(m));
    }
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    auto v = p.value();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + c0 + j] = v[i * w + j];
    c0 += w;
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return parts[0].tape().record(matrix_shape(m, n), std::move(out), parts,
                                [captured, m, n](std::span<const double> g, std::span<const double>, Tape& t) {
                                  std::size_t c0 = 0;
                                  for (const Var& p : captured) {
                                    const std::size_t w = p.cols();
                                    auto gp = t.grad_of(p);
                                    if (!gp.empty())
                                      for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < w; ++j)
                                          gp[i * w + j] += g[i * n + c0 + j];
                                    c0 += w;
                                  }
                                });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin > end || end > m) {
    throw InvalidInput("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") out of " + std::to_string(m) + " rows");
  }
  auto x = a.value();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.begin() + static_cast<std::ptrdiff_t>(end * n));
  const Var ins[] = {a};
  return a.tape().record(matrix_shape(end - begin, n), std::move(out), ins,
                         [a, begin, n](std::span<const double> g, std::span<const double>, Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
                         });
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  const std::size_t rows = table.rows(), n = table.cols();
  auto x = table.value();
  std::vector<double> out(ids.size() * n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw InvalidInput("gather_rows: id " + std::to_string(ids[i]) + " >= " +
                         std::to_string(rows));
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(ids[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::size_t> captured(ids.begin(), ids.end());
  const Var ins[] = {table};
  return table.tape().record(matrix_shape(ids.size(), n), std::move(out), ins,
                             [table, captured, n](std::span<const double> g, std::span<const double>, Tape& t) {
                               auto gt = t.grad_of(table);
                               for (std::size_t i = 0; i < captured.size(); ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   gt[captured[i] * n + j] += g[i * n + j];
                             });
}

Var softmax_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  kernels::softmax_rows(a.value().data(), out.data(), m, n);
  const Var ins[] = {a};
  return a.tape().record(a.shape(), std::move(out), ins,
                         [a, m, n](std::span<const double> g, std::span<const double> p,
                                   Tape& t) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < m; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * p[i * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               ga[i * n + j] += p[i * n + j] * (g[i * n + j] - dot);
                           }
                         });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  require_same_tape(a, gain, "layer_norm_rows");
  require_same_tape(a, bias, "layer_norm_rows");
  const std::size_t m = a.rows(), d = a.cols();
  if (d == 0) throw InvalidInput("layer_norm_rows: zero-width rows");
  if (gain.size() != d || bias.size() != d) {
    throw InvalidInput("layer_norm_rows: gain/bias length must equal row width " +
                       std::to_string(d));
  }
  auto x = a.value(), gv = gain.value(), bv = bias.value();
  auto xhat = std::make_shared<std::vector<double>>(m * d);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  std::vector<double> out(m * d);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mean) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  const Var ins[] = {a, gain, bias};
  return a.tape().record(
      a.shape(), std::move(out), ins,
      [a, gain, bias, m, d, xhat, inv_std](std::span<const double> g, std::span<const double>, Tape& t) {
        auto gx = t.grad_of(a);
        auto gg = t.grad_of(gain);
        auto gb = t.grad_of(bias);
        auto gv = gain.value();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
          const double* h = xhat->data() + i * d;
          const double* gi = g.data() + i * d;
          if (!gg.empty())
            for (std::size_t j = 0; j < d; ++j) gg[j] += gi[j] * h[j];
          if (!gb.empty())
            for (std::size_t j = 0; j < d; ++j) gb[j] += gi[j];
          if (gx.empty()) continue;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = gi[j] * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = gi[j] * gv[j];
            gx[i * d + j] += (*inv_std)[i] * (dh - mean_dh - h[j] * mean_dh_h);
          }
        }
      });
}

Var cross_entropy_logits(const Var& logits, std::size_t answer) {
  const std::size_t c = logits.size();
  if (answer >= c) {
    throw InvalidInput("cross_entropy_logits: answer " + std::to_string(answer) +
                       " out of range for " + std::to_string(c) + " classes");
  }
  auto z = logits.value();
  std::size_t arg = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (z[j] > z[arg]) arg = j;
  const double mx = z[arg];
  // log-sum-exp written as max + log1p(sum of the others) to keep precision
  // when one logit dominates.
  double rest = 0.0;
  for (std::size_t j = 0; j < c; ++j)
    if (j != arg) rest += std::exp(z[j] - mx);
  const double lse = mx + std::log1p(rest);
  const double loss = (lse - z[answer]);
  const Var ins[] = {logits};
  return logits.tape().record(Shape{}, {loss}, ins,
                              [logits, answer, lse](std::span<const double> g, std::span<const double>, Tape& t) {
                                auto z = logits.value();
                                auto gz = t.grad_of(logits);
                                for (std::size_t j = 0; j < z.size(); ++j) {
                                  const double p = std::exp(z[j] - lse);
                                  gz[j] += g[0] * (p - (j == answer ? 1.0 : 0.0));
                                }
                              });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

}  // namespace mga::ad
