#include "repfair/tape.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "repfair/errors.hpp"

namespace repfair {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + to_string(t.shape()));
  }
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kTile = 16;
  std::vector<double> out(rows * cols);
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = src[r * cols + c];
      }
    }
  }
  return out;
}

// C[m x n] += A[m x k] . B[k x n], row-major. Every output element sums its
// k products in increasing index order regardless of blocking.
using Lane4 = double __attribute__((vector_size(32)));

inline Lane4 load4(const double* p) {
  Lane4 v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, Lane4 v) { __builtin_memcpy(p, &v, sizeof v); }

void gemm_accumulate(const double* __restrict A, const double* __restrict B, double* __restrict C,
                     std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = A + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c0 = C + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      Lane4 x0 = load4(c0 + j), y0 = load4(c0 + j + 4);
      Lane4 x1 = load4(c1 + j), y1 = load4(c1 + j + 4);
      Lane4 x2 = load4(c2 + j), y2 = load4(c2 + j + 4);
      Lane4 x3 = load4(c3 + j), y3 = load4(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const Lane4 bl = load4(B + p * n + j);
        const Lane4 bh = load4(B + p * n + j + 4);
        x0 += a0[p] * bl;
        y0 += a0[p] * bh;
        x1 += a1[p] * bl;
        y1 += a1[p] * bh;
        x2 += a2[p] * bl;
        y2 += a2[p] * bh;
        x3 += a3[p] * bl;
        y3 += a3[p] * bh;
      }
      store4(c0 + j, x0), store4(c0 + j + 4, y0);
      store4(c1 + j, x1), store4(c1 + j + 4, y1);
      store4(c2 + j, x2), store4(c2 + j + 4, y2);
      store4(c3 + j, x3), store4(c3 + j + 4, y3);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = B[p * n + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c0[j] = s0, c1[j] = s1, c2[j] = s2, c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void Tape::check_live() const {
  if (consumed_) throw ContractError("tape already consumed by backward()");
}

const Tape::Node& Tape::node(Var v) const {
  check_live();
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

Var Tape::push(Tensor value, bool needs_grad, Pullback pullback) {
  check_live();
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.pullback = std::move(pullback);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

std::span<double> Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.accumulates_into_external) return n.external->grad_buffer();
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Tape::leaf(Tensor& t, bool track) {
  check_live();
  Node n;
  n.external = &t;
  n.needs_grad = track && t.requires_grad();
  n.accumulates_into_external = n.needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  const std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
  if (B.shape()[0] != k) {
    throw DimensionError("matmul inner dimensions differ: " + to_string(A.shape()) + " . " +
                         to_string(B.shape()));
  }
  Tensor out({m, n});
  gemm_accumulate(A.data().data(), B.data().data(), out.data().data(), m, k, n);
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b, m, k, n](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    if (tape.needs_grad(a)) {
      // dA += G . B^T
      const auto bt = transposed(tape.value(b).data().data(), k, n);
      gemm_accumulate(g.data(), bt.data(), tape.grad_of(a.id).data(), m, n, k);
    }
    if (tape.needs_grad(b)) {
      // dB += A^T . G
      const auto at = transposed(tape.value(a).data().data(), m, k);
      gemm_accumulate(at.data(), g.data(), tape.grad_of(b.id).data(), k, m, n);
    }
  });
}

Var Tape::add_bias(Var x, Var bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  require_rank2(X, "add_bias");
  const std::size_t m = X.shape()[0], n = X.shape()[1];
  if (B.size() != n || (B.rank() == 2 && B.shape()[0] != 1) || B.rank() > 2) {
    throw DimensionError("bias " + to_string(B.shape()) + " does not fit rows of " +
                         to_string(X.shape()));
  }
  Tensor out = X;
  out.clear_grad();
  out.set_requires_grad(false);
  auto o = out.data();
  auto bd = B.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] += bd[j];
  }
  const bool ng = needs_grad(x) || needs_grad(bias);
  return push(std::move(out), ng, [x, bias, m, n](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    if (tape.needs_grad(x)) add_into(tape.grad_of(x.id), g);
    if (tape.needs_grad(bias)) {
      auto gb = tape.grad_of(bias.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) {
    throw DimensionError("add shapes differ: " + to_string(A.shape()) + " vs " + to_string(B.shape()));
  }
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    if (tape.needs_grad(a)) add_into(tape.grad_of(a.id), g);
    if (tape.needs_grad(b)) add_into(tape.grad_of(b.id), g);
  });
}

Var Tape::scale(Var x, double factor) {
  const Tensor& X = value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = factor * X[i];
  return push(std::move(out), needs_grad(x), [x, factor](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    auto gx = tape.grad_of(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * g[i];
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_rank2(A, "concat_cols");
  require_rank2(B, "concat_cols");
  const std::size_t m = A.shape()[0], p = A.shape()[1], q = B.shape()[1];
  if (B.shape()[0] != m) {
    throw DimensionError("concat_cols row counts differ: " + to_string(A.shape()) + " vs " +
                         to_string(B.shape()));
  }
  Tensor out({m, p + q});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(A.data().data() + i * p, p, out.data().data() + i * (p + q));
    std::copy_n(B.data().data() + i * q, q, out.data().data() + i * (p + q) + p);
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b, m, p, q](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    if (tape.needs_grad(a)) {
      auto ga = tape.grad_of(a.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
      }
    }
    if (tape.needs_grad(b)) {
      auto gb = tape.grad_of(b.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
      }
    }
  });
}

Var Tape::embedding(Var table, std::span<const int> ids) {
  const Tensor& T = value(table);
  require_rank2(T, "embedding");
  const std::size_t rows = T.shape()[0], e = T.shape()[1];
  if (ids.empty()) throw DimensionError("embedding lookup needs at least one id");
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), e});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw ContractError("embedding id " + std::to_string(idx[i]) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(T.data().data() + idx[i] * e, e, out.data().data() + i * e);
  }
  return push(std::move(out), needs_grad(table),
              [table, idx = std::move(idx), e](Tape& tape, std::size_t self) {
                auto g = tape.out_grad(self);
                auto gt = tape.grad_of(table.id);
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  for (std::size_t j = 0; j < e; ++j) gt[idx[i] * e + j] += g[i * e + j];
                }
              });
}

Var Tape::leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu slope must lie in (0,1)");
  const Tensor& X = value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : slope * X[i];
  return push(std::move(out), needs_grad(x), [x, slope](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    auto in = tape.value(x).data();
    auto gx = tape.grad_of(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += in[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var Tape::tanh(Var x) {
  const Tensor& X = value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::tanh(X[i]);
  return push(std::move(out), needs_grad(x), [x](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    auto y = tape.nodes_[self].value.data();
    auto gx = tape.grad_of(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::sigmoid(Var x) {
  const Tensor& X = value(x);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double v = X[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return push(std::move(out), needs_grad(x), [x](Tape& tape, std::size_t self) {
    auto g = tape.out_grad(self);
    auto y = tape.nodes_[self].value.data();
    auto gx = tape.grad_of(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::sum(Var x) {
  const Tensor& X = value(x);
  double s = 0.0;
  for (double v : X.data()) s += v;
  return push(Tensor({1}, s), needs_grad(x), [x](Tape& tape, std::size_t self) {
    const double g = tape.out_grad(self)[0];
    for (double& v : tape.grad_of(x.id)) v += g;
  });
}

Var Tape::mean(Var x) {
  const Tensor& X = value(x);
  const double n = static_cast<double>(X.size());
  double s = 0.0;
  for (double v : X.data()) s += v;
  return push(Tensor({1}, s / n), needs_grad(x), [x, n](Tape& tape, std::size_t self) {
    const double g = tape.out_grad(self)[0] / n;
    for (double& v : tape.grad_of(x.id)) v += g;
  });
}

Var Tape::bce(Var p, const Tensor& targets) {
  const Tensor& P = value(p);
  if (P.shape() != targets.shape()) {
    throw DimensionError("bce shapes differ: " + to_string(P.shape()) + " vs " +
                         to_string(targets.shape()));
  }
  const double n = static_cast<double>(P.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double q = std::clamp(P[i], kProbClamp, 1.0 - kProbClamp);
    const double y = targets[i];
    acc += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  return push(Tensor({1}, -acc / n), needs_grad(p),
              [p, y = targets, n](Tape& tape, std::size_t self) {
                const double g = tape.out_grad(self)[0];
                auto pv = tape.value(p).data();
                auto gp = tape.grad_of(p.id);
                for (std::size_t i = 0; i < gp.size(); ++i) {
                  const double q = pv[i];
                  // The clamp is flat outside its interval.
                  if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
                  gp[i] += -g * (y[i] / q - (1.0 - y[i]) / (1.0 - q)) / n;
                }
              });
}

void Tape::backward(Var loss) {
  const Node& root = node(loss);
  const Tensor& lv = root.external ? *root.external : root.value;
  if (lv.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(lv.shape()));
  }
  backward_order_.clear();
  if (root.needs_grad) {
    grad_of(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.pullback) continue;
      if (n.grad.empty()) continue;  // unreachable from the loss
      backward_order_.push_back(i);
      n.pullback(*this, i);
    }
  }
  nodes_.clear();
  consumed_ = true;
}

}  // namespace repfair
