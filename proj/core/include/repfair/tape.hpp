#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "repfair/tensor.hpp"

namespace repfair {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Records one forward pass over a fixed set of primitives and replays it in
// reverse to accumulate gradients.
//
// Parameters enter through leaf(); the tape keeps a pointer to them, so a
// parameter tensor must outlive the tape and must not be resized while the
// tape is alive. Gradients of requires_grad leaves are accumulated (+=) into
// the leaf tensor's own grad buffer. A tape is single-use: backward()
// consumes it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  // References an external tensor. Its gradient is tracked iff
  // t.requires_grad() and `track` is set.
  Var leaf(Tensor& t, bool track = true);
  // Copies a value onto the tape; never receives a gradient.
  Var constant(Tensor t);

  // [m x k] . [k x n] -> [m x n]
  Var matmul(Var a, Var b);
  // [m x n] + bias[n] broadcast over rows.
  Var add_bias(Var x, Var bias);
  Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }
  Var add(Var a, Var b);
  Var scale(Var x, double factor);
  // Row-wise concatenation [m x p] ++ [m x q] -> [m x (p+q)].
  Var concat_cols(Var a, Var b);
  // Gathers rows of table[num x e] -> [ids.size() x e].
  Var embedding(Var table, std::span<const int> ids);

  Var leaky_relu(Var x, double slope);
  Var tanh(Var x);
  Var sigmoid(Var x);

  Var sum(Var x);
  Var mean(Var x);
  // Mean binary cross-entropy of probabilities p against {0,1} targets, with
  // p clamped into [kProbClamp, 1 - kProbClamp] before the log.
  Var bce(Var p, const Tensor& targets);

  static constexpr double kProbClamp = 1e-7;

  const Tensor& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  // Propagates d(loss)/d(.) to every tracked leaf reachable from `loss`.
  // `loss` must be a single-element value recorded on this tape.
  void backward(Var loss);

  // Node ids in the order the last backward() visited them.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return backward_order_; }

 private:
  using Pullback = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor value;
    Tensor* external = nullptr;  // leaf referencing a caller-owned tensor
    bool needs_grad = false;
    bool accumulates_into_external = false;
    std::vector<double> grad;
    Pullback pullback;
  };

  Var push(Tensor value, bool needs_grad, Pullback pullback);
  const Node& node(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient buffer for node `id`, allocated on first use.
  std::span<double> grad_of(std::size_t id);
  std::span<const double> out_grad(std::size_t id) const { return nodes_[id].grad; }
  void check_live() const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
  bool consumed_ = false;
};

}  // namespace repfair
