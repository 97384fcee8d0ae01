#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cng/core/tensor.hpp"

namespace cng {
class Rng;
}

namespace cng::ad {

// One vertex of the recorded compute graph. `grad` is allocated lazily and
// always has the shape of `value` once allocated.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;

  Tensor& grad_ref();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  // Accumulated gradient; zeros if nothing has flowed here yet.
  Tensor grad() const;
  void zero_grad();

  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

// Gradient recording is on by default; a NoGradGuard disables it for the
// current thread so forward passes can run concurrently on shared parameters.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds a result node. The value is checked for finiteness (NumericError
// tagged with `op`); inputs and the backward closure are only retained when
// some input requires a gradient and recording is enabled.
Var make_op(const char* op, Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

// Adds `g` into the gradient of `node` if it participates in differentiation.
void accumulate(const NodePtr& node, const Tensor& g);

// Reverse-mode sweep from a scalar loss. Every reachable node that requires
// a gradient receives the accumulated derivative of the loss.
void backward(const Var& loss);

// Plain tensor kernels shared by ops and by code that skips the tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_transpose_a(const Tensor& a, const Tensor& b);  // a^T b
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);  // a b^T
Tensor transpose(const Tensor& a);

// Differentiable operations. All operate on rank-2 tensors.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);       // a[m x n] + row[1 x n]
Var mul_row(const Var& a, const Var& row);       // a[m x n] * row[1 x n]
Var mul_col(const Var& a, const Var& col);       // a[m x n] * col[m x 1]
Var mul_const(const Var& a, const Tensor& mask);  // elementwise by a constant
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, const Var& s);  // a[m x n] * s[1 x 1]
Var neg(const Var& a);

Var sigmoid(const Var& a);
double logistic(double x) noexcept;  // the scalar sigmoid used by sigmoid()
Var elu(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);        // -> [1 x 1]
Var mean(const Var& a);       // -> [1 x 1]
Var sum_rows(const Var& a);   // column sums -> [1 x n]
Var mean_rows(const Var& a);  // column means -> [1 x n]
// Component-wise maximum over rows -> [1 x n]; ties go to the lowest row.
Var max_rows(const Var& a);

Var softmax_rows(const Var& a);

// Row-wise w_ij = a_ij exp(s_ij) / sum_l a_il exp(s_il) for nonnegative
// weights a. With binary a this is a softmax restricted to a_ij = 1; rows
// without positive weight are zero. Both operands receive gradients, so a
// relaxed incidence can learn to open entries that are currently 0.
Var incidence_softmax(const Var& scores, const Var& weights);
// Normalizes each row to zero mean and unit variance (no affine part).
Var layer_norm_rows(const Var& a, double eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var gather_rows(const Var& a, std::span<const std::size_t> indices);
Var transpose(const Var& a);

// Forward value is `hard`; the gradient passes through to `soft` unchanged.
Var straight_through(Tensor hard, const Var& soft);

// Inverted dropout. Identity when rng is null or rate is zero.
Var dropout(const Var& a, double rate, Rng* rng);

// Numerically stable binary cross-entropy on a [1 x 1] logit.
Var bce_with_logits(const Var& logit, double target);

}  // namespace cng::ad
