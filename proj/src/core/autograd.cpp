#include "cng/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>

#include "cng/core/errors.hpp"
#include "cng/core/rng.hpp"

namespace cng::ad {
namespace {

thread_local bool t_grad_enabled = true;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 operand, got " + shape_string(a.shape()));
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Unary elementwise op whose derivative is a function of (x, y).
template <class Fwd, class Deriv>
Var unary(const char* op, const Var& a, Fwd fwd, Deriv deriv) {
  require_rank2(a.value(), op);
  Tensor y = map(a.value(), fwd);
  return make_op(op, std::move(y), {a}, [deriv](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = self.grad[i] * deriv(x[i], self.value[i]);
    accumulate(self.inputs[0], g);
  });
}

}  // namespace

Tensor& Node::grad_ref() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() != node_->value.shape()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_op(const char* op, Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  if (!value.all_finite()) throw NumericError(op, "forward produced NaN/Inf");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  const bool needs = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Var& v) { return v.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void accumulate(const NodePtr& node, const Tensor& g) {
  if (!node->requires_grad) return;
  node->grad_ref() += g;
}

void backward(const Var& loss) {
  if (!loss) throw GraphError("backward on an empty variable");
  if (loss.value().size() != 1) {
    throw DimensionError("backward requires a scalar loss, got " + shape_string(loss.value().shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; state 1 = on the stack, 2 = finished.
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = state.find(child);
      if (it == state.end()) {
        state[child] = 1;
        stack.emplace_back(child, 0);
      } else if (it->second == 1) {
        throw GraphError(std::string("cycle detected at node '") + child->op + "'");
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_ref().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    Tensor& g = node->grad_ref();
    if (!g.all_finite()) throw NumericError(node->op, "backward produced NaN/Inf");
    node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------
// Kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != n) {
    throw DimensionError("matmul: inner extents disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b(k, 0);
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor matmul_transpose_a(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  if (b.rows() != n) {
    throw DimensionError("matmul^T: extents disagree, " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out({m, p});
  for (std::size_t k = 0; k < n; ++k) {
    const double* brow = &b(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* orow = &out(i, 0);
      for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), n = a.cols(), p = b.rows();
  if (b.cols() != n) {
    throw DimensionError("matmul*T: extents disagree, " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a(i, 0);
    for (std::size_t j = 0; j < p; ++j) {
      const double* brow = &b(j, 0);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return make_op("matmul", std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    if (a->requires_grad) accumulate(a, matmul_transpose_b(self.grad, b->value));
    if (b->requires_grad) accumulate(b, matmul_transpose_a(a->value, self.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_op("add", std::move(out), {a, b}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
    accumulate(self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op("sub", std::move(out), {a, b}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) accumulate(self.inputs[1], map(self.grad, [](double g) { return -g; }));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    if (a->requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= b->value[i];
      accumulate(a, g);
    }
    if (b->requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a->value[i];
      accumulate(b, g);
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  const std::size_t m = a.rows(), n = a.cols();
  require_shape(row.value(), 1, n, "add_row");
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += row.value()(0, j);
  return make_op("add_row", std::move(out), {a, row}, [](Node& self) {
    accumulate(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      const std::size_t m = self.grad.rows(), n = self.grad.cols();
      Tensor g({1, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(0, j) += self.grad(i, j);
      accumulate(self.inputs[1], g);
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  const std::size_t m = a.rows(), n = a.cols();
  require_shape(row.value(), 1, n, "mul_row");
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= row.value()(0, j);
  return make_op("mul_row", std::move(out), {a, row}, [](Node& self) {
    const auto& a = self.inputs[0];
    const auto& r = self.inputs[1];
    const std::size_t m = self.grad.rows(), n = self.grad.cols();
    if (a->requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) *= r->value(0, j);
      accumulate(a, g);
    }
    if (r->requires_grad) {
      Tensor g({1, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(0, j) += self.grad(i, j) * a->value(i, j);
      accumulate(r, g);
    }
  });
}

Var mul_col(const Var& a, const Var& col) {
  const std::size_t m = a.rows(), n = a.cols();
  require_shape(col.value(), m, 1, "mul_col");
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= col.value()(i, 0);
  return make_op("mul_col", std::move(out), {a, col}, [](Node& self) {
    const auto& a = self.inputs[0];
    const auto& c = self.inputs[1];
    const std::size_t m = self.grad.rows(), n = self.grad.cols();
    if (a->requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) *= c->value(i, 0);
      accumulate(a, g);
    }
    if (c->requires_grad) {
      Tensor g({m, 1});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, 0) += self.grad(i, j) * a->value(i, j);
      accumulate(c, g);
    }
  });
}

Var mul_const(const Var& a, const Tensor& mask) {
  require_same(a.value(), mask, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_op("mul_const", std::move(out), {a}, [mask](Node& self) {
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
    accumulate(self.inputs[0], g);
  });
}

Var scale(const Var& a, double s) {
  return make_op("scale", map(a.value(), [s](double x) { return x * s; }), {a}, [s](Node& self) {
    accumulate(self.inputs[0], map(self.grad, [s](double g) { return g * s; }));
  });
}

Var add_scalar(const Var& a, double s) {
  return make_op("add_scalar", map(a.value(), [s](double x) { return x + s; }), {a},
                 [](Node& self) { accumulate(self.inputs[0], self.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var mul_scalar(const Var& a, const Var& s) {
  require_shape(s.value(), 1, 1, "mul_scalar");
  const double k = s.value()[0];
  return make_op("mul_scalar", map(a.value(), [k](double x) { return x * k; }), {a, s}, [k](Node& self) {
    accumulate(self.inputs[0], map(self.grad, [k](double g) { return g * k; }));
    double d = 0.0;
    const Tensor& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) d += self.grad[i] * x[i];
    accumulate(self.inputs[1], Tensor::scalar(d));
  });
}

double logistic(double x) noexcept {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a, [](double x) { return logistic(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var elu(const Var& a) {
  return unary(
      "elu", a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Var relu(const Var& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(const Var& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    accumulate(self.inputs[0], Tensor(self.inputs[0]->value.shape(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(0, j) += a.value()(i, j);
  return make_op("sum_rows", std::move(out), {a}, [](Node& self) {
    const auto& in = self.inputs[0];
    Tensor g(in->value.shape());
    const std::size_t m = g.rows(), n = g.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g(i, j) = self.grad(0, j);
    accumulate(in, g);
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw DimensionError("mean_rows of a tensor with no rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var max_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw DimensionError("max_rows of a tensor with no rows");
  Tensor out({1, n});
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    out(0, j) = a.value()(0, j);
    for (std::size_t i = 1; i < m; ++i) {
      if (a.value()(i, j) > out(0, j)) {
        out(0, j) = a.value()(i, j);
        arg[j] = i;
      }
    }
  }
  return make_op("max_rows", std::move(out), {a}, [arg = std::move(arg)](Node& self) {
    const auto& in = self.inputs[0];
    Tensor g(in->value.shape());
    for (std::size_t j = 0; j < arg.size(); ++j) g(arg[j], j) = self.grad(0, j);
    accumulate(in, g);
  });
}

Var softmax_rows(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a.value()(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += out(i, j) = std::exp(a.value()(i, j) - mx);
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= z;
  }
  return make_op("softmax", std::move(out), {a}, [](Node& self) {
    const std::size_t m = self.value.rows(), n = self.value.cols();
    Tensor g({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < n; ++j) g(i, j) = self.value(i, j) * (self.grad(i, j) - dot);
    }
    accumulate(self.inputs[0], g);
  });
}

Var incidence_softmax(const Var& scores, const Var& weights) {
  const Tensor& s = scores.value();
  const Tensor& a = weights.value();
  if (s.shape() != a.shape()) {
    throw DimensionError("incidence_softmax: scores " + shape_string(s.shape()) + " vs weights " +
                         shape_string(a.shape()));
  }
  const std::size_t m = s.rows(), n = s.cols();
  Tensor out({m, n});
  // e_ij = exp(s_ij - max over positive-weight entries), capped so that
  // zero-weight entries far above the row maximum stay finite.
  Tensor e({m, n});
  std::vector<double> z(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) > 0.0) mx = std::max(mx, s(i, j));
    if (!std::isfinite(mx)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      e(i, j) = std::exp(std::min(s(i, j) - mx, 50.0));
      z[i] += a(i, j) * e(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = a(i, j) * e(i, j) / z[i];
  }
  return make_op("incidence_softmax", std::move(out), {scores, weights},
                 [e = std::move(e), z = std::move(z)](Node& self) {
                   const std::size_t m = self.value.rows(), n = self.value.cols();
                   Tensor gs({m, n}), ga({m, n});
                   for (std::size_t i = 0; i < m; ++i) {
                     if (z[i] == 0.0) continue;
                     double dot = 0.0;
                     for (std::size_t j = 0; j < n; ++j) dot += self.grad(i, j) * self.value(i, j);
                     for (std::size_t j = 0; j < n; ++j) {
                       gs(i, j) = self.value(i, j) * (self.grad(i, j) - dot);
                       ga(i, j) = e(i, j) / z[i] * (self.grad(i, j) - dot);
                     }
                   }
                   accumulate(self.inputs[0], gs);
                   accumulate(self.inputs[1], ga);
                 });
}

Var layer_norm_rows(const Var& a, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += a.value()(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (a.value()(i, j) - mu) * (a.value()(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (a.value()(i, j) - mu) * inv_std[i];
  }
  return make_op("layer_norm", std::move(out), {a}, [inv_std = std::move(inv_std)](Node& self) {
    const std::size_t m = self.value.rows(), n = self.value.cols();
    Tensor g({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double gm = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gm += self.grad(i, j);
        gy += self.grad(i, j) * self.value(i, j);
      }
      gm /= static_cast<double>(n);
      gy /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) g(i, j) = inv_std[i] * (self.grad(i, j) - gm - self.value(i, j) * gy);
    }
    accumulate(self.inputs[0], g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row counts disagree");
    total += p.cols();
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, offset + j) = p.value()(i, j);
    offset += c;
  }
  return make_op("concat_cols", std::move(out), parts, [](Node& self) {
    const std::size_t m = self.grad.rows();
    std::size_t offset = 0;
    for (const auto& in : self.inputs) {
      const std::size_t c = in->value.cols();
      if (in->requires_grad) {
        Tensor g({m, c});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) g(i, j) = self.grad(i, offset + j);
        accumulate(in, g);
      }
      offset += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column counts disagree");
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * n);
  for (const auto& p : parts) data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  return make_op("concat_rows", Tensor({total, n}, std::move(data)), parts, [](Node& self) {
    const std::size_t n = self.grad.cols();
    std::size_t offset = 0;
    for (const auto& in : self.inputs) {
      const std::size_t r = in->value.rows();
      if (in->requires_grad) {
        auto src = self.grad.values().subspan(offset * n, r * n);
        accumulate(in, Tensor({r, n}, std::vector<double>(src.begin(), src.end())));
      }
      offset += r;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin > end || end > m) {
    throw IndexError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                     std::to_string(m) + " rows");
  }
  auto src = a.value().values().subspan(begin * n, (end - begin) * n);
  Tensor out({end - begin, n}, std::vector<double>(src.begin(), src.end()));
  return make_op("slice_rows", std::move(out), {a}, [begin](Node& self) {
    const auto& in = self.inputs[0];
    Tensor g(in->value.shape());
    const std::size_t n = g.cols();
    std::copy(self.grad.values().begin(), self.grad.values().end(), g.values().begin() + begin * n);
    accumulate(in, g);
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin > end || end > n) {
    throw IndexError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                     std::to_string(n) + " columns");
  }
  Tensor out({m, end - begin});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = a.value()(i, j);
  return make_op("slice_cols", std::move(out), {a}, [begin](Node& self) {
    const auto& in = self.inputs[0];
    Tensor g(in->value.shape());
    const std::size_t m = self.grad.rows(), w = self.grad.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g(i, begin + j) = self.grad(i, j);
    accumulate(in, g);
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) throw IndexError("gather_rows index " + std::to_string(idx[r]) + " out of " + std::to_string(m));
    for (std::size_t j = 0; j < n; ++j) out(r, j) = a.value()(idx[r], j);
  }
  return make_op("gather_rows", std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    const auto& in = self.inputs[0];
    Tensor g(in->value.shape());
    const std::size_t n = g.cols();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g(idx[r], j) += self.grad(r, j);
    accumulate(in, g);
  });
}

Var transpose(const Var& a) {
  return make_op("transpose", transpose(a.value()), {a},
                 [](Node& self) { accumulate(self.inputs[0], transpose(self.grad)); });
}

Var straight_through(Tensor hard, const Var& soft) {
  require_same(hard, soft.value(), "straight_through");
  return make_op("straight_through", std::move(hard), {soft},
                 [](Node& self) { accumulate(self.inputs[0], self.grad); });
}

Var dropout(const Var& a, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return a;
  if (rate >= 1.0) throw ParameterError("dropout rate must be below 1");
  Tensor mask(a.value().shape());
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng->uniform() < rate ? 0.0 : keep;
  return mul_const(a, mask);
}

Var bce_with_logits(const Var& logit, double target) {
  const double z = logit.value().item();
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  return make_op("bce_with_logits", Tensor::scalar(loss), {logit}, [target](Node& self) {
    const double z = self.inputs[0]->value.item();
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    accumulate(self.inputs[0], Tensor::scalar(self.grad[0] * (p - target)));
  });
}

}  // namespace cng::ad
