#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cng/core/autograd.hpp"
#include "cng/core/rng.hpp"

namespace cng {

struct NamedParameter {
  std::string name;
  ad::Var var;
};

// Ordered collection of trainable tensors. Insertion order is the canonical
// order for checkpoints and optimizer state.
class ParameterStore {
 public:
  ad::Var add(std::string name, Tensor init);
  ad::Var get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<NamedParameter>& entries() const noexcept { return entries_; }
  std::vector<ad::Var> vars() const;

  // Number of scalar parameters whose name starts with `prefix`.
  std::size_t count(std::string_view prefix = {}) const;
  void zero_grad();

 private:
  std::vector<NamedParameter> entries_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

// y = x W + b with W stored as [in x out].
struct Linear {
  ad::Var weight;
  ad::Var bias;  // empty when created without bias

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  ad::Var operator()(const ad::Var& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

struct LayerNorm {
  ad::Var gamma;
  ad::Var beta;
  double eps = 1e-5;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t dim);
  ad::Var operator()(const ad::Var& x) const;
};

// Multi-head self-attention with a packed [d x 3d] input projection.
struct MultiHeadSelfAttention {
  ad::Var in_weight;
  ad::Var in_bias;
  Linear out;
  std::size_t heads = 1;

  static MultiHeadSelfAttention create(ParameterStore& store, const std::string& name, std::size_t dim,
                                       std::size_t heads, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;
};

}  // namespace cng
