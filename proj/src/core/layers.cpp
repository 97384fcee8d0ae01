#include "cng/core/layers.hpp"

#include <algorithm>
#include <cmath>

#include "cng/core/errors.hpp"

namespace cng {

ad::Var ParameterStore::add(std::string name, Tensor init) {
  if (contains(name)) throw ParameterError("duplicate parameter name '" + name + "'");
  ad::Var v = ad::Var::parameter(std::move(init));
  entries_.push_back({std::move(name), v});
  return v;
}

ad::Var ParameterStore::get(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.var;
  throw ParameterError("unknown parameter '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const NamedParameter& e) { return e.name == name; });
}

std::vector<ad::Var> ParameterStore::vars() const {
  std::vector<ad::Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.var);
  return out;
}

std::size_t ParameterStore::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (std::string_view(e.name).starts_with(prefix)) n += e.var.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", xavier_uniform(in, out, rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor::zeros(1, out));
  return l;
}

ad::Var Linear::operator()(const ad::Var& x) const {
  ad::Var y = ad::matmul(x, weight);
  return bias ? ad::add_row(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".weight", Tensor::filled(1, dim, 1.0));
  ln.beta = store.add(name + ".bias", Tensor::zeros(1, dim));
  return ln;
}

ad::Var LayerNorm::operator()(const ad::Var& x) const {
  return ad::add_row(ad::mul_row(ad::layer_norm_rows(x, eps), gamma), beta);
}

MultiHeadSelfAttention MultiHeadSelfAttention::create(ParameterStore& store, const std::string& name,
                                                      std::size_t dim, std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ParameterError(name + ": head count " + std::to_string(heads) + " does not divide width " +
                         std::to_string(dim));
  }
  MultiHeadSelfAttention a;
  a.in_weight = store.add(name + ".in_proj.weight", xavier_uniform(dim, 3 * dim, rng));
  a.in_bias = store.add(name + ".in_proj.bias", Tensor::zeros(1, 3 * dim));
  a.out = Linear::create(store, name + ".out_proj", dim, dim, rng);
  a.heads = heads;
  return a;
}

ad::Var MultiHeadSelfAttention::operator()(const ad::Var& x) const {
  const std::size_t dim = in_weight.rows();
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  ad::Var qkv = ad::add_row(ad::matmul(x, in_weight), in_bias);
  std::vector<ad::Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim;
    ad::Var q = ad::slice_cols(qkv, lo, lo + head_dim);
    ad::Var k = ad::slice_cols(qkv, dim + lo, dim + lo + head_dim);
    ad::Var v = ad::slice_cols(qkv, 2 * dim + lo, 2 * dim + lo + head_dim);
    ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
    outputs.push_back(ad::matmul(ad::softmax_rows(scores), v));
  }
  return out(ad::concat_cols(outputs));
}

}  // namespace cng
