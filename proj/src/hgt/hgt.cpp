#include "cng/hgt/hgt.hpp"

#include <cmath>
#include <tuple>

#include "cng/core/errors.hpp"

namespace cng {

NodeMask NodeMask::without(std::size_t n, const std::vector<std::size_t>& removed) {
  NodeMask m = all(n);
  for (std::size_t i : removed) {
    if (i >= n) throw IndexError("mask index " + std::to_string(i) + " out of range for " + std::to_string(n));
    m.remove(i);
  }
  return m;
}

namespace {

Tensor stacked_blocks(std::size_t heads, std::size_t d, Rng& rng) {
  Tensor t({heads * d, d});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor block = xavier_uniform(d, d, rng);
    std::copy(block.values().begin(), block.values().end(), t.values().begin() + h * d * d);
  }
  return t;
}

const char* node_name(std::size_t t) { return t == kEntityNode ? "entity" : "relation"; }
const char* edge_name(std::size_t e) { return e == kEntityToRelation ? "entity_to_relation" : "relation_to_entity"; }

}  // namespace

HgtClassifier HgtClassifier::create(ParameterStore& store, const HgtConfig& config, Rng& rng) {
  if (config.num_layers == 0) throw ParameterError("hgt_num_layers must be at least 1");
  HgtClassifier c;
  c.config_ = config;
  c.entity_in_ = Linear::create(store, "hgt.input.entity", config.entity_in, config.hidden_dim, rng);
  c.relation_in_ = Linear::create(store, "hgt.input.relation", config.relation_in, config.hidden_dim, rng);
  std::size_t in = config.hidden_dim;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t out = l + 1 == config.num_layers ? config.out_dim : config.hidden_dim;
    if (config.heads == 0 || out % config.heads != 0) {
      throw ParameterError("hyper_graph_heads (" + std::to_string(config.heads) + ") must divide width " +
                           std::to_string(out));
    }
    const std::size_t dk = out / config.heads;
    const std::string p = "hgt.layers." + std::to_string(l);
    HgtLayer layer;
    layer.residual = in == out;
    for (std::size_t t = 0; t < 2; ++t) {
      const std::string q = p + "." + node_name(t);
      layer.node[t] = HgtTypeBlock{
          Linear::create(store, q + ".k_lin", in, out, rng), Linear::create(store, q + ".q_lin", in, out, rng),
          Linear::create(store, q + ".v_lin", in, out, rng), Linear::create(store, q + ".a_lin", out, out, rng),
          LayerNorm::create(store, q + ".norm", out)};
    }
    for (std::size_t e = 0; e < 2; ++e) {
      const std::string q = p + "." + edge_name(e);
      layer.edge[e].att = store.add(q + ".att", stacked_blocks(config.heads, dk, rng));
      layer.edge[e].msg = store.add(q + ".msg", stacked_blocks(config.heads, dk, rng));
      layer.edge[e].mu = store.add(q + ".mu", Tensor({1, config.heads}, 1.0));
    }
    c.layers_.push_back(std::move(layer));
    in = out;
  }
  c.readout_ = Linear::create(store, "hgt.readout", config.out_dim, 1, rng);
  return c;
}

ad::Var HgtClassifier::aggregate(const HgtLayer& layer, EdgeType edge, const ad::Var& h_src, const ad::Var& h_dst,
                                 const ad::Var& weights) const {
  const std::size_t src_type = edge == kEntityToRelation ? kEntityNode : kRelationNode;
  const std::size_t dst_type = edge == kEntityToRelation ? kRelationNode : kEntityNode;
  const HgtTypeBlock& src = layer.node[src_type];
  const HgtTypeBlock& dst = layer.node[dst_type];
  const HgtEdgeBlock& rel = layer.edge[edge];
  const ad::Var k = src.k_lin(h_src);
  const ad::Var v = src.v_lin(h_src);
  const ad::Var q = dst.q_lin(h_dst);
  const std::size_t heads = config_.heads;
  const std::size_t dk = k.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<ad::Var> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dk, e = b + dk;
    const ad::Var kh = ad::matmul(ad::slice_cols(k, b, e), ad::slice_rows(rel.att, b, e));
    const ad::Var vh = ad::matmul(ad::slice_cols(v, b, e), ad::slice_rows(rel.msg, b, e));
    ad::Var scores = ad::matmul(ad::slice_cols(q, b, e), ad::transpose(kh));
    scores = ad::mul_scalar(ad::scale(scores, inv_sqrt), ad::slice_cols(rel.mu, h, h + 1));
    parts.push_back(ad::matmul(ad::incidence_softmax(scores, weights), vh));
  }
  return ad::concat_cols(parts);
}

std::pair<ad::Var, ad::Var> HgtClassifier::layer_forward(const HgtLayer& layer, const ad::Var& h_ent,
                                                         const ad::Var& h_rel, const ad::Var& incidence,
                                                         Rng* dropout_rng) const {
  const ad::Var to_rel = aggregate(layer, kEntityToRelation, h_ent, h_rel, ad::transpose(incidence));
  const ad::Var to_ent = aggregate(layer, kRelationToEntity, h_rel, h_ent, incidence);
  auto update = [&](const HgtTypeBlock& block, const ad::Var& h, const ad::Var& agg) {
    ad::Var out = ad::dropout(block.a_lin(ad::gelu(agg)), config_.dropout, dropout_rng);
    if (layer.residual) out = ad::add(h, out);
    return block.norm(out);
  };
  return {update(layer.node[kEntityNode], h_ent, to_ent), update(layer.node[kRelationNode], h_rel, to_rel)};
}

ad::Var HgtClassifier::logit(const BipartiteGraph& graph, const NodeMask* mask, Rng* dropout_rng) const {
  const std::size_t n = graph.num_entities();
  if (mask && mask->size() != n) {
    throw DimensionError("node mask length " + std::to_string(mask->size()) + " differs from entity count " +
                         std::to_string(n));
  }
  const Tensor& features = graph.entities.value();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !mask->keeps(i)) continue;
    bool nonzero = false;
    for (double x : features.row(i)) nonzero = nonzero || x != 0.0;
    if (nonzero) active.push_back(i);
  }
  if (active.empty()) return readout_(ad::Var::constant(Tensor({1, config_.out_dim})));

  ad::Var h_ent = ad::gelu(entity_in_(ad::gather_rows(graph.entities, active)));
  ad::Var h_rel = ad::gelu(relation_in_(graph.relations));
  const ad::Var incidence = ad::gather_rows(graph.incidence, active);
  for (const auto& layer : layers_) std::tie(h_ent, h_rel) = layer_forward(layer, h_ent, h_rel, incidence, dropout_rng);
  return readout_(ad::mean_rows(ad::concat_rows({h_ent, h_rel})));
}

double HgtClassifier::probability(const BipartiteGraph& graph, const NodeMask& mask) const {
  ad::NoGradGuard no_grad;
  return ad::logistic(logit(graph, &mask, nullptr).value()[0]);
}

}  // namespace cng
