#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cng/core/autograd.hpp"
#include "cng/core/layers.hpp"
#include "cng/graph/graph_builder.hpp"

namespace cng {

struct HgtConfig {
  std::size_t entity_in = 16;
  std::size_t relation_in = 16;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 64;
  std::size_t heads = 4;
  std::size_t num_layers = 2;
  double dropout = 0.15;
};

// Entity-node mask: 1 keeps the node's features, 0 zeroes them. The
// incidence structure is never touched.
class NodeMask {
 public:
  static NodeMask all(std::size_t n) { return NodeMask(std::vector<std::uint8_t>(n, 1)); }
  static NodeMask without(std::size_t n, const std::vector<std::size_t>& removed);
  explicit NodeMask(std::vector<std::uint8_t> keep) : keep_(std::move(keep)) {}

  std::size_t size() const noexcept { return keep_.size(); }
  bool keeps(std::size_t i) const { return keep_.at(i) != 0; }
  void remove(std::size_t i) { keep_.at(i) = 0; }
  const std::vector<std::uint8_t>& values() const noexcept { return keep_; }

 private:
  std::vector<std::uint8_t> keep_;
};

enum NodeType : std::size_t { kEntityNode = 0, kRelationNode = 1 };
enum EdgeType : std::size_t { kEntityToRelation = 0, kRelationToEntity = 1 };

struct HgtTypeBlock {
  Linear k_lin, q_lin, v_lin, a_lin;
  LayerNorm norm;
};

struct HgtEdgeBlock {
  ad::Var att;  // [heads * d_k x d_k], one d_k x d_k block per head
  ad::Var msg;
  ad::Var mu;   // [1 x heads] attention prior
};

struct HgtLayer {
  HgtTypeBlock node[2];
  HgtEdgeBlock edge[2];
  bool residual = true;
};

// Heterogeneous graph transformer over the entity/relation bipartite graph.
// An entity participates only while its (masked) feature row is nonzero;
// relations participate whenever some entity does. With no participating
// entity the logit is the readout bias exactly.
class HgtClassifier {
 public:
  static HgtClassifier create(ParameterStore& store, const HgtConfig& config, Rng& rng);

  // `dropout_rng` null means evaluation mode.
  ad::Var logit(const BipartiteGraph& graph, const NodeMask* mask, Rng* dropout_rng) const;
  // Pure evaluation; safe to call concurrently.
  double probability(const BipartiteGraph& graph, const NodeMask& mask) const;

  double readout_bias() const { return readout_.bias.value()[0]; }
  const HgtConfig& config() const noexcept { return config_; }
  const std::vector<HgtLayer>& layers() const noexcept { return layers_; }

 private:
  std::pair<ad::Var, ad::Var> layer_forward(const HgtLayer& layer, const ad::Var& h_ent, const ad::Var& h_rel,
                                            const ad::Var& incidence, Rng* dropout_rng) const;
  ad::Var aggregate(const HgtLayer& layer, EdgeType edge, const ad::Var& h_src, const ad::Var& h_dst,
                    const ad::Var& weights) const;

  HgtConfig config_;
  Linear entity_in_;
  Linear relation_in_;
  std::vector<HgtLayer> layers_;
  Linear readout_;
};

}  // namespace cng
