#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cng/core/autograd.hpp"
#include "cng/core/layers.hpp"
#include "cng/core/rng.hpp"

namespace cng {

enum class Mode { train, eval };

struct EnricherConfig {
  bool enabled = true;
  std::size_t dim = 16;
  std::size_t heads = 4;
  std::size_t num_layers = 1;
  std::size_t dim_feedforward = 32;
  bool use_cls = true;
  std::size_t max_len = 200;
  double padding_value = 0.0;
  double dropout = 0.15;
};

struct EnrichedEntitySet {
  ad::Var entities;              // [n x dim], prefix slot excluded
  std::optional<ad::Var> summary;  // output at the learned prefix slot
  std::size_t size() const { return entities.rows(); }
};

// Post-norm transformer encoder layer: ReLU feed-forward, dropout after the
// attention and feed-forward sublayers.
struct EncoderLayer {
  MultiHeadSelfAttention attention;
  LayerNorm norm1;
  LayerNorm norm2;
  Linear ff1;
  Linear ff2;
};

class Enricher {
 public:
  static Enricher create(ParameterStore& store, const EnricherConfig& config, Rng& rng);

  // Rows beyond max_len are dropped with a warning. `dropout_rng` null means
  // evaluation mode.
  EnrichedEntitySet operator()(const ad::Var& entities, Rng* dropout_rng) const;

  const EnricherConfig& config() const noexcept { return config_; }

 private:
  EnricherConfig config_;
  ad::Var prefix_;
  std::vector<EncoderLayer> layers_;
};

struct HyperlinkConfig {
  std::size_t entity_dim = 16;
  std::size_t num_hyperlink = 7;
  std::size_t features_dim = 16;
  std::vector<std::size_t> hidden_dims;  // ELU between hidden layers
};

class HyperlinkClassifier {
 public:
  static HyperlinkClassifier create(ParameterStore& store, const HyperlinkConfig& config, Rng& rng);

  // [n x entity_dim] -> [n x num_hyperlink] connection logits.
  ad::Var logits(const ad::Var& entities) const;
  const ad::Var& relation_features() const noexcept { return relation_features_; }
  const HyperlinkConfig& config() const noexcept { return config_; }

 private:
  HyperlinkConfig config_;
  std::vector<Linear> layers_;
  ad::Var relation_features_;  // [num_hyperlink x features_dim]
};

// s = sigmoid((logit + g1 - g2) / tau) with independent standard Gumbel
// draws. With `hard`, the forward value is 1[s > 0.5] and the gradient is the
// soft sample's (straight-through).
ad::Var gumbel_sigmoid_sample(const ad::Var& logits, double tau, bool hard, Rng& rng);

// Noise-free evaluation rule: 1[logit > 0].
Tensor threshold_incidence(const Tensor& logits);

// Linear per-epoch schedule from `start` down to `floor` over `epochs`.
double annealed_tau(double start, double floor, std::size_t epoch, std::size_t epochs);

struct EntitySpan {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t width_slot = 0;
  int type = 0;
  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// Entities V, fixed relation nodes E and the binary incidence A between them.
// Column j of A is hyperedge j over V in the dual view.
struct BipartiteGraph {
  std::string doc_id;
  ad::Var entities;   // [n x entity_dim]
  ad::Var incidence;  // [n x k], values in {0, 1}
  ad::Var relations;  // [k x features_dim]
  std::vector<EntitySpan> spans;

  std::size_t num_entities() const { return entities.rows(); }
  std::size_t num_relations() const { return relations.rows(); }
};

using Hyperedges = std::vector<std::vector<std::size_t>>;

Hyperedges hyperedges(const Tensor& incidence);
Tensor incidence_from_hyperedges(std::size_t num_entities, const Hyperedges& edges);

// Copy with every tensor detached from the tape.
BipartiteGraph freeze(const BipartiteGraph& graph);

nlohmann::json graph_to_json(const BipartiteGraph& graph);

struct GraphBuilderConfig {
  EnricherConfig enricher;
  HyperlinkConfig hyperlink;
  bool gumbel_hard = true;
};

class GraphBuilder {
 public:
  static GraphBuilder create(ParameterStore& store, const GraphBuilderConfig& config, Rng& rng);

  EnrichedEntitySet enrich(const ad::Var& entities, Rng* dropout_rng) const;

  // Samples A in train mode (rng required), thresholds logits in eval mode.
  BipartiteGraph build(const EnrichedEntitySet& enriched, std::vector<EntitySpan> spans, double tau, Mode mode,
                       Rng* rng) const;

  const Enricher* enricher() const noexcept { return enricher_ ? &*enricher_ : nullptr; }
  const HyperlinkClassifier& hyperlink() const noexcept { return hyperlink_; }
  const GraphBuilderConfig& config() const noexcept { return config_; }

 private:
  GraphBuilderConfig config_;
  std::optional<Enricher> enricher_;
  HyperlinkClassifier hyperlink_;
};

}  // namespace cng
