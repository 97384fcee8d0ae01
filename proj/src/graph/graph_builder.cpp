#include "cng/graph/graph_builder.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "cng/core/errors.hpp"

namespace cng {

Enricher Enricher::create(ParameterStore& store, const EnricherConfig& config, Rng& rng) {
  Enricher e;
  e.config_ = config;
  if (config.use_cls) e.prefix_ = store.add("enricher.cls_token", normal_tensor(1, config.dim, 0.02, rng));
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string p = "enricher.layers." + std::to_string(l);
    EncoderLayer layer{
        MultiHeadSelfAttention::create(store, p + ".self_attn", config.dim, config.heads, rng),
        LayerNorm::create(store, p + ".norm1", config.dim),
        LayerNorm::create(store, p + ".norm2", config.dim),
        Linear::create(store, p + ".linear1", config.dim, config.dim_feedforward, rng),
        Linear::create(store, p + ".linear2", config.dim_feedforward, config.dim, rng),
    };
    e.layers_.push_back(std::move(layer));
  }
  return e;
}

EnrichedEntitySet Enricher::operator()(const ad::Var& entities, Rng* dropout_rng) const {
  ad::Var x = entities;
  const std::size_t n = x.rows();
  if (n == 0) return {x, std::nullopt};
  if (x.cols() != config_.dim) {
    throw DimensionError("enricher: entity width " + std::to_string(x.cols()) + " differs from " +
                         std::to_string(config_.dim));
  }
  if (n > config_.max_len) {
    spdlog::warn("enricher: truncating {} entities to max_len {}", n, config_.max_len);
    x = ad::slice_rows(x, 0, config_.max_len);
  }
  if (config_.use_cls) x = ad::concat_rows({prefix_, x});
  for (const auto& layer : layers_) {
    ad::Var attended = ad::dropout(layer.attention(x), config_.dropout, dropout_rng);
    x = layer.norm1(ad::add(x, attended));
    ad::Var ff = layer.ff2(ad::relu(layer.ff1(x)));
    x = layer.norm2(ad::add(x, ad::dropout(ff, config_.dropout, dropout_rng)));
  }
  if (!config_.use_cls) return {x, std::nullopt};
  return {ad::slice_rows(x, 1, x.rows()), ad::slice_rows(x, 0, 1)};
}

HyperlinkClassifier HyperlinkClassifier::create(ParameterStore& store, const HyperlinkConfig& config, Rng& rng) {
  HyperlinkClassifier h;
  h.config_ = config;
  std::size_t in = config.entity_dim;
  for (std::size_t l = 0; l < config.hidden_dims.size(); ++l) {
    h.layers_.push_back(Linear::create(store, "hyperlink.hidden." + std::to_string(l), in, config.hidden_dims[l], rng));
    in = config.hidden_dims[l];
  }
  h.layers_.push_back(Linear::create(store, "hyperlink.out", in, config.num_hyperlink, rng));
  h.relation_features_ =
      store.add("hyperlink.relation_features", normal_tensor(config.num_hyperlink, config.features_dim, 1.0, rng));
  return h;
}

ad::Var HyperlinkClassifier::logits(const ad::Var& entities) const {
  ad::Var x = entities;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l](x);
    if (l + 1 < layers_.size()) x = ad::elu(x);
  }
  return x;
}

ad::Var gumbel_sigmoid_sample(const ad::Var& logits, double tau, bool hard, Rng& rng) {
  if (!(tau > 0.0)) throw ParameterError("gumbel_sigmoid_sample: tau must be positive, got " + std::to_string(tau));
  Tensor noise(logits.value().shape());
  for (auto& g : noise.values()) g = rng.gumbel() - rng.gumbel();
  ad::Var soft = ad::sigmoid(ad::scale(ad::add(logits, ad::Var::constant(std::move(noise))), 1.0 / tau));
  if (!hard) return soft;
  Tensor h(soft.value().shape());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = soft.value()[i] > 0.5 ? 1.0 : 0.0;
  return ad::straight_through(std::move(h), soft);
}

Tensor threshold_incidence(const Tensor& logits) {
  Tensor a(logits.shape());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = logits[i] > 0.0 ? 1.0 : 0.0;
  return a;
}

double annealed_tau(double start, double floor, std::size_t epoch, std::size_t epochs) {
  if (epochs <= 1) return start;
  const double frac = static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
  return start + (floor - start) * frac;
}

Hyperedges hyperedges(const Tensor& incidence) {
  const std::size_t n = incidence.rows(), k = incidence.cols();
  Hyperedges edges(k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (incidence(i, j) == 1.0) edges[j].push_back(i);
  return edges;
}

Tensor incidence_from_hyperedges(std::size_t num_entities, const Hyperedges& edges) {
  Tensor a({num_entities, edges.size()});
  for (std::size_t j = 0; j < edges.size(); ++j) {
    for (std::size_t i : edges[j]) {
      if (i >= num_entities) throw IndexError("hyperedge member " + std::to_string(i) + " out of range");
      a(i, j) = 1.0;
    }
  }
  return a;
}

BipartiteGraph freeze(const BipartiteGraph& graph) {
  BipartiteGraph g;
  g.doc_id = graph.doc_id;
  g.entities = ad::Var::constant(graph.entities.value());
  g.incidence = ad::Var::constant(graph.incidence.value());
  g.relations = ad::Var::constant(graph.relations.value());
  g.spans = graph.spans;
  return g;
}

nlohmann::json graph_to_json(const BipartiteGraph& graph) {
  nlohmann::json j;
  j["doc_id"] = graph.doc_id;
  j["n"] = graph.num_entities();
  j["k"] = graph.num_relations();
  nlohmann::json rows = nlohmann::json::array();
  const Tensor& a = graph.incidence.value();
  for (std::size_t i = 0; i < graph.num_entities(); ++i) {
    std::vector<int> row;
    for (std::size_t c = 0; c < a.cols(); ++c) row.push_back(a(i, c) == 1.0 ? 1 : 0);
    rows.push_back(row);
  }
  j["A"] = rows;
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : graph.spans) {
    spans.push_back({{"start", s.start}, {"length", s.length}, {"width", s.width_slot}, {"type", s.type}});
  }
  j["entities"] = spans;
  return j;
}

GraphBuilder GraphBuilder::create(ParameterStore& store, const GraphBuilderConfig& config, Rng& rng) {
  GraphBuilder b;
  b.config_ = config;
  if (config.enricher.enabled) b.enricher_ = Enricher::create(store, config.enricher, rng);
  b.hyperlink_ = HyperlinkClassifier::create(store, config.hyperlink, rng);
  return b;
}

EnrichedEntitySet GraphBuilder::enrich(const ad::Var& entities, Rng* dropout_rng) const {
  if (!enricher_) return {entities, std::nullopt};
  return (*enricher_)(entities, dropout_rng);
}

BipartiteGraph GraphBuilder::build(const EnrichedEntitySet& enriched, std::vector<EntitySpan> spans, double tau,
                                   Mode mode, Rng* rng) const {
  BipartiteGraph g;
  g.entities = enriched.entities;
  g.relations = hyperlink_.relation_features();
  spans.resize(std::min(spans.size(), enriched.size()));
  g.spans = std::move(spans);
  const std::size_t n = enriched.size();
  const std::size_t k = config_.hyperlink.num_hyperlink;
  if (n == 0) {
    g.incidence = ad::Var::constant(Tensor({0, k}));
    return g;
  }
  ad::Var logits = hyperlink_.logits(enriched.entities);
  if (mode == Mode::eval) {
    g.incidence = ad::Var::constant(threshold_incidence(logits.value()));
  } else {
    if (rng == nullptr) throw ParameterError("graph build in train mode needs an rng stream");
    g.incidence = gumbel_sigmoid_sample(logits, tau, config_.gumbel_hard, *rng);
  }
  return g;
}

}  // namespace cng
