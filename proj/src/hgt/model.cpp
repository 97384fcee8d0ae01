#include "cng/hgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cng/core/errors.hpp"
#include "cng/core/optim.hpp"
#include "cng/core/parallel.hpp"

namespace cng {

nlohmann::json to_json(const ModelConfig& c) {
  const auto& e = c.graph.enricher;
  const auto& h = c.graph.hyperlink;
  return {
      {"embedding_dim", c.span.embedding_dim},
      {"max_span_width", c.span.max_span_width},
      {"num_span_type", c.span.num_span_type},
      {"entity_dim", c.span.entity_dim},
      {"dropout_rate", c.dropout_rate},
      {"enricher_enabled", e.enabled},
      {"enricher_n_heads", e.heads},
      {"enricher_num_layers", e.num_layers},
      {"enricher_dim_feedforward", e.dim_feedforward},
      {"enricher_use_cls", e.use_cls},
      {"enricher_max_len", e.max_len},
      {"enricher_padding_value", e.padding_value},
      {"enricher_dropout", e.dropout},
      {"num_hyperlink", h.num_hyperlink},
      {"hyperlink_features_dim", h.features_dim},
      {"hyper_link_classifier_hidden_dim", h.hidden_dims},
      {"gumbel_sigmoid_hard", c.graph.gumbel_hard},
      {"hyper_graph_hidden_dim", c.hgt.hidden_dim},
      {"hyper_graph_out_dim", c.hgt.out_dim},
      {"hyper_graph_heads", c.hgt.heads},
      {"hyper_graph_dropout", c.hgt.dropout},
      {"hgt_num_layers", c.hgt.num_layers},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.span.embedding_dim = j.at("embedding_dim");
    c.span.max_span_width = j.at("max_span_width");
    c.span.num_span_type = j.at("num_span_type");
    c.span.entity_dim = j.at("entity_dim");
    c.dropout_rate = j.at("dropout_rate");
    auto& e = c.graph.enricher;
    e.enabled = j.at("enricher_enabled");
    e.dim = c.span.entity_dim;
    e.heads = j.at("enricher_n_heads");
    e.num_layers = j.at("enricher_num_layers");
    e.dim_feedforward = j.at("enricher_dim_feedforward");
    e.use_cls = j.at("enricher_use_cls");
    e.max_len = j.at("enricher_max_len");
    e.padding_value = j.at("enricher_padding_value");
    e.dropout = j.at("enricher_dropout");
    auto& h = c.graph.hyperlink;
    h.entity_dim = c.span.entity_dim;
    h.num_hyperlink = j.at("num_hyperlink");
    h.features_dim = j.at("hyperlink_features_dim");
    h.hidden_dims = j.at("hyper_link_classifier_hidden_dim").get<std::vector<std::size_t>>();
    c.graph.gumbel_hard = j.at("gumbel_sigmoid_hard");
    c.hgt.entity_in = c.span.entity_dim;
    c.hgt.relation_in = h.features_dim;
    c.hgt.hidden_dim = j.at("hyper_graph_hidden_dim");
    c.hgt.out_dim = j.at("hyper_graph_out_dim");
    c.hgt.heads = j.at("hyper_graph_heads");
    c.hgt.dropout = j.at("hyper_graph_dropout");
    c.hgt.num_layers = j.at("hgt_num_layers");
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("model config incomplete: ") + ex.what());
  }
}

ClassifierModel ClassifierModel::create(const ModelConfig& config, std::uint64_t seed) {
  ClassifierModel m;
  m.config_ = config;
  m.config_.graph.enricher.dim = config.span.entity_dim;
  m.config_.graph.hyperlink.entity_dim = config.span.entity_dim;
  m.config_.hgt.entity_in = config.span.entity_dim;
  m.config_.hgt.relation_in = config.graph.hyperlink.features_dim;
  m.store_ = std::make_unique<ParameterStore>();
  Rng root(seed);
  Rng span_rng = root.derive("init.span");
  Rng graph_rng = root.derive("init.graph");
  Rng hgt_rng = root.derive("init.hgt");
  m.span_ = SpanExtractor::create(*m.store_, m.config_.span, span_rng);
  m.graph_ = GraphBuilder::create(*m.store_, m.config_.graph, graph_rng);
  m.hgt_ = HgtClassifier::create(*m.store_, m.config_.hgt, hgt_rng);
  return m;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kClassifierKind) throw CheckpointError("expected a classifier checkpoint, got '" + ckpt.kind + "'");
  ClassifierModel m = create(model_config_from_json(ckpt.config), 0);
  restore_store(*m.store_, ckpt);
  return m;
}

Checkpoint ClassifierModel::to_checkpoint() const { return checkpoint_from_store(kClassifierKind, to_json(config_), *store_); }

DocumentForward ClassifierModel::forward(const TokenSequence& doc, Mode mode, double tau, Rng* rng) const {
  if (mode == Mode::train && rng == nullptr) throw ParameterError("train-mode forward needs an rng stream");
  Rng* train_rng = mode == Mode::train ? rng : nullptr;
  ExtractedEntities entities = span_.extract(doc);
  ad::Var v = ad::dropout(entities.embeddings, config_.dropout_rate, train_rng);
  std::vector<EntitySpan> spans;
  spans.reserve(entities.vertices.size());
  for (const auto& ev : entities.vertices) spans.push_back({ev.start, ev.length, ev.width_slot, ev.type});
  DocumentForward out;
  out.graph = graph_.build(graph_.enrich(v, train_rng), std::move(spans), tau, mode, train_rng);
  out.graph.doc_id = doc.doc_id;
  const NodeMask all = NodeMask::all(out.graph.num_entities());
  out.logit = hgt_.logit(out.graph, &all, train_rng);
  return out;
}

BipartiteGraph ClassifierModel::build_graph(const TokenSequence& doc) const {
  ad::NoGradGuard no_grad;
  return freeze(forward(doc, Mode::eval, 1.0, nullptr).graph);
}

double ClassifierModel::predict(const TokenSequence& doc) const {
  ad::NoGradGuard no_grad;
  return ad::logistic(forward(doc, Mode::eval, 1.0, nullptr).logit.value()[0]);
}

double ClassifierModel::predict_masked(const BipartiteGraph& graph, const NodeMask& mask) const {
  return hgt_.probability(graph, mask);
}

std::map<std::string, std::size_t> ClassifierModel::component_counts() const {
  return {
      {"width_embeddings", store_->count("span.width_embeddings")},
      {"type_embeddings", store_->count("span.type_embeddings")},
      {"span_classifier", store_->count("span.classifier")},
      {"entity_projector", store_->count("span.projector")},
      {"enricher", store_->count("enricher.")},
      {"hyperlink_classifier", store_->count("hyperlink.")},
      {"hyper_graph_classifier", store_->count("hgt.")},
  };
}

std::vector<double> predict_all(const ClassifierModel& model, std::span<const TokenSequence* const> docs) {
  std::vector<double> out(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { out[i] = model.predict(*docs[i]); });
  return out;
}

ClassificationMetrics evaluate(const ClassifierModel& model, std::span<const TokenSequence* const> docs) {
  for (const auto* d : docs) {
    if (d->width() != model.config().span.embedding_dim) {
      throw CheckpointError("document '" + d->doc_id + "' has width " + std::to_string(d->width()) +
                            ", checkpoint expects " + std::to_string(model.config().span.embedding_dim));
    }
  }
  const std::vector<double> p = predict_all(model, docs);
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    truth.push_back(docs[i]->label);
    pred.push_back(threshold_prediction(p[i]));
  }
  return classification_metrics(truth, pred);
}

ad::Var batch_loss(const ClassifierModel& model, std::span<const TokenSequence* const> batch, double tau,
                   Rng& stream) {
  if (batch.empty()) throw TrainingError("empty batch");
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng doc_rng = stream.derive(static_cast<std::uint64_t>(b));
    const DocumentForward f = model.forward(*batch[b], Mode::train, tau, &doc_rng);
    losses.push_back(ad::bce_with_logits(f.logit, static_cast<double>(batch[b]->label)));
  }
  return ad::scale(ad::sum(ad::concat_rows(losses)), 1.0 / static_cast<double>(batch.size()));
}

std::vector<EpochLog> train_classifier(ClassifierModel& model, std::span<const TokenSequence* const> docs,
                                       const TrainConfig& config) {
  if (docs.empty()) throw TrainingError("training corpus is empty");
  std::size_t positives = 0;
  for (const auto* d : docs) {
    if (d->width() != model.config().span.embedding_dim) {
      throw TrainingError("document '" + d->doc_id + "' has width " + std::to_string(d->width()) +
                          ", model expects " + std::to_string(model.config().span.embedding_dim));
    }
    positives += d->label == kLabelConspiracy;
  }
  if (positives == 0 || positives == docs.size()) throw TrainingError("training corpus must contain both classes");
  if (config.batch_size == 0) throw TrainingError("batch size must be positive");

  AdamWOptions opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  AdamW optimizer(model.parameters().vars(), opts);
  Rng root(config.seed);
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double tau = annealed_tau(config.tau_start, config.tau_floor, epoch, config.epochs);
    Rng shuffle = root.derive("shuffle").derive(epoch);
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double total = 0.0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const TokenSequence*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(docs[order[i]]);
      Rng stream = root.derive("batch").derive(epoch * 1000003 + step);
      optimizer.zero_grad();
      const ad::Var loss = batch_loss(model, batch, tau, stream);
      ad::backward(loss);
      optimizer.step();
      total += loss.value()[0] * static_cast<double>(batch.size());
    }
    history.push_back({epoch, tau, total / static_cast<double>(docs.size())});
  }
  round_to_float32(model.parameters());
  return history;
}

Split stratified_split(std::span<const int> labels, double held_out_fraction, std::uint64_t seed) {
  if (held_out_fraction < 0.0 || held_out_fraction >= 1.0)
    throw ParameterError("held-out fraction must lie in [0, 1)");
  Split s;
  Rng rng = Rng(seed).derive("split");
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    std::size_t take = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(idx.size())));
    if (held_out_fraction > 0.0 && take == 0 && idx.size() >= 2) take = 1;
    s.held_out.insert(s.held_out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  return s;
}

}  // namespace cng
