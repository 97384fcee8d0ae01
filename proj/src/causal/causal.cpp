#include "cng/causal/causal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cng/core/errors.hpp"
#include "cng/core/optim.hpp"
#include "cng/core/parallel.hpp"
#include "cng/embedding/corpus.hpp"
#include "cng/hgt/metrics.hpp"

namespace cng {

MaskedPredictor masked_predictor(const ClassifierModel& model) {
  return [&model](const BipartiteGraph& g, const NodeMask& m) { return model.predict_masked(g, m); };
}

std::vector<CounterfactualRecord> loo_labels(const BipartiteGraph& graph, const MaskedPredictor& predict) {
  const std::size_t n = graph.num_entities();
  std::vector<CounterfactualRecord> out;
  out.reserve(2 * n);
  const double y1 = predict(graph, NodeMask::all(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double y0 = predict(graph, NodeMask::without(n, {i}));
    CounterfactualRecord r{graph.doc_id, i, y1, y0, y1 - y0, 1};
    out.push_back(r);
    r.treatment = 0;
    out.push_back(r);
  }
  return out;
}

std::vector<CounterfactualRecord> loo_labels(const BipartiteGraph& graph, const ClassifierModel& model) {
  return loo_labels(graph, masked_predictor(model));
}

std::vector<std::vector<CounterfactualRecord>> loo_labels_all(std::span<const BipartiteGraph> graphs,
                                                              const ClassifierModel& model) {
  // Flatten to (graph, query) pairs; query 0 is the full graph.
  std::vector<std::size_t> offset(graphs.size() + 1, 0);
  for (std::size_t g = 0; g < graphs.size(); ++g) offset[g + 1] = offset[g] + graphs[g].num_entities() + 1;
  std::vector<double> prob(offset.back());
  parallel_for(prob.size(), [&](std::size_t q) {
    const std::size_t g = static_cast<std::size_t>(std::upper_bound(offset.begin(), offset.end(), q) - offset.begin()) - 1;
    const std::size_t local = q - offset[g];
    const std::size_t n = graphs[g].num_entities();
    prob[q] = local == 0 ? model.predict_masked(graphs[g], NodeMask::all(n))
                         : model.predict_masked(graphs[g], NodeMask::without(n, {local - 1}));
  });
  std::vector<std::vector<CounterfactualRecord>> out(graphs.size());
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const double y1 = prob[offset[g]];
    for (std::size_t i = 0; i < graphs[g].num_entities(); ++i) {
      const double y0 = prob[offset[g] + 1 + i];
      CounterfactualRecord r{graphs[g].doc_id, i, y1, y0, y1 - y0, 1};
      out[g].push_back(r);
      r.treatment = 0;
      out[g].push_back(r);
    }
  }
  return out;
}

Tensor neighbor_weights(const Tensor& incidence) {
  const std::size_t n = incidence.rows();
  Tensor w({n, n});
  const Hyperedges edges = hyperedges(incidence);
  std::vector<std::size_t> degree(n, 0);
  for (const auto& e : edges) {
    if (e.size() < 2) continue;
    for (std::size_t i : e) ++degree[i];
  }
  for (const auto& e : edges) {
    if (e.size() < 2) continue;
    const double share = 1.0 / static_cast<double>(e.size() - 1);
    for (std::size_t i : e)
      for (std::size_t m : e)
        if (m != i) w(i, m) += share / static_cast<double>(degree[i]);
  }
  return w;
}

nlohmann::json to_json(const EstimatorConfig& c) {
  return {{"input_dim", c.input_dim},
          {"confounder_dim", c.confounder_dim},
          {"interference_dim", c.interference_dim},
          {"interference_layers", c.interference_layers},
          {"alpha", c.alpha},
          {"ite_mode", c.ite_mode == IteMode::paired ? "paired" : "shared"}};
}

EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
  EstimatorConfig c;
  try {
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.confounder_dim = j.at("confounder_dim").get<std::size_t>();
    c.interference_dim = j.at("interference_dim").get<std::size_t>();
    c.interference_layers = j.at("interference_layers").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    const auto mode = j.at("ite_mode").get<std::string>();
    if (mode != "paired" && mode != "shared") throw CheckpointError("unknown ite_mode '" + mode + "'");
    c.ite_mode = mode == "paired" ? IteMode::paired : IteMode::shared;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("estimator config: ") + e.what());
  }
  return c;
}

HyperSciEstimator HyperSciEstimator::create(const EstimatorConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.confounder_dim == 0 || config.interference_dim == 0)
    throw ParameterError("estimator widths must be positive");
  if (config.alpha < 0.0) throw ParameterError("alpha must be nonnegative");
  HyperSciEstimator est;
  est.config_ = config;
  est.store_ = std::make_unique<ParameterStore>();
  Rng rng = Rng(seed).derive("init.hypersci");
  est.confounder_ = Linear::create(*est.store_, "hypersci.confounder", config.input_dim, config.confounder_dim, rng);
  std::size_t in = config.confounder_dim;
  for (std::size_t l = 0; l < config.interference_layers; ++l) {
    est.layers_.push_back(Linear::create(*est.store_, "hypersci.interference." + std::to_string(l), in,
                                         config.interference_dim, rng));
    in = config.interference_dim;
  }
  const std::size_t head_in = config.confounder_dim + in;
  est.head1_ = Linear::create(*est.store_, "hypersci.head1", head_in, 1, rng);
  est.head0_ = Linear::create(*est.store_, "hypersci.head0", head_in, 1, rng);
  return est;
}

HyperSciEstimator HyperSciEstimator::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != kEstimatorKind)
    throw CheckpointError("expected a '" + std::string(kEstimatorKind) + "' checkpoint, got '" + ckpt.kind + "'");
  HyperSciEstimator est = create(estimator_config_from_json(ckpt.config), 0);
  restore_store(*est.store_, ckpt);
  return est;
}

Checkpoint HyperSciEstimator::to_checkpoint() const {
  return checkpoint_from_store(kEstimatorKind, to_json(config_), *store_);
}

ad::Var HyperSciEstimator::confounder(const ad::Var& x) const { return confounder_(x); }

ad::Var HyperSciEstimator::interference(const ad::Var& z, const Tensor& neighbors, const Tensor& treatment) const {
  const std::size_t n = z.rows();
  if (neighbors.rows() != n || neighbors.cols() != n || treatment.rows() != n) {
    throw DimensionError("interference: " + std::to_string(n) + " nodes, neighbor weights " +
                         shape_string(neighbors.shape()) + ", treatment " + shape_string(treatment.shape()));
  }
  const ad::Var w = ad::Var::constant(neighbors);
  const ad::Var t = ad::Var::constant(treatment);
  ad::Var h = z;
  for (const Linear& layer : layers_) h = ad::elu(layer(ad::matmul(w, ad::mul_col(h, t))));
  return h;
}

PotentialOutcomes HyperSciEstimator::outcomes(const ad::Var& z, const ad::Var& p) const {
  const ad::Var zp = ad::concat_cols({z, p});
  return {ad::sigmoid(head1_(zp)), ad::sigmoid(head0_(zp))};
}

CausalLatents HyperSciEstimator::latents(const ad::Var& x, const Tensor& neighbors, const Tensor& treatment) const {
  ad::Var z = confounder(x);
  ad::Var p = interference(z, neighbors, treatment);
  return {z, p, treatment};
}

CausalSample make_causal_sample(const BipartiteGraph& graph, std::vector<CounterfactualRecord> records, int label) {
  if (records.size() != 2 * graph.num_entities()) {
    throw DimensionError("document '" + graph.doc_id + "' has " + std::to_string(graph.num_entities()) +
                         " nodes but " + std::to_string(records.size()) + " records");
  }
  return {graph.doc_id, label, graph.entities.value(), neighbor_weights(graph.incidence.value()), std::move(records)};
}

SampleForward estimator_forward(const HyperSciEstimator& est, const CausalSample& sample) {
  const std::size_t n = sample.num_nodes();
  const Tensor ones = Tensor::filled(n, 1, 1.0);
  const CausalLatents f = est.latents(ad::Var::constant(sample.features), sample.neighbors, ones);
  const PotentialOutcomes fo = est.outcomes(f.z, f.p);
  std::vector<ad::Var> zc, pc;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x = sample.features;
    for (std::size_t c = 0; c < x.cols(); ++c) x(i, c) = 0.0;
    Tensor t = ones;
    t[i] = 0.0;
    const CausalLatents ci = est.latents(ad::Var::constant(std::move(x)), sample.neighbors, t);
    zc.push_back(ad::slice_rows(ci.z, i, i + 1));
    pc.push_back(ad::slice_rows(ci.p, i, i + 1));
  }
  SampleForward out;
  out.z_treated = f.z;
  out.y1_factual = fo.y1;
  out.y0_factual = fo.y0;
  if (n > 0) {
    out.z_control = ad::concat_rows(zc);
    out.y0_control = est.outcomes(out.z_control, ad::concat_rows(pc)).y0;
  }
  return out;
}

namespace {

Tensor outcome_column(const CausalSample& s, int treatment) {
  Tensor y({s.num_nodes(), 1});
  for (const auto& r : s.records)
    if (r.treatment == treatment) y[r.node] = r.outcome();
  return y;
}

}  // namespace

LossParts estimator_loss(const HyperSciEstimator& est, std::span<const CausalSample* const> batch, double alpha) {
  std::vector<ad::Var> errors, treated, control;
  for (const CausalSample* s : batch) {
    if (s->num_nodes() == 0) continue;
    const SampleForward f = estimator_forward(est, *s);
    errors.push_back(ad::sum(ad::square(ad::sub(f.y1_factual, ad::Var::constant(outcome_column(*s, 1))))));
    errors.push_back(ad::sum(ad::square(ad::sub(f.y0_control, ad::Var::constant(outcome_column(*s, 0))))));
    treated.push_back(f.z_treated);
    control.push_back(f.z_control);
  }
  if (errors.empty()) throw TrainingError("estimator batch has no nodes");
  ad::Var se = errors[0];
  for (std::size_t k = 1; k < errors.size(); ++k) se = ad::add(se, errors[k]);
  const ad::Var was = wasserstein1(ad::concat_rows(treated), ad::concat_rows(control));
  LossParts out;
  out.squared_error = se.value()[0];
  out.wasserstein = was.value()[0];
  out.total = alpha == 0.0 ? se : ad::add(se, ad::scale(was, alpha));
  return out;
}

std::vector<double> estimate_ite(const HyperSciEstimator& est, const CausalSample& sample) {
  ad::NoGradGuard guard;
  const std::size_t n = sample.num_nodes();
  std::vector<double> tau(n);
  if (n == 0) return tau;
  const SampleForward f = estimator_forward(est, sample);
  const Tensor& y0 = est.config().ite_mode == IteMode::paired ? f.y0_control.value() : f.y0_factual.value();
  for (std::size_t i = 0; i < n; ++i) tau[i] = f.y1_factual.value()[i] - y0[i];
  return tau;
}

std::vector<CausalEpochLog> train_hypersci(HyperSciEstimator& est, std::span<const CausalSample* const> samples,
                                           const CausalTrainConfig& config) {
  std::size_t rows = 0;
  for (const auto* s : samples) {
    if (s->num_nodes() > 0 && s->features.cols() != est.config().input_dim) {
      throw TrainingError("document '" + s->doc_id + "' has node width " + std::to_string(s->features.cols()) +
                          ", estimator expects " + std::to_string(est.config().input_dim));
    }
    rows += s->records.size();
  }
  if (rows == 0) throw TrainingError("no counterfactual records to train on");
  if (config.batch_size == 0) throw TrainingError("batch size must be positive");

  std::vector<const CausalSample*> usable;
  for (const auto* s : samples)
    if (s->num_nodes() > 0) usable.push_back(s);
  AdamWOptions opts;
  opts.learning_rate = config.learning_rate;
  opts.weight_decay = config.weight_decay;
  AdamW optimizer(est.parameters().vars(), opts);
  Rng root = Rng(config.seed).derive("hypersci");
  std::vector<CausalEpochLog> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = root.derive("shuffle").derive(epoch);
    std::shuffle(usable.begin(), usable.end(), shuffle.engine());
    double total = 0.0;
    for (std::size_t begin = 0; begin < usable.size(); begin += config.batch_size) {
      const std::size_t end = std::min(usable.size(), begin + config.batch_size);
      const std::span<const CausalSample* const> batch(usable.data() + begin, end - begin);
      optimizer.zero_grad();
      const LossParts loss = estimator_loss(est, batch, est.config().alpha);
      ad::backward(loss.total);
      optimizer.step();
      total += loss.total.value()[0];
    }
    history.push_back({epoch, total / static_cast<double>(rows)});
  }
  round_to_float32(est.parameters());
  return history;
}

EffectMetrics pehe_ate(std::span<const double> tau_hat, std::span<const double> tau_true) {
  if (tau_hat.size() != tau_true.size()) {
    throw DimensionError("pehe_ate: " + std::to_string(tau_hat.size()) + " estimates vs " +
                         std::to_string(tau_true.size()) + " targets");
  }
  if (tau_hat.empty()) throw ParameterError("pehe_ate needs at least one unit");
  const double n = static_cast<double>(tau_hat.size());
  double se = 0.0, sh = 0.0, st = 0.0;
  for (std::size_t i = 0; i < tau_hat.size(); ++i) {
    const double d = tau_hat[i] - tau_true[i];
    se += d * d;
    sh += tau_hat[i];
    st += tau_true[i];
  }
  EffectMetrics m;
  m.pehe = std::sqrt(se / n);
  m.ate_estimated = sh / n;
  m.ate_true = st / n;
  m.ate_error = std::abs(m.ate_estimated - m.ate_true);
  return m;
}

nlohmann::json to_json(const EffectMetrics& m) {
  return {{"pehe", m.pehe}, {"ate_estimated", m.ate_estimated}, {"ate_true", m.ate_true}, {"ate_error", m.ate_error}};
}

DistillDirection distill_direction_from_string(const std::string& s) {
  if (s == "remove") return DistillDirection::remove;
  if (s == "grow") return DistillDirection::grow;
  throw ConfigError("distill direction must be 'remove' or 'grow', got '" + s + "'");
}

std::string to_string(DistillDirection d) { return d == DistillDirection::remove ? "remove" : "grow"; }

std::vector<std::size_t> ite_order(std::span<const double> tau_hat) {
  std::vector<std::size_t> order(tau_hat.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tau_hat[a] > tau_hat[b]; });
  return order;
}

DistillationResult distill_minimal_subgraph(const BipartiteGraph& graph, std::span<const double> tau_hat,
                                            const MaskedPredictor& predict, DistillDirection direction) {
  const std::size_t n = graph.num_entities();
  if (tau_hat.size() != n) {
    throw DimensionError("distill: " + std::to_string(tau_hat.size()) + " effects for " + std::to_string(n) +
                         " nodes");
  }
  DistillationResult r;
  r.doc_id = graph.doc_id;
  r.num_nodes = n;
  r.original_probability = predict(graph, NodeMask::all(n));
  r.original_prediction = threshold_prediction(r.original_probability);
  r.final_probability = r.original_probability;
  r.removal_order = ite_order(tau_hat);
  if (n == 0) return r;

  if (direction == DistillDirection::remove) {
    NodeMask mask = NodeMask::all(n);
    for (std::size_t node : r.removal_order) {
      mask.remove(node);
      r.remaining.push_back(node);
      r.final_probability = predict(graph, mask);
      if (threshold_prediction(r.final_probability) != r.original_prediction) {
        r.flipped = true;
        break;
      }
    }
  } else {
    std::vector<std::uint8_t> keep(n, 0);
    r.final_probability = predict(graph, NodeMask(keep));
    if (threshold_prediction(r.final_probability) == r.original_prediction) {
      r.flipped = true;
    } else {
      for (std::size_t node : r.removal_order) {
        keep[node] = 1;
        r.remaining.push_back(node);
        r.final_probability = predict(graph, NodeMask(keep));
        if (threshold_prediction(r.final_probability) == r.original_prediction) {
          r.flipped = true;
          break;
        }
      }
    }
  }
  if (!r.flipped) r.remaining = r.removal_order;
  std::sort(r.remaining.begin(), r.remaining.end());
  r.compression_rate =
      r.flipped ? (1.0 - static_cast<double>(r.remaining.size()) / static_cast<double>(n)) * 100.0 : 0.0;
  return r;
}

nlohmann::json to_json(const DistillationResult& r) {
  return {{"doc_id", r.doc_id},
          {"label", r.label},
          {"num_nodes", r.num_nodes},
          {"original_probability", r.original_probability},
          {"original_prediction", r.original_prediction},
          {"final_probability", r.final_probability},
          {"removal_order", r.removal_order},
          {"v_remaining", r.remaining},
          {"compression_rate", r.compression_rate},
          {"flipped", r.flipped}};
}

CompressionSummary compression_report(std::span<const DistillationResult> results) {
  if (results.empty()) throw ParameterError("compression_report needs at least one result");
  CompressionSummary s;
  s.count = results.size();
  double sum = 0.0, sum_crit = 0.0, sum_consp = 0.0;
  std::size_t n_crit = 0, n_consp = 0;
  s.max = results[0].compression_rate;
  for (const auto& r : results) {
    sum += r.compression_rate;
    s.max = std::max(s.max, r.compression_rate);
    s.flipped += r.flipped;
    if (r.label == kLabelCritical) {
      sum_crit += r.compression_rate;
      ++n_crit;
    } else if (r.label == kLabelConspiracy) {
      sum_consp += r.compression_rate;
      ++n_consp;
    }
  }
  s.mean = sum / static_cast<double>(s.count);
  double var = 0.0;
  for (const auto& r : results) var += (r.compression_rate - s.mean) * (r.compression_rate - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.count));
  if (n_crit > 0) s.mean_critical = sum_crit / static_cast<double>(n_crit);
  if (n_consp > 0) s.mean_conspiracy = sum_consp / static_cast<double>(n_consp);
  return s;
}

nlohmann::json to_json(const CompressionSummary& s) {
  nlohmann::json j = {{"count", s.count}, {"flipped", s.flipped}, {"mean", s.mean},
                      {"std", s.stddev},  {"max", s.max}};
  j["mean_critical"] = s.mean_critical ? nlohmann::json(*s.mean_critical) : nlohmann::json(nullptr);
  j["mean_conspiracy"] = s.mean_conspiracy ? nlohmann::json(*s.mean_conspiracy) : nlohmann::json(nullptr);
  return j;
}

}  // namespace cng
