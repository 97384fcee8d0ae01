#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cng/causal/wasserstein.hpp"
#include "cng/core/layers.hpp"
#include "cng/graph/graph_builder.hpp"
#include "cng/hgt/checkpoint.hpp"
#include "cng/hgt/hgt.hpp"
#include "cng/hgt/model.hpp"

namespace cng {

// Probability of the conspiracy class for a graph with some nodes masked.
using MaskedPredictor = std::function<double(const BipartiteGraph&, const NodeMask&)>;

MaskedPredictor masked_predictor(const ClassifierModel& model);

struct CounterfactualRecord {
  std::string doc_id;
  std::size_t node = 0;
  double y1 = 0.0;  // P(conspiracy | G)
  double y0 = 0.0;  // P(conspiracy | G without node)
  double tau_true = 0.0;
  int treatment = 1;

  double outcome() const { return treatment == 1 ? y1 : y0; }
  bool operator==(const CounterfactualRecord&) const = default;
};

// Two records per node, factual (t = 1) then control (t = 0), in node order.
std::vector<CounterfactualRecord> loo_labels(const BipartiteGraph& graph, const MaskedPredictor& predict);
std::vector<CounterfactualRecord> loo_labels(const BipartiteGraph& graph, const ClassifierModel& model);

// Labels for many graphs; the (graph, node) evaluations fan out over workers.
std::vector<std::vector<CounterfactualRecord>> loo_labels_all(std::span<const BipartiteGraph> graphs,
                                                              const ClassifierModel& model);

// Row-normalized neighbor weights through shared hyperedges:
// W[i][m] = mean over the hyperedges e containing i (with |e| >= 2) of
// 1[m in e] / (|e| - 1), and W[i][i] = 0. Isolated nodes get a zero row.
Tensor neighbor_weights(const Tensor& incidence);

enum class IteMode {
  // tau_i = head1 on the factual latents of i minus head0 on the latents of
  // the instance where i is masked; each head sees the inputs it was fit on.
  paired,
  // tau_i = head1(Z_i, P_i) - head0(Z_i, P_i) on the factual latents.
  shared,
};

struct EstimatorConfig {
  std::size_t input_dim = 16;
  std::size_t confounder_dim = 32;
  std::size_t interference_dim = 32;
  std::size_t interference_layers = 1;
  double alpha = 0.1;
  IteMode ite_mode = IteMode::paired;
};

nlohmann::json to_json(const EstimatorConfig& c);
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);

inline constexpr const char* kEstimatorKind = "hypersci";

struct CausalLatents {
  ad::Var z;
  ad::Var p;
  Tensor treatment;  // [n x 1]
};

struct PotentialOutcomes {
  ad::Var y1;  // [n x 1]
  ad::Var y0;  // [n x 1]
};

class HyperSciEstimator {
 public:
  static HyperSciEstimator create(const EstimatorConfig& config, std::uint64_t seed);
  static HyperSciEstimator from_checkpoint(const Checkpoint& ckpt);

  HyperSciEstimator(HyperSciEstimator&&) = default;
  HyperSciEstimator& operator=(HyperSciEstimator&&) = default;
  HyperSciEstimator(const HyperSciEstimator&) = delete;
  HyperSciEstimator& operator=(const HyperSciEstimator&) = delete;

  Checkpoint to_checkpoint() const;

  ad::Var confounder(const ad::Var& x) const;
  // H <- ELU(W (T * H) theta + b) per layer, starting from Z.
  ad::Var interference(const ad::Var& z, const Tensor& neighbors, const Tensor& treatment) const;
  PotentialOutcomes outcomes(const ad::Var& z, const ad::Var& p) const;
  CausalLatents latents(const ad::Var& x, const Tensor& neighbors, const Tensor& treatment) const;

  const EstimatorConfig& config() const noexcept { return config_; }
  ParameterStore& parameters() noexcept { return *store_; }
  const ParameterStore& parameters() const noexcept { return *store_; }
  const Linear& confounder_map() const noexcept { return confounder_; }
  const std::vector<Linear>& interference_layers() const noexcept { return layers_; }
  const Linear& head1() const noexcept { return head1_; }
  const Linear& head0() const noexcept { return head0_; }

 private:
  HyperSciEstimator() = default;
  EstimatorConfig config_;
  std::unique_ptr<ParameterStore> store_;
  Linear confounder_;
  std::vector<Linear> layers_;
  Linear head1_;
  Linear head0_;
};

// One document prepared for the estimator: frozen node features, its
// neighbor weights and the counterfactual records.
struct CausalSample {
  std::string doc_id;
  int label = -1;
  Tensor features;   // [n x input_dim]
  Tensor neighbors;  // [n x n]
  std::vector<CounterfactualRecord> records;

  std::size_t num_nodes() const { return features.rows(); }
};

CausalSample make_causal_sample(const BipartiteGraph& graph, std::vector<CounterfactualRecord> records, int label);

struct SampleForward {
  ad::Var z_treated;  // [n x d] factual confounder rows
  ad::Var z_control;  // [n x d] confounder row of i in the instance without i
  ad::Var y1_factual;  // head1 on the factual latents
  ad::Var y0_control;  // head0 on the control instances
  ad::Var y0_factual;  // head0 on the factual latents
};

SampleForward estimator_forward(const HyperSciEstimator& est, const CausalSample& sample);

struct LossParts {
  ad::Var total;
  double squared_error = 0.0;
  double wasserstein = 0.0;
};

// sum over rows (yhat - y)^2 + alpha * W1(Z_treated, Z_control); the head
// scored for a row is the one matching its treatment.
LossParts estimator_loss(const HyperSciEstimator& est, std::span<const CausalSample* const> batch, double alpha);

std::vector<double> estimate_ite(const HyperSciEstimator& est, const CausalSample& sample);

struct CausalTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
};

struct CausalEpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

std::vector<CausalEpochLog> train_hypersci(HyperSciEstimator& est, std::span<const CausalSample* const> samples,
                                           const CausalTrainConfig& config);

struct EffectMetrics {
  double pehe = 0.0;
  double ate_estimated = 0.0;
  double ate_true = 0.0;
  double ate_error = 0.0;  // |ate_estimated - ate_true|
};

EffectMetrics pehe_ate(std::span<const double> tau_hat, std::span<const double> tau_true);
nlohmann::json to_json(const EffectMetrics& m);

enum class DistillDirection {
  remove,  // drop nodes from the full graph until the prediction flips
  grow,    // add nodes to the empty graph until the prediction matches
};

DistillDirection distill_direction_from_string(const std::string& s);
std::string to_string(DistillDirection d);

struct DistillationResult {
  std::string doc_id;
  int label = -1;
  std::size_t num_nodes = 0;
  double original_probability = 0.0;
  int original_prediction = 0;
  double final_probability = 0.0;
  std::vector<std::size_t> removal_order;
  std::vector<std::size_t> remaining;  // the minimal causal node set
  double compression_rate = 0.0;
  bool flipped = false;
};

// Node order by descending tau_hat; ties go to the lower index.
std::vector<std::size_t> ite_order(std::span<const double> tau_hat);

DistillationResult distill_minimal_subgraph(const BipartiteGraph& graph, std::span<const double> tau_hat,
                                            const MaskedPredictor& predict,
                                            DistillDirection direction = DistillDirection::remove);

nlohmann::json to_json(const DistillationResult& r);

struct CompressionSummary {
  std::size_t count = 0;
  std::size_t flipped = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double max = 0.0;
  std::optional<double> mean_critical;
  std::optional<double> mean_conspiracy;
};

CompressionSummary compression_report(std::span<const DistillationResult> results);
nlohmann::json to_json(const CompressionSummary& s);

}  // namespace cng
