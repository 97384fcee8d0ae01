#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cng/embedding/corpus.hpp"
#include "cng/graph/graph_builder.hpp"
#include "cng/hgt/checkpoint.hpp"
#include "cng/hgt/hgt.hpp"
#include "cng/hgt/metrics.hpp"
#include "cng/span/span_extractor.hpp"

namespace cng {

struct ModelConfig {
  SpanConfig span;
  GraphBuilderConfig graph;
  HgtConfig hgt;
  double dropout_rate = 0.15;  // applied to projected entity embeddings
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr const char* kClassifierKind = "classifier";

struct DocumentForward {
  BipartiteGraph graph;
  ad::Var logit;
};

// Span extractor, entity enricher, hyperlink map and HGT sharing one
// parameter store. Parameters are owned by the store; the model is movable
// but not copyable.
class ClassifierModel {
 public:
  static ClassifierModel create(const ModelConfig& config, std::uint64_t seed);
  static ClassifierModel from_checkpoint(const Checkpoint& ckpt);

  ClassifierModel(ClassifierModel&&) = default;
  ClassifierModel& operator=(ClassifierModel&&) = default;
  ClassifierModel(const ClassifierModel&) = delete;
  ClassifierModel& operator=(const ClassifierModel&) = delete;

  Checkpoint to_checkpoint() const;

  // Train mode samples the incidence and applies dropout from `rng`; eval
  // mode (rng ignored) is deterministic.
  DocumentForward forward(const TokenSequence& doc, Mode mode, double tau, Rng* rng) const;

  // Frozen evaluation-mode graph of a document, detached from the tape.
  BipartiteGraph build_graph(const TokenSequence& doc) const;
  double predict(const TokenSequence& doc) const;
  double predict_masked(const BipartiteGraph& graph, const NodeMask& mask) const;
  double readout_bias() const { return hgt_.readout_bias(); }

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& parameters() noexcept { return *store_; }
  const ParameterStore& parameters() const noexcept { return *store_; }
  const SpanExtractor& span() const noexcept { return span_; }
  const GraphBuilder& graph_builder() const noexcept { return graph_; }
  const HgtClassifier& hgt() const noexcept { return hgt_; }

  // Scalar parameter counts per component, keyed by report name.
  std::map<std::string, std::size_t> component_counts() const;

 private:
  ClassifierModel() = default;
  ModelConfig config_;
  std::unique_ptr<ParameterStore> store_;
  SpanExtractor span_;
  GraphBuilder graph_;
  HgtClassifier hgt_;
};

std::vector<double> predict_all(const ClassifierModel& model, std::span<const TokenSequence* const> docs);
ClassificationMetrics evaluate(const ClassifierModel& model, std::span<const TokenSequence* const> docs);

struct TrainConfig {
  std::size_t batch_size = 500;
  std::size_t epochs = 10;
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  double tau_start = 0.5;
  double tau_floor = 0.05;
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double tau = 0.0;
  double mean_loss = 0.0;
};

// Mean binary cross-entropy of a batch in train mode, recorded on the tape.
// Per-document streams derive from (seed, stream) so results do not depend
// on evaluation order.
ad::Var batch_loss(const ClassifierModel& model, std::span<const TokenSequence* const> batch, double tau, Rng& stream);

// End-to-end training; parameters are rounded to float32 at the end so the
// returned model equals its reloaded checkpoint.
std::vector<EpochLog> train_classifier(ClassifierModel& model, std::span<const TokenSequence* const> docs,
                                       const TrainConfig& config);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
};

// Stratified by label: each class contributes round(fraction * count) items
// (at least one when the class has two or more) to the held-out part.
Split stratified_split(std::span<const int> labels, double held_out_fraction, std::uint64_t seed);

}  // namespace cng
