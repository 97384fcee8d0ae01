#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cng/core/autograd.hpp"
#include "cng/core/layers.hpp"
#include "cng/embedding/corpus.hpp"

namespace cng {

struct SpanConfig {
  std::size_t embedding_dim = 768;
  std::size_t max_span_width = 5;
  std::size_t num_span_type = 4;
  std::size_t entity_dim = 16;

  std::size_t num_classes() const noexcept { return num_span_type + 1; }
  // The null ("no span") class is the last index.
  int null_class() const noexcept { return static_cast<int>(num_span_type); }
};

// Half-open window [begin, end) over the selection sequence T = (cls, h_1,
// ..., h_{L-1}) plus the width slot k used to look up W(k). When the window
// is clipped at the sequence end, end - begin can be smaller than k.
struct SpanWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width_slot = 0;
  friend bool operator==(const SpanWindow&, const SpanWindow&) = default;
};

struct SelectionStep {
  std::ptrdiff_t i = 0;
  std::ptrdiff_t k = 0;
  bool accepted = false;
  friend bool operator==(const SelectionStep&, const SelectionStep&) = default;
};

struct VertexSelection {
  std::vector<SpanWindow> windows;  // accepted, in emission order
  std::vector<int> classes;         // non-null class of each accepted window
  std::vector<SelectionStep> trace;
};

// Returns the predicted class of a window, or nullopt for the null class.
using SpanDecision = std::function<std::optional<int>(const SpanWindow&)>;

// Greedy vertex-selection loop over a sequence of `sequence_length`
// positions (position 0 is the sentence vector), widest spans first.
VertexSelection run_vertex_selection(std::size_t sequence_length, std::size_t max_width, const SpanDecision& decide);

struct SpanCandidate {
  std::size_t start = 0;  // token index (0-based, cls excluded)
  std::size_t width = 0;
  Tensor representation;  // [1 x 3D]: cls | max-pool | W(width)
};

struct EntityVertex {
  std::size_t start = 0;   // first token (0-based, cls excluded)
  std::size_t length = 0;  // tokens covered
  std::size_t width_slot = 0;
  int type = 0;
  Tensor embedding;  // [1 x entity_dim]
};

struct ExtractedEntities {
  ad::Var embeddings;  // [n x entity_dim]
  std::vector<EntityVertex> vertices;
};

class SpanExtractor {
 public:
  static SpanExtractor create(ParameterStore& store, const SpanConfig& config, Rng& rng);

  const SpanConfig& config() const noexcept { return config_; }

  SpanCandidate span_representation(const TokenSequence& seq, std::size_t start, std::size_t width) const;
  // Argmax over the class logits; lowest index wins ties.
  int classify_span(const SpanCandidate& candidate) const;
  Tensor class_logits(const Tensor& representation) const;
  // Affine map of cls | (pool + type embedding) to entity_dim.
  Tensor project_entity(std::span<const double> pooled, std::span<const double> cls, int type) const;

  // Vertex selection driven by the span classifier; embeddings are recorded
  // on the tape so the classifier, tables and projector receive gradients.
  ExtractedEntities extract(const TokenSequence& seq) const;
  std::vector<EntityVertex> select_vertices(const TokenSequence& seq) const;

  ad::Var width_table;  // [(K + 1) x D]
  ad::Var type_table;   // [(N + 1) x D]
  Linear classifier;    // 3D -> N + 1
  Linear projector;     // 2D -> entity_dim

 private:
  Tensor window_representation(const Tensor& sequence, const SpanWindow& w) const;
  SpanConfig config_;
};

// Stacks cls and tokens into the selection sequence [(L + 1) x D].
Tensor selection_sequence(const TokenSequence& seq);

}  // namespace cng
