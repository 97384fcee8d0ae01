#include "cng/span/span_extractor.hpp"

#include <algorithm>

#include "cng/core/errors.hpp"

namespace cng {

VertexSelection run_vertex_selection(std::size_t sequence_length, std::size_t max_width, const SpanDecision& decide) {
  using index = std::ptrdiff_t;
  const index L = static_cast<index>(sequence_length);
  const index K = static_cast<index>(max_width);
  VertexSelection out;
  index i = 1;
  index k = K;
  while (k >= 1) {
    if (i == L) return out;
    const SpanWindow window{static_cast<std::size_t>(i), static_cast<std::size_t>(std::min(i + k, L)),
                            static_cast<std::size_t>(k)};
    const std::optional<int> cls = decide(window);
    out.trace.push_back({i, k, cls.has_value()});
    if (cls) {
      out.windows.push_back(window);
      out.classes.push_back(*cls);
      if (L - (i + k) < k) {
        k = L - (i + k);
        i = L - k;
      } else if (out.windows.empty() && K > 1) {
        // Unreachable right after an append; kept so traces match step for step.
        k = k - 1;
        i = 0;
      } else {
        i = i + k;
      }
    } else {
      if (i + k >= L) {
        k = L - (i + 1);
      } else {
        i = i + 1;
      }
    }
  }
  return out;
}

Tensor selection_sequence(const TokenSequence& seq) {
  const std::size_t d = seq.width();
  const std::size_t n = seq.length();
  Tensor t({n + 1, d});
  std::copy(seq.cls.begin(), seq.cls.end(), t.values().begin());
  if (n) std::copy(seq.tokens.values().begin(), seq.tokens.values().end(), t.values().begin() + d);
  return t;
}

SpanExtractor SpanExtractor::create(ParameterStore& store, const SpanConfig& config, Rng& rng) {
  if (config.max_span_width < 1) throw ParameterError("max_span_width must be at least 1");
  if (config.num_span_type < 1) throw ParameterError("num_span_type must be at least 1");
  SpanExtractor s;
  s.config_ = config;
  const std::size_t d = config.embedding_dim;
  s.width_table = store.add("span.width_embeddings", normal_tensor(config.max_span_width + 1, d, 0.02, rng));
  s.type_table = store.add("span.type_embeddings", normal_tensor(config.num_classes(), d, 0.02, rng));
  s.classifier = Linear::create(store, "span.classifier", 3 * d, config.num_classes(), rng);
  s.projector = Linear::create(store, "span.projector", 2 * d, config.entity_dim, rng);
  return s;
}

Tensor SpanExtractor::window_representation(const Tensor& sequence, const SpanWindow& w) const {
  const std::size_t d = config_.embedding_dim;
  Tensor rep({1, 3 * d});
  for (std::size_t c = 0; c < d; ++c) {
    rep(0, c) = sequence(0, c);
    double m = sequence(w.begin, c);
    for (std::size_t r = w.begin + 1; r < w.end; ++r) m = std::max(m, sequence(r, c));
    rep(0, d + c) = m;
    rep(0, 2 * d + c) = width_table.value()(w.width_slot, c);
  }
  return rep;
}

SpanCandidate SpanExtractor::span_representation(const TokenSequence& seq, std::size_t start, std::size_t width) const {
  if (seq.width() != config_.embedding_dim) {
    throw DimensionError("span_representation: sequence width " + std::to_string(seq.width()) +
                         " differs from extractor width " + std::to_string(config_.embedding_dim));
  }
  if (width < 1 || width > config_.max_span_width || start + width > seq.length()) {
    throw IndexError("span (start " + std::to_string(start) + ", width " + std::to_string(width) +
                     ") out of range for length " + std::to_string(seq.length()));
  }
  const Tensor sequence = selection_sequence(seq);
  return {start, width, window_representation(sequence, {start + 1, start + 1 + width, width})};
}

Tensor SpanExtractor::class_logits(const Tensor& representation) const {
  require_shape(representation, 1, 3 * config_.embedding_dim, "classify_span");
  Tensor logits = ad::matmul(representation, classifier.weight.value());
  for (std::size_t c = 0; c < logits.cols(); ++c) logits(0, c) += classifier.bias.value()(0, c);
  return logits;
}

namespace {
int argmax_lowest(const Tensor& logits) {
  int best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c)
    if (logits(0, c) > logits(0, static_cast<std::size_t>(best))) best = static_cast<int>(c);
  return best;
}
}  // namespace

int SpanExtractor::classify_span(const SpanCandidate& candidate) const {
  return argmax_lowest(class_logits(candidate.representation));
}

Tensor SpanExtractor::project_entity(std::span<const double> pooled, std::span<const double> cls, int type) const {
  const std::size_t d = config_.embedding_dim;
  if (type < 0 || type >= config_.null_class()) throw IndexError("project_entity: type must be a non-null class");
  if (pooled.size() != d || cls.size() != d) throw DimensionError("project_entity: inputs must have width D");
  Tensor in({1, 2 * d});
  for (std::size_t c = 0; c < d; ++c) {
    in(0, c) = cls[c];
    in(0, d + c) = pooled[c] + type_table.value()(static_cast<std::size_t>(type), c);
  }
  Tensor out = ad::matmul(in, projector.weight.value());
  for (std::size_t c = 0; c < out.cols(); ++c) out(0, c) += projector.bias.value()(0, c);
  return out;
}

ExtractedEntities SpanExtractor::extract(const TokenSequence& seq) const {
  const std::size_t d = config_.embedding_dim;
  if (seq.width() != d) {
    throw DimensionError("extract: sequence width " + std::to_string(seq.width()) + " differs from extractor width " +
                         std::to_string(d));
  }
  const Tensor sequence = selection_sequence(seq);
  const int null_class = config_.null_class();
  std::vector<Tensor> reps;
  VertexSelection sel = run_vertex_selection(sequence.rows(), config_.max_span_width,
                                             [&](const SpanWindow& w) -> std::optional<int> {
                                               Tensor rep = window_representation(sequence, w);
                                               const int cls = argmax_lowest(class_logits(rep));
                                               if (cls == null_class) return std::nullopt;
                                               reps.push_back(std::move(rep));
                                               return cls;
                                             });
  // `reps` holds every accepted representation in emission order.
  const std::size_t n = sel.windows.size();
  ExtractedEntities out;
  if (n == 0) {
    out.embeddings = ad::Var::constant(Tensor({0, config_.entity_dim}));
    return out;
  }

  Tensor cls_rows({n, d}), pool_rows({n, d}), one_hot({n, config_.num_classes()});
  std::vector<std::size_t> slots(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      cls_rows(r, c) = reps[r](0, c);
      pool_rows(r, c) = reps[r](0, d + c);
    }
    slots[r] = sel.windows[r].width_slot;
    one_hot(r, static_cast<std::size_t>(sel.classes[r])) = 1.0;
  }
  const ad::Var cls_v = ad::Var::constant(std::move(cls_rows));
  const ad::Var pool_v = ad::Var::constant(std::move(pool_rows));
  const ad::Var rep = ad::concat_cols({cls_v, pool_v, ad::gather_rows(width_table, slots)});
  const ad::Var probs = ad::softmax_rows(classifier(rep));
  // Forward uses the argmax type; gradients reach the classifier via softmax.
  const ad::Var type_vec = ad::matmul(ad::straight_through(std::move(one_hot), probs), type_table);
  out.embeddings = projector(ad::concat_cols({cls_v, ad::add(pool_v, type_vec)}));

  out.vertices.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& w = sel.windows[r];
    EntityVertex v;
    v.start = w.begin == 0 ? 0 : w.begin - 1;
    v.length = w.end - w.begin;
    v.width_slot = w.width_slot;
    v.type = sel.classes[r];
    v.embedding = Tensor::row_vector(out.embeddings.value().row(r));
    out.vertices.push_back(std::move(v));
  }
  return out;
}

std::vector<EntityVertex> SpanExtractor::select_vertices(const TokenSequence& seq) const {
  ad::NoGradGuard no_grad;
  return extract(seq).vertices;
}

}  // namespace cng
