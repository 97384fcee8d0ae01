#pragma once

#include <cstddef>
#include <span>

#include <json.hpp>

namespace cng {

// Binary confusion matrix with conspiracy (label 1) as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double f1_conspiracy = 0.0;
  double f1_critical = 0.0;
  double macro_f1 = 0.0;
  double mcc = 0.0;
};

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted);
// F1 is 0 for a class that is neither present nor predicted; MCC is 0 when
// any marginal is empty.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);
ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted);

inline constexpr double kDecisionThreshold = 0.5;
// Conspiracy iff p > 0.5, i.e. a strictly positive logit.
inline int threshold_prediction(double probability) { return probability > kDecisionThreshold ? 1 : 0; }

nlohmann::json to_json(const ClassificationMetrics& m);

}  // namespace cng
