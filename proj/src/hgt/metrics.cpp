#include "cng/hgt/metrics.hpp"

#include <cmath>

#include "cng/core/errors.hpp"

namespace cng {

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion_matrix: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == 1, p = predicted[i] == 1;
    if (t && p) ++cm.tp;
    else if (!t && p) ++cm.fp;
    else if (t) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

namespace {
double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}
}  // namespace

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  m.confusion = cm;
  const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
  m.accuracy = cm.total() == 0 ? 0.0 : (tp + tn) / static_cast<double>(cm.total());
  m.f1_conspiracy = f1(cm.tp, cm.fp, cm.fn);
  m.f1_critical = f1(cm.tn, cm.fn, cm.fp);
  m.macro_f1 = 0.5 * (m.f1_conspiracy + m.f1_critical);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(denom);
  return m;
}

ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted) {
  return classification_metrics(confusion_matrix(truth, predicted));
}

nlohmann::json to_json(const ClassificationMetrics& m) {
  return {
      {"accuracy", m.accuracy},
      {"macro_f1", m.macro_f1},
      {"f1_conspiracy", m.f1_conspiracy},
      {"f1_critical", m.f1_critical},
      {"mcc", m.mcc},
      {"confusion_matrix",
       {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn}, {"fn", m.confusion.fn}}},
  };
}

}  // namespace cng
