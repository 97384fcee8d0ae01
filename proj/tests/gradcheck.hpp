#pragma once

// Central finite-difference oracle used by the gradient suites. Independent
// of the backward implementations it checks: it only evaluates forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cng/core/autograd.hpp"

namespace cng::testing {

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Compares backward() gradients of `loss_fn` with respect to `vars` against
// central differences (step h). Relative error per tensor is
// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10).
inline GradCheck gradient_check(std::vector<ad::Var> vars, const std::function<ad::Var()>& loss_fn,
                                double h = 1e-3) {
  for (auto& v : vars) v.zero_grad();
  ad::backward(loss_fn());
  GradCheck result;
  for (auto& v : vars) {
    const Tensor analytic = v.grad();
    Tensor numeric(v.value().shape());
    for (std::size_t i = 0; i < v.value().size(); ++i) {
      const double saved = v.value()[i];
      v.mutable_value()[i] = saved + h;
      const double up = loss_fn().value().item();
      v.mutable_value()[i] = saved - h;
      const double down = loss_fn().value().item();
      v.mutable_value()[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
    result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff) / denom);
    ++result.checked;
  }
  return result;
}

// Random projection to a scalar so every output component matters.
inline ad::Var project_to_scalar(const ad::Var& y, const Tensor& weights) {
  return ad::sum(ad::mul_const(y, weights));
}

}  // namespace cng::testing
