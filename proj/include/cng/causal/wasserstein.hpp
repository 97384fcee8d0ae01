#pragma once

#include <span>

#include "cng/core/autograd.hpp"

namespace cng {

// 1-Wasserstein distance between two empirical 1-D distributions with
// uniform weights, via the quantile functions: integral over u in (0,1) of
// |F_a^-1(u) - F_b^-1(u)|. Either side empty gives 0.
double wasserstein1_1d(std::span<const double> a, std::span<const double> b);

// Per-column W1 between the rows of `treated` and `control`, averaged over
// columns; [1 x 1]. The gradient follows the quantile matching. Either group
// empty returns 0 and logs a warning.
ad::Var wasserstein1(const ad::Var& treated, const ad::Var& control);

}  // namespace cng
