#pragma once

#include <cstdint>
#include <vector>

#include "cng/core/autograd.hpp"

namespace cng {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MomentPair {
  Tensor first;
  Tensor second;
};

// Single decoupled-weight-decay update of one tensor; `step` is the 1-based
// step index used for bias correction.
void adamw_update(Tensor& param, const Tensor& grad, MomentPair& moments, std::uint64_t step,
                  const AdamWOptions& options);

class AdamW {
 public:
  AdamW(std::vector<ad::Var> params, AdamWOptions options);

  // Applies one update from the gradients currently accumulated on the
  // parameters. Does not clear them.
  void step();
  void zero_grad();

  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<MomentPair>& moments() const noexcept { return moments_; }
  const AdamWOptions& options() const noexcept { return options_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<MomentPair> moments_;
  AdamWOptions options_;
  std::uint64_t step_ = 0;
};

}  // namespace cng
