#include "cng/core/optim.hpp"

#include <cmath>

#include "cng/core/errors.hpp"

namespace cng {

void adamw_update(Tensor& param, const Tensor& grad, MomentPair& moments, std::uint64_t step,
                  const AdamWOptions& o) {
  if (grad.shape() != param.shape()) {
    throw DimensionError("adamw: gradient " + shape_string(grad.shape()) + " vs parameter " +
                         shape_string(param.shape()));
  }
  if (moments.first.shape() != param.shape()) moments.first = Tensor(param.shape());
  if (moments.second.shape() != param.shape()) moments.second = Tensor(param.shape());
  if (o.learning_rate <= 0.0) throw ParameterError("adamw: learning rate must be positive");

  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= o.learning_rate * o.weight_decay * param[i];
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = o.beta1 * m + (1.0 - o.beta1) * grad[i];
    v = o.beta2 * v + (1.0 - o.beta2) * grad[i] * grad[i];
    param[i] -= o.learning_rate * (m / c1) / (std::sqrt(v / c2) + o.eps);
  }
  if (!param.all_finite()) throw NumericError("adamw", "parameter update produced NaN/Inf");
}

AdamW::AdamW(std::vector<ad::Var> params, AdamWOptions options)
    : params_(std::move(params)), moments_(params_.size()), options_(options) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moments_[i].first = Tensor(params_[i].value().shape());
    moments_[i].second = Tensor(params_[i].value().shape());
  }
}

void AdamW::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adamw_update(params_[i].mutable_value(), params_[i].grad(), moments_[i], step_, options_);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace cng
