#pragma once

#include <cmath>
#include <vector>

#include "deepma/autodiff.hpp"

namespace deepma {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers, one pair per parameter in registration order.
template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> first;
  std::vector<Tensor<Scalar>> second;
  long step = 0;
};

// One bias-corrected Adam update over `params`, reading Parameter::grad.
template <typename Scalar>
void adam_step(const std::vector<Parameter<Scalar>*>& params, AdamState<Scalar>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (state.first.empty()) {
    for (const auto* p : params) {
      state.first.emplace_back(p->value.shape());
      state.second.emplace_back(p->value.shape());
    }
  }
  if (state.first.size() != params.size()) {
    throw ContractViolation("adam_step: optimizer state tracks " +
                            std::to_string(state.first.size()) + " parameters, got " +
                            std::to_string(params.size()));
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto correction1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, double(state.step)));
  const auto correction2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, double(state.step)));
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  const auto rate = static_cast<Scalar>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& g = params[i]->grad.data();
    auto& m = state.first[i].data();
    auto& v = state.second[i].data();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->value.data() -=
        rate * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

}  // namespace deepma
