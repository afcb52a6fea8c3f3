#include "gritnet/nn/adam.hpp"

#include <cmath>

namespace gritnet::nn {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.first.empty()) {
    for (const auto* p : params) {
      state.first.emplace_back(p->value.shape());
      state.second.emplace_back(p->value.shape());
    }
  }
  if (state.first.size() != params.size()) {
    fail(ErrorKind::shape, "adam_step: parameter list changed between steps");
  }
  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.learning_rate / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(cfg.epsilon);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter<T>& param = *params[p];
    if (!param.trainable) continue;
    auto& m = state.first[p];
    auto& v = state.second[p];
    if (!m.same_shape(param.value) || !param.grad.same_shape(param.value)) {
      fail(ErrorKind::shape, "adam_step: shape mismatch for '" + param.name + "'");
    }
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const T g = param.grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      param.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&);

}  // namespace gritnet::nn
