#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gritnet/nn/tensor.hpp"

namespace gritnet::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments are indexed by the position of each parameter in the span passed
/// to adam_step, so callers must pass parameters in a fixed order.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every trainable parameter. Frozen
/// parameters keep both their value and their moments.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state);

}  // namespace gritnet::nn
