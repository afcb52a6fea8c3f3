#pragma once

#include <cstdint>
#include <vector>

#include "gritnet/nn/kernels.hpp"
#include "gritnet/nn/tensor.hpp"

// Differentiable operations used by the model. Every forward op has a paired
// backward that maps the upstream gradient to operand gradients.

namespace gritnet::nn {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Exec exec = Exec::serial);
template <typename T>
struct MatmulGrads {
  Tensor<T> da, db;
};
template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc,
                               Exec exec = Exec::serial);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

enum class Pointwise { sigmoid, tanh };
template <typename T>
Tensor<T> apply(Pointwise fn, const Tensor<T>& x);
/// Takes the forward output `y` (both derivatives are functions of it).
template <typename T>
Tensor<T> apply_backward(Pointwise fn, const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> multiply_backward(const Tensor<T>& a, const Tensor<T>& b,
                                                  const Tensor<T>& dy);

/// Concatenates two rank-2 tensors along axis 0 or 1.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, std::size_t split,
                                                std::size_t axis);

// ---- LSTM cell ------------------------------------------------------------

/// Gate blocks are laid out [input, forget, output, candidate] along the 4H axis.
template <typename T>
struct LstmWeights {
  Parameter<T> wx;  // in x 4H
  Parameter<T> wh;  // H x 4H
  Parameter<T> b;   // 4H

  std::size_t hidden() const { return wh.value.rows(); }
  std::size_t input() const { return wx.value.rows(); }
};

template <typename T>
struct LstmCellCache {
  Tensor<T> x, h_prev, c_prev;
  Tensor<T> gates, c, tanh_c;
};

template <typename T>
struct LstmCellOutput {
  Tensor<T> h, c;
  LstmCellCache<T> cache;
};

/// x: B x in, h_prev/c_prev: B x H.
template <typename T>
LstmCellOutput<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                            const LstmWeights<T>& w, Exec exec = Exec::serial);

template <typename T>
struct LstmCellGrads {
  Tensor<T> dx, dh_prev, dc_prev;
};

/// Accumulates weight gradients into w.*.grad.
template <typename T>
LstmCellGrads<T> lstm_cell_backward(const LstmCellCache<T>& cache, LstmWeights<T>& w,
                                    const Tensor<T>& dh, const Tensor<T>& dc,
                                    Exec exec = Exec::serial);

// ---- pooling and loss -------------------------------------------------------

template <typename T>
struct MaxOverTime {
  Tensor<T> values;                  // B x F
  std::vector<std::uint32_t> argmax;  // B x F time indices, earliest on ties
};

/// x: B x T x F.
template <typename T>
MaxOverTime<T> max_over_time(const Tensor<T>& x);
template <typename T>
Tensor<T> max_over_time_backward(const MaxOverTime<T>& pooled, const Tensor<T>& dy,
                                 std::size_t time_steps);

/// Mean binary cross-entropy evaluated from logits in a numerically stable form.
template <typename T>
T bce_with_logits(const Tensor<T>& logits, const std::vector<int>& labels);
/// d(mean BCE)/d(logits) = (sigmoid(z) - y) / B
template <typename T>
Tensor<T> bce_with_logits_backward(const Tensor<T>& logits, const std::vector<int>& labels);

/// Mean BCE on probabilities, for callers that only hold p.
template <typename T>
T bce_loss(const Tensor<T>& probs, const std::vector<int>& labels);

}  // namespace gritnet::nn
