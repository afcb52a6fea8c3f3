#pragma once

#include <cstddef>

namespace gritnet::nn {

/// Execution policy for the dense kernels. Both policies run the same per-row
/// routine in the same order, so their results are bit-identical; `serial` is
/// the reference used in tests and by the benchmark.
enum class Exec { serial, parallel };

void set_num_threads(int threads);
int num_threads();

namespace kernels {

// All matrices are dense row-major.

/// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[m x n] (+)= A^T * B with A stored [k x m], B stored [k x n]
template <typename T>
void gemm_tn(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[m x n] (+)= A * B^T with A stored [m x k], B stored [n x k]
template <typename T>
void gemm_nt(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

/// out[c] (+)= sum_r a[r, c], summed in row order.
template <typename T>
void col_sum(Exec exec, std::size_t rows, std::size_t cols, const T* a, T* out, bool accumulate);

/// Adds bias[n] to every row of a[m x n].
template <typename T>
void add_row_bias(Exec exec, std::size_t m, std::size_t n, const T* bias, T* a);

template <typename T>
T sigmoid(T x);

/// LSTM pointwise step. `z` holds B x 4H pre-activations in gate order
/// [input, forget, output, candidate]; `gates` receives the activations.
template <typename T>
void lstm_pointwise_forward(Exec exec, std::size_t batch, std::size_t hidden, const T* z,
                            const T* c_prev, T* gates, T* c, T* tanh_c, T* h);

/// Reverse of lstm_pointwise_forward. `dc` enters holding the gradient from the
/// following step and leaves holding the gradient w.r.t. c_prev.
template <typename T>
void lstm_pointwise_backward(Exec exec, std::size_t batch, std::size_t hidden, const T* gates,
                             const T* c_prev, const T* tanh_c, const T* dh, T* dc, T* dz);

}  // namespace kernels
}  // namespace gritnet::nn
