#include "gritnet/nn/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace gritnet::nn {

void set_num_threads(int threads) { omp_set_num_threads(std::max(1, threads)); }
int num_threads() { return omp_get_max_threads(); }

namespace kernels {
namespace {

// Below this many multiply-adds the parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

// The row routines are kept out of line so the serial and parallel drivers
// execute identical machine code.
template <typename T>
[[gnu::noinline]] void row_nn(std::size_t n, std::size_t k, const T* a_row, const T* b, T* c_row,
                              bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, T{0});
  for (std::size_t p = 0; p < k; ++p) {
    const T s = a_row[p];
    const T* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
  }
}

template <typename T>
[[gnu::noinline]] void row_tn(std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                              const T* a, const T* b, T* c_row, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, T{0});
  for (std::size_t p = 0; p < k; ++p) {
    const T s = a[p * m + i];
    if (s == T{0}) continue;
    const T* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
  }
}

template <typename T>
[[gnu::noinline]] void row_nt(std::size_t n, std::size_t k, const T* a_row, const T* b, T* c_row,
                              bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const T* b_row = b + j * k;
    T acc{0};
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = accumulate ? c_row[j] + acc : acc;
  }
}

template <typename T>
[[gnu::noinline]] void lstm_row_forward(std::size_t hidden, const T* z, const T* c_prev, T* gates,
                                        T* c, T* tanh_c, T* h) {
  const T* zi = z;
  const T* zf = z + hidden;
  const T* zo = z + 2 * hidden;
  const T* zg = z + 3 * hidden;
  T* gi = gates;
  T* gf = gates + hidden;
  T* go = gates + 2 * hidden;
  T* gg = gates + 3 * hidden;
  for (std::size_t u = 0; u < hidden; ++u) {
    gi[u] = sigmoid(zi[u]);
    gf[u] = sigmoid(zf[u]);
    go[u] = sigmoid(zo[u]);
    gg[u] = std::tanh(zg[u]);
    c[u] = gf[u] * c_prev[u] + gi[u] * gg[u];
    tanh_c[u] = std::tanh(c[u]);
    h[u] = go[u] * tanh_c[u];
  }
}

template <typename T>
[[gnu::noinline]] void lstm_row_backward(std::size_t hidden, const T* gates, const T* c_prev,
                                         const T* tanh_c, const T* dh, T* dc, T* dz) {
  const T* gi = gates;
  const T* gf = gates + hidden;
  const T* go = gates + 2 * hidden;
  const T* gg = gates + 3 * hidden;
  for (std::size_t u = 0; u < hidden; ++u) {
    const T dc_total = dh[u] * go[u] * (T{1} - tanh_c[u] * tanh_c[u]) + dc[u];
    const T d_o = dh[u] * tanh_c[u];
    const T d_i = dc_total * gg[u];
    const T d_g = dc_total * gi[u];
    const T d_f = dc_total * c_prev[u];
    dz[u] = d_i * gi[u] * (T{1} - gi[u]);
    dz[hidden + u] = d_f * gf[u] * (T{1} - gf[u]);
    dz[2 * hidden + u] = d_o * go[u] * (T{1} - go[u]);
    dz[3 * hidden + u] = d_g * (T{1} - gg[u] * gg[u]);
    dc[u] = dc_total * gf[u];
  }
}

bool go_parallel(Exec exec, std::size_t work) {
  return exec == Exec::parallel && work >= kParallelWork && omp_get_max_threads() > 1;
}

}  // namespace

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
void gemm_nn(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    row_nn(n, k, a + i * static_cast<std::ptrdiff_t>(k), b, c + i * static_cast<std::ptrdiff_t>(n),
           accumulate);
  }
}

template <typename T>
void gemm_tn(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    row_tn(static_cast<std::size_t>(i), m, n, k, a, b, c + i * static_cast<std::ptrdiff_t>(n),
           accumulate);
  }
}

template <typename T>
void gemm_nt(Exec exec, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    row_nt(n, k, a + i * static_cast<std::ptrdiff_t>(k), b, c + i * static_cast<std::ptrdiff_t>(n),
           accumulate);
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

template <typename T>
void col_sum(Exec exec, std::size_t rows, std::size_t cols, const T* a, T* out, bool accumulate) {
  const auto ncols = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static) if (go_parallel(exec, rows * cols))
  for (std::ptrdiff_t c = 0; c < ncols; ++c) {
    T acc = accumulate ? out[c] : T{0};
    for (std::size_t r = 0; r < rows; ++r) acc += a[r * cols + static_cast<std::size_t>(c)];
    out[c] = acc;
  }
}

template <typename T>
void add_row_bias(Exec exec, std::size_t m, std::size_t n, const T* bias, T* a) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    T* row = a + i * static_cast<std::ptrdiff_t>(n);
    for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
  }
}

template <typename T>
void lstm_pointwise_forward(Exec exec, std::size_t batch, std::size_t hidden, const T* z,
                            const T* c_prev, T* gates, T* c, T* tanh_c, T* h) {
  const auto rows = static_cast<std::ptrdiff_t>(batch);
  const auto H = static_cast<std::ptrdiff_t>(hidden);
#pragma omp parallel for schedule(static) if (go_parallel(exec, 64 * batch * hidden))
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    lstm_row_forward(hidden, z + b * 4 * H, c_prev + b * H, gates + b * 4 * H, c + b * H,
                     tanh_c + b * H, h + b * H);
  }
}

template <typename T>
void lstm_pointwise_backward(Exec exec, std::size_t batch, std::size_t hidden, const T* gates,
                             const T* c_prev, const T* tanh_c, const T* dh, T* dc, T* dz) {
  const auto rows = static_cast<std::ptrdiff_t>(batch);
  const auto H = static_cast<std::ptrdiff_t>(hidden);
#pragma omp parallel for schedule(static) if (go_parallel(exec, 64 * batch * hidden))
  for (std::ptrdiff_t b = 0; b < rows; ++b) {
    lstm_row_backward(hidden, gates + b * 4 * H, c_prev + b * H, tanh_c + b * H, dh + b * H,
                      dc + b * H, dz + b * 4 * H);
  }
}

#define GRITNET_INSTANTIATE(T)                                                                  \
  template T sigmoid<T>(T);                                                                     \
  template void gemm_nn<T>(Exec, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                           bool);                                                               \
  template void gemm_tn<T>(Exec, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                           bool);                                                               \
  template void gemm_nt<T>(Exec, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, \
                           bool);                                                               \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);                           \
  template void col_sum<T>(Exec, std::size_t, std::size_t, const T*, T*, bool);                 \
  template void add_row_bias<T>(Exec, std::size_t, std::size_t, const T*, T*);                  \
  template void lstm_pointwise_forward<T>(Exec, std::size_t, std::size_t, const T*, const T*,   \
                                          T*, T*, T*, T*);                                      \
  template void lstm_pointwise_backward<T>(Exec, std::size_t, std::size_t, const T*, const T*,  \
                                           const T*, const T*, T*, T*);

GRITNET_INSTANTIATE(float)
GRITNET_INSTANTIATE(double)
#undef GRITNET_INSTANTIATE

}  // namespace kernels
}  // namespace gritnet::nn
