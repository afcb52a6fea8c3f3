#include "gritnet/nn/ops.hpp"

#include <cmath>
#include <string>

namespace gritnet::nn {
namespace {

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::shape, what);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
  require(t.rank() == 2, what);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Exec exec) {
  require_matrix(a, "matmul: lhs must be rank 2");
  require_matrix(b, "matmul: rhs must be rank 2");
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  auto c = Tensor<T>::matrix(a.rows(), b.cols());
  kernels::gemm_nn(exec, a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data(), false);
  return c;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc,
                               Exec exec) {
  require(dc.rows() == a.rows() && dc.cols() == b.cols(), "matmul_backward: bad upstream shape");
  MatmulGrads<T> g{Tensor<T>::matrix(a.rows(), a.cols()), Tensor<T>::matrix(b.rows(), b.cols())};
  kernels::gemm_nt(exec, a.rows(), a.cols(), b.cols(), dc.data(), b.data(), g.da.data(), false);
  kernels::gemm_tn(exec, b.rows(), b.cols(), a.rows(), a.data(), dc.data(), g.db.data(), false);
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "add: shapes differ");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
Tensor<T> apply(Pointwise fn, const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = fn == Pointwise::sigmoid ? kernels::sigmoid(v) : std::tanh(v);
  return y;
}

template <typename T>
Tensor<T> apply_backward(Pointwise fn, const Tensor<T>& y, const Tensor<T>& dy) {
  require(y.same_shape(dy), "apply_backward: shapes differ");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T d = fn == Pointwise::sigmoid ? y[i] * (T{1} - y[i]) : T{1} - y[i] * y[i];
    dx[i] *= d;
  }
  return dx;
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "multiply: shapes differ");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> multiply_backward(const Tensor<T>& a, const Tensor<T>& b,
                                                  const Tensor<T>& dy) {
  return {multiply(dy, b), multiply(dy, a)};
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  require_matrix(a, "concat: lhs must be rank 2");
  require_matrix(b, "concat: rhs must be rank 2");
  if (axis == 0) {
    require(a.cols() == b.cols(), "concat axis 0: column counts differ");
    std::vector<T> values(a.values().begin(), a.values().end());
    values.insert(values.end(), b.values().begin(), b.values().end());
    return Tensor<T>({a.rows() + b.rows(), a.cols()}, std::move(values));
  }
  require(axis == 1, "concat: axis must be 0 or 1");
  require(a.rows() == b.rows(), "concat axis 1: row counts differ");
  auto out = Tensor<T>::matrix(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(),
              out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, std::size_t split,
                                                std::size_t axis) {
  require_matrix(dy, "concat_backward: gradient must be rank 2");
  if (axis == 0) {
    require(split <= dy.rows(), "concat_backward: split beyond rows");
    auto first = std::vector<T>(dy.values().begin(),
                                dy.values().begin() + static_cast<std::ptrdiff_t>(split * dy.cols()));
    auto second = std::vector<T>(
        dy.values().begin() + static_cast<std::ptrdiff_t>(split * dy.cols()), dy.values().end());
    return {Tensor<T>({split, dy.cols()}, std::move(first)),
            Tensor<T>({dy.rows() - split, dy.cols()}, std::move(second))};
  }
  require(axis == 1 && split <= dy.cols(), "concat_backward: bad split");
  auto first = Tensor<T>::matrix(dy.rows(), split);
  auto second = Tensor<T>::matrix(dy.rows(), dy.cols() - split);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    for (std::size_t c = 0; c < dy.cols(); ++c) {
      if (c < split) {
        first(r, c) = dy(r, c);
      } else {
        second(r, c - split) = dy(r, c);
      }
    }
  }
  return {std::move(first), std::move(second)};
}

template <typename T>
LstmCellOutput<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                            const LstmWeights<T>& w, Exec exec) {
  const std::size_t batch = x.rows();
  const std::size_t hidden = w.hidden();
  require(x.rank() == 2 && x.cols() == w.input(), "lstm_cell: input width does not match weights");
  require(h_prev.rows() == batch && h_prev.cols() == hidden, "lstm_cell: bad h_prev shape");
  require(c_prev.rows() == batch && c_prev.cols() == hidden, "lstm_cell: bad c_prev shape");
  require(w.wx.value.cols() == 4 * hidden && w.b.value.size() == 4 * hidden,
          "lstm_cell: inconsistent weight shapes");

  auto z = Tensor<T>::matrix(batch, 4 * hidden);
  kernels::gemm_nn(exec, batch, 4 * hidden, w.input(), x.data(), w.wx.value.data(), z.data(), false);
  kernels::gemm_nn(exec, batch, 4 * hidden, hidden, h_prev.data(), w.wh.value.data(), z.data(),
                   true);
  kernels::add_row_bias(exec, batch, 4 * hidden, w.b.value.data(), z.data());

  LstmCellOutput<T> out;
  out.h = Tensor<T>::matrix(batch, hidden);
  out.c = Tensor<T>::matrix(batch, hidden);
  out.cache.gates = Tensor<T>::matrix(batch, 4 * hidden);
  out.cache.tanh_c = Tensor<T>::matrix(batch, hidden);
  kernels::lstm_pointwise_forward(exec, batch, hidden, z.data(), c_prev.data(),
                                  out.cache.gates.data(), out.c.data(), out.cache.tanh_c.data(),
                                  out.h.data());
  out.cache.x = x;
  out.cache.h_prev = h_prev;
  out.cache.c_prev = c_prev;
  out.cache.c = out.c;
  return out;
}

template <typename T>
LstmCellGrads<T> lstm_cell_backward(const LstmCellCache<T>& cache, LstmWeights<T>& w,
                                    const Tensor<T>& dh, const Tensor<T>& dc, Exec exec) {
  const std::size_t batch = cache.x.rows();
  const std::size_t hidden = w.hidden();
  require(dh.rows() == batch && dh.cols() == hidden, "lstm_cell_backward: bad dh shape");
  require(dc.same_shape(dh), "lstm_cell_backward: bad dc shape");

  LstmCellGrads<T> g;
  g.dc_prev = dc;
  auto dz = Tensor<T>::matrix(batch, 4 * hidden);
  kernels::lstm_pointwise_backward(exec, batch, hidden, cache.gates.data(), cache.c_prev.data(),
                                   cache.tanh_c.data(), dh.data(), g.dc_prev.data(), dz.data());

  kernels::gemm_tn(exec, w.input(), 4 * hidden, batch, cache.x.data(), dz.data(),
                   w.wx.grad.data(), true);
  kernels::gemm_tn(exec, hidden, 4 * hidden, batch, cache.h_prev.data(), dz.data(),
                   w.wh.grad.data(), true);
  kernels::col_sum(exec, batch, 4 * hidden, dz.data(), w.b.grad.data(), true);

  g.dx = Tensor<T>::matrix(batch, w.input());
  g.dh_prev = Tensor<T>::matrix(batch, hidden);
  kernels::gemm_nt(exec, batch, w.input(), 4 * hidden, dz.data(), w.wx.value.data(), g.dx.data(),
                   false);
  kernels::gemm_nt(exec, batch, hidden, 4 * hidden, dz.data(), w.wh.value.data(),
                   g.dh_prev.data(), false);
  return g;
}

template <typename T>
MaxOverTime<T> max_over_time(const Tensor<T>& x) {
  require(x.rank() == 3, "max_over_time: input must be B x T x F");
  const std::size_t batch = x.dim(0), steps = x.dim(1), features = x.dim(2);
  require(steps >= 1, "max_over_time: T must be >= 1");
  MaxOverTime<T> out{Tensor<T>::matrix(batch, features), std::vector<std::uint32_t>(batch * features)};
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < features; ++f) {
      std::size_t best = 0;
      T best_v = x[(b * steps) * features + f];
      for (std::size_t t = 1; t < steps; ++t) {
        const T v = x[(b * steps + t) * features + f];
        if (v > best_v) {
          best_v = v;
          best = t;
        }
      }
      out.values(b, f) = best_v;
      out.argmax[b * features + f] = static_cast<std::uint32_t>(best);
    }
  }
  return out;
}

template <typename T>
Tensor<T> max_over_time_backward(const MaxOverTime<T>& pooled, const Tensor<T>& dy,
                                 std::size_t time_steps) {
  require(dy.same_shape(pooled.values), "max_over_time_backward: bad upstream shape");
  const std::size_t batch = dy.rows(), features = dy.cols();
  Tensor<T> dx({batch, time_steps, features});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < features; ++f) {
      const std::size_t t = pooled.argmax[b * features + f];
      dx[(b * time_steps + t) * features + f] += dy(b, f);
    }
  }
  return dx;
}

template <typename T>
T bce_with_logits(const Tensor<T>& logits, const std::vector<int>& labels) {
  require(logits.size() == labels.size() && !labels.empty(), "bce: size mismatch");
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T z = logits[i];
    // softplus(z) - y z, rearranged to avoid overflow
    total += std::max(z, T{0}) - z * static_cast<T>(labels[i]) + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<T>(labels.size());
}

template <typename T>
Tensor<T> bce_with_logits_backward(const Tensor<T>& logits, const std::vector<int>& labels) {
  require(logits.size() == labels.size() && !labels.empty(), "bce: size mismatch");
  Tensor<T> d(logits.shape());
  const T scale = T{1} / static_cast<T>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    d[i] = (kernels::sigmoid(logits[i]) - static_cast<T>(labels[i])) * scale;
  }
  return d;
}

template <typename T>
T bce_loss(const Tensor<T>& probs, const std::vector<int>& labels) {
  require(probs.size() == labels.size() && !labels.empty(), "bce: size mismatch");
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T p = probs[i];
    total -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<T>(labels.size());
}

#define GRITNET_INSTANTIATE(T)                                                                   \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, Exec);                        \
  template MatmulGrads<T> matmul_backward<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                             const Tensor<T>&, Exec);                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> apply<T>(Pointwise, const Tensor<T>&);                                      \
  template Tensor<T> apply_backward<T>(Pointwise, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> multiply<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template std::pair<Tensor<T>, Tensor<T>> multiply_backward<T>(                                 \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, std::size_t);                 \
  template std::pair<Tensor<T>, Tensor<T>> concat_backward<T>(const Tensor<T>&, std::size_t,     \
                                                              std::size_t);                      \
  template LstmCellOutput<T> lstm_cell<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                          const LstmWeights<T>&, Exec);                          \
  template LstmCellGrads<T> lstm_cell_backward<T>(const LstmCellCache<T>&, LstmWeights<T>&,      \
                                                  const Tensor<T>&, const Tensor<T>&, Exec);     \
  template MaxOverTime<T> max_over_time<T>(const Tensor<T>&);                                    \
  template Tensor<T> max_over_time_backward<T>(const MaxOverTime<T>&, const Tensor<T>&,          \
                                               std::size_t);                                     \
  template T bce_with_logits<T>(const Tensor<T>&, const std::vector<int>&);                      \
  template Tensor<T> bce_with_logits_backward<T>(const Tensor<T>&, const std::vector<int>&);     \
  template T bce_loss<T>(const Tensor<T>&, const std::vector<int>&);

GRITNET_INSTANTIATE(float)
GRITNET_INSTANTIATE(double)
#undef GRITNET_INSTANTIATE

}  // namespace gritnet::nn
