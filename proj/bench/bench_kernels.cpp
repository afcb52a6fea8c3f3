#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gritnet/model.hpp"
#include "gritnet/nn/kernels.hpp"

using namespace gritnet;
namespace k = gritnet::nn::kernels;

namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

// Input projection of a batch: (B*T) x E times E x 4H.
void BM_GemmNN(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(1)), n = 128, kk = 64;
  const auto a = random_vector(m * kk, 1), b = random_vector(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    k::gemm_nn(exec_of(state), m, n, kk, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * n * kk));
}
BENCHMARK(BM_GemmNN)->ArgsProduct({{0, 1}, {512, 4096}});

// Weight gradient: sum over time steps of x^T dz.
void BM_GemmTN(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(1)), m = 64, n = 128;
  const auto a = random_vector(rows * m, 3), b = random_vector(rows * n, 4);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    k::gemm_tn(exec_of(state), m, n, rows, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_GemmTN)->ArgsProduct({{0, 1}, {512, 4096}});

void BM_LstmPointwise(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(1)), hidden = 32;
  const auto z = random_vector(batch * 4 * hidden, 5), c_prev = random_vector(batch * hidden, 6);
  std::vector<float> gates(batch * 4 * hidden), c(batch * hidden), tanh_c(batch * hidden), h(batch * hidden);
  for (auto _ : state) {
    k::lstm_pointwise_forward(exec_of(state), batch, hidden, z.data(), c_prev.data(), gates.data(), c.data(),
                              tanh_c.data(), h.data());
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_LstmPointwise)->ArgsProduct({{0, 1}, {32, 256}});

// Whole model: forward and backward on one padded batch.
void BM_LossAndGradients(benchmark::State& state) {
  const CourseSchema schema{471, 168, 4, 30};
  auto model = make_model<float>(GritNetConfig::for_schema(schema, 64, 32, 1), schema, 100);
  std::mt19937_64 rng(7);
  std::vector<TokenizedSequence> seqs(32);
  std::vector<int> labels;
  for (auto& s : seqs) {
    const std::size_t len = 20 + rng() % 80;
    for (std::size_t t = 0; t < len; ++t) {
      s.tokens.push_back({static_cast<std::int32_t>(rng() % 815), static_cast<std::int32_t>(rng() % 31)});
      s.days.push_back(static_cast<Day>(t));
    }
    labels.push_back(static_cast<int>(rng() % 2));
  }
  const auto batch = pad_batch(seqs, 100);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(model, batch, labels, exec_of(state)));
}
BENCHMARK(BM_LossAndGradients)->Args({0, 0})->Args({1, 0})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
