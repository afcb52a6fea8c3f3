#include "gritnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gritnet/random.hpp"

namespace gritnet {

namespace kernels = nn::kernels;

void GritNetConfig::validate() const {
  if (vocab_size < 1 || delta_buckets < 1 || embedding_dim < 1 || hidden_dim < 1) {
    fail(ErrorKind::config, "model dimensions must all be >= 1");
  }
}

GritNetConfig GritNetConfig::for_schema(const CourseSchema& schema, std::uint32_t embedding_dim,
                                        std::uint32_t hidden_dim, std::uint64_t seed) {
  GritNetConfig c;
  c.vocab_size = static_cast<std::uint32_t>(gritnet::vocab_size(schema));
  c.delta_buckets = schema.delta_cap + 1;
  c.embedding_dim = embedding_dim;
  c.hidden_dim = hidden_dim;
  c.seed = seed;
  return c;
}

template <typename T>
std::vector<Parameter<T>*> GritNetParams<T>::all() {
  return {&embedding, &forward.wx, &forward.wh, &forward.b,
          &backward.wx, &backward.wh, &backward.b, &fc_w, &fc_b};
}

template <typename T>
std::vector<const Parameter<T>*> GritNetParams<T>::all() const {
  return {&embedding, &forward.wx, &forward.wh, &forward.b,
          &backward.wx, &backward.wh, &backward.b, &fc_w, &fc_b};
}

template <typename T>
void GritNetParams<T>::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

template <typename T>
void GritNetParams<T>::freeze_all_but_fc() {
  for (auto* p : all()) p->trainable = false;
  fc_w.trainable = true;
  fc_b.trainable = true;
}

template <typename T>
void GritNetParams<T>::unfreeze() {
  for (auto* p : all()) p->trainable = true;
}

namespace {

template <typename T>
void glorot(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<T>(uniform(rng, -limit, limit));
}

template <typename T>
nn::LstmWeights<T> make_lstm(const std::string& prefix, std::size_t input, std::size_t hidden,
                             Rng& rng) {
  nn::LstmWeights<T> w{
      Parameter<T>(prefix + ".wx", Tensor<T>::matrix(input, 4 * hidden)),
      Parameter<T>(prefix + ".wh", Tensor<T>::matrix(hidden, 4 * hidden)),
      Parameter<T>(prefix + ".b", Tensor<T>::vector(4 * hidden)),
  };
  glorot(w.wx.value, input, 4 * hidden, rng);
  glorot(w.wh.value, hidden, 4 * hidden, rng);
  for (std::size_t u = 0; u < hidden; ++u) w.b.value[hidden + u] = T{1};
  return w;
}

}  // namespace

template <typename T>
GritNetModel<T> make_model(const GritNetConfig& config, const CourseSchema& schema,
                           std::size_t t_max) {
  config.validate();
  schema.validate();
  if (config.vocab_size != vocab_size(schema) || config.delta_buckets != schema.delta_cap + 1) {
    fail(ErrorKind::schema_mismatch, "model config does not match the course schema");
  }
  if (t_max < 1) fail(ErrorKind::config, "t_max must be >= 1");
  Rng rng(derive_seed(config.seed, 0x6d6f64656cULL));
  const std::size_t E = config.embedding_dim, H = config.hidden_dim, O = config.input_size();

  GritNetModel<T> m;
  m.config = config;
  m.schema = schema;
  m.t_max = t_max;
  m.params.embedding = Parameter<T>("embedding", Tensor<T>::matrix(O, E));
  glorot(m.params.embedding.value, O, E, rng);
  m.params.forward = make_lstm<T>("lstm_fwd", E, H, rng);
  m.params.backward = make_lstm<T>("lstm_bwd", E, H, rng);
  m.params.fc_w = Parameter<T>("fc.w", Tensor<T>::vector(2 * H));
  glorot(m.params.fc_w.value, 2 * H, 1, rng);
  m.params.fc_b = Parameter<T>("fc.b", Tensor<T>::vector(1));
  return m;
}

template <typename T>
std::vector<T> embed_lookup(const GritNetParams<T>& params, const GritNetConfig& config,
                            const Token& token) {
  const std::size_t E = config.embedding_dim;
  std::vector<T> out(E, T{0});
  if (token.action == kPaddingToken) return out;
  if (token.action < 0 || static_cast<std::uint32_t>(token.action) >= config.vocab_size ||
      token.delta < 0 || static_cast<std::uint32_t>(token.delta) >= config.delta_buckets) {
    fail(ErrorKind::vocabulary, "token (" + std::to_string(token.action) + ", " +
                                    std::to_string(token.delta) + ") outside the vocabulary");
  }
  const auto a = params.embedding.value.row(static_cast<std::size_t>(token.action));
  const auto d = params.embedding.value.row(config.vocab_size + static_cast<std::size_t>(token.delta));
  for (std::size_t e = 0; e < E; ++e) out[e] = a[e] + d[e];
  return out;
}

namespace {

template <typename T>
void gather_embeddings(const GritNetModel<T>& model, const PaddedBatch& batch, Tensor<T>& x) {
  const std::size_t B = batch.batch, steps = batch.t_max, E = model.config.embedding_dim;
  x = Tensor<T>::matrix(steps * B, E);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto v = embed_lookup(model.params, model.config, batch.at(b, t));
      std::copy(v.begin(), v.end(), x.row(t * B + b).begin());
    }
  }
}

template <typename T>
void run_direction(const nn::LstmWeights<T>& w, const Tensor<T>& x, std::size_t steps,
                   std::size_t batch, bool reverse, Exec exec,
                   typename ForwardCache<T>::Direction& out) {
  const std::size_t H = w.hidden(), E = w.input(), rows = steps * batch;
  Tensor<T> z = Tensor<T>::matrix(rows, 4 * H);
  kernels::gemm_nn(exec, rows, 4 * H, E, x.data(), w.wx.value.data(), z.data(), false);
  kernels::add_row_bias(exec, rows, 4 * H, w.b.value.data(), z.data());
  out.gates = Tensor<T>::matrix(rows, 4 * H);
  out.c = Tensor<T>::matrix(rows, H);
  out.tanh_c = Tensor<T>::matrix(rows, H);
  out.h = Tensor<T>::matrix(rows, H);
  const std::vector<T> zeros(batch * H, T{0});
  const T* h_prev = zeros.data();
  const T* c_prev = zeros.data();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const std::size_t off = t * batch;
    T* zt = z.data() + off * 4 * H;
    kernels::gemm_nn(exec, batch, 4 * H, H, h_prev, w.wh.value.data(), zt, true);
    kernels::lstm_pointwise_forward(exec, batch, H, zt, c_prev, out.gates.data() + off * 4 * H,
                                    out.c.data() + off * H, out.tanh_c.data() + off * H,
                                    out.h.data() + off * H);
    h_prev = out.h.data() + off * H;
    c_prev = out.c.data() + off * H;
  }
}

// Backpropagation through one direction. dh holds the gradient reaching each
// step's output; weight gradients accumulate into w and input gradients into dx.
template <typename T>
void backprop_direction(nn::LstmWeights<T>& w, const Tensor<T>& x,
                        const typename ForwardCache<T>::Direction& trace, const Tensor<T>& dh,
                        std::size_t steps, std::size_t batch, bool reverse, Exec exec,
                        Tensor<T>& dx) {
  const std::size_t H = w.hidden(), E = w.input(), rows = steps * batch;
  Tensor<T> dz = Tensor<T>::matrix(rows, 4 * H);
  Tensor<T> wh_t = Tensor<T>::matrix(4 * H, H);
  kernels::transpose(H, 4 * H, w.wh.value.data(), wh_t.data());
  std::vector<T> carry_h(batch * H, T{0}), carry_c(batch * H, T{0}), dh_total(batch * H);
  const std::vector<T> zeros(batch * H, T{0});

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const std::size_t off = t * batch;
    const T* c_prev = zeros.data();
    if (s > 0) {
      const std::size_t prev_t = reverse ? t + 1 : t - 1;
      c_prev = trace.c.data() + prev_t * batch * H;
    }
    const T* dh_t = dh.data() + off * H;
    for (std::size_t i = 0; i < batch * H; ++i) dh_total[i] = dh_t[i] + carry_h[i];
    T* dz_t = dz.data() + off * 4 * H;
    kernels::lstm_pointwise_backward(exec, batch, H, trace.gates.data() + off * 4 * H, c_prev,
                                     trace.tanh_c.data() + off * H, dh_total.data(),
                                     carry_c.data(), dz_t);
    kernels::gemm_nn(exec, batch, H, 4 * H, dz_t, wh_t.data(), carry_h.data(), false);
  }

  if (steps > 1) {
    // dWh = sum_t h_prev(t)^T dz(t); the previous step's h sits one block away.
    const std::size_t shifted = (steps - 1) * batch;
    const T* h_rows = reverse ? trace.h.data() + batch * H : trace.h.data();
    const T* dz_rows = reverse ? dz.data() : dz.data() + batch * 4 * H;
    kernels::gemm_tn(exec, H, 4 * H, shifted, h_rows, dz_rows, w.wh.grad.data(), true);
  }
  kernels::gemm_tn(exec, E, 4 * H, rows, x.data(), dz.data(), w.wx.grad.data(), true);
  kernels::col_sum(exec, rows, 4 * H, dz.data(), w.b.grad.data(), true);

  Tensor<T> wx_t = Tensor<T>::matrix(4 * H, E);
  kernels::transpose(E, 4 * H, w.wx.value.data(), wx_t.data());
  kernels::gemm_nn(exec, rows, E, 4 * H, dz.data(), wx_t.data(), dx.data(), true);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const GritNetModel<T>& model, const PaddedBatch& batch, Exec exec,
                         ForwardCache<T>* cache) {
  const std::size_t B = batch.batch, steps = batch.t_max, H = model.config.hidden_dim;
  if (B == 0) fail(ErrorKind::empty_input, "forward: empty batch");
  if (steps == 0) fail(ErrorKind::shape, "forward: batch has zero time steps");

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  gather_embeddings(model, batch, c.x);
  run_direction(model.params.forward, c.x, steps, B, false, exec, c.fwd);
  run_direction(model.params.backward, c.x, steps, B, true, exec, c.bwd);

  // B x T x 2H view of the concatenated per-step outputs.
  Tensor<T> outputs({B, steps, 2 * H});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      T* dst = outputs.data() + (b * steps + t) * 2 * H;
      if (!model.config.pool_padded_steps && batch.is_padding(b, t)) {
        std::fill(dst, dst + 2 * H, -std::numeric_limits<T>::infinity());
        continue;
      }
      const T* hf = c.fwd.h.data() + (t * B + b) * H;
      const T* hb = c.bwd.h.data() + (t * B + b) * H;
      std::copy(hf, hf + H, dst);
      std::copy(hb, hb + H, dst + H);
    }
  }
  c.pooled = nn::max_over_time(outputs);

  ForwardResult<T> r;
  r.embeddings = c.pooled.values;
  r.logits = Tensor<T>::vector(B);
  r.probabilities.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    T z = model.params.fc_b.value[0];
    for (std::size_t j = 0; j < 2 * H; ++j) z += r.embeddings(b, j) * model.params.fc_w.value[j];
    r.logits[b] = z;
    r.probabilities[b] = kernels::sigmoid(z);
  }
  if (!r.logits.all_finite()) fail(ErrorKind::numeric_failure, "forward produced a non-finite logit");
  return r;
}

template <typename T>
T loss_and_gradients(GritNetModel<T>& model, const PaddedBatch& batch,
                     const std::vector<int>& labels, Exec exec) {
  if (labels.size() != batch.batch) fail(ErrorKind::shape, "label count does not match batch");
  auto& p = model.params;
  p.zero_grad();
  ForwardCache<T> cache;
  const auto r = forward(model, batch, exec, &cache);
  const T value = nn::bce_with_logits(r.logits, labels);
  if (!std::isfinite(value)) fail(ErrorKind::numeric_failure, "loss is not finite");

  const std::size_t B = batch.batch, steps = batch.t_max, H = model.config.hidden_dim;
  const auto dlogits = nn::bce_with_logits_backward(r.logits, labels);
  for (std::size_t b = 0; b < B; ++b) {
    p.fc_b.grad[0] += dlogits[b];
    for (std::size_t j = 0; j < 2 * H; ++j) p.fc_w.grad[j] += r.embeddings(b, j) * dlogits[b];
  }

  const bool recurrent_trainable = p.embedding.trainable || p.forward.wx.trainable ||
                                   p.forward.wh.trainable || p.forward.b.trainable ||
                                   p.backward.wx.trainable || p.backward.wh.trainable ||
                                   p.backward.b.trainable;
  if (!recurrent_trainable) return value;

  auto dpooled = Tensor<T>::matrix(B, 2 * H);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < 2 * H; ++j) dpooled(b, j) = dlogits[b] * p.fc_w.value[j];
  }
  const auto doutputs = nn::max_over_time_backward(cache.pooled, dpooled, steps);
  auto dh_fwd = Tensor<T>::matrix(steps * B, H);
  auto dh_bwd = Tensor<T>::matrix(steps * B, H);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const T* src = doutputs.data() + (b * steps + t) * 2 * H;
      std::copy(src, src + H, dh_fwd.row(t * B + b).begin());
      std::copy(src + H, src + 2 * H, dh_bwd.row(t * B + b).begin());
    }
  }

  const std::size_t E = model.config.embedding_dim;
  auto dx = Tensor<T>::matrix(steps * B, E);
  backprop_direction(p.forward, cache.x, cache.fwd, dh_fwd, steps, B, false, exec, dx);
  backprop_direction(p.backward, cache.x, cache.bwd, dh_bwd, steps, B, true, exec, dx);

  const std::size_t L = model.config.vocab_size;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      if (batch.is_padding(b, t)) continue;
      const Token& tok = batch.at(b, t);
      const auto g = dx.row(t * B + b);
      auto ra = p.embedding.grad.row(static_cast<std::size_t>(tok.action));
      auto rd = p.embedding.grad.row(L + static_cast<std::size_t>(tok.delta));
      for (std::size_t e = 0; e < E; ++e) {
        ra[e] += g[e];
        rd[e] += g[e];
      }
    }
  }
  return value;
}

template <typename T>
T loss(const GritNetModel<T>& model, const PaddedBatch& batch, const std::vector<int>& labels,
       Exec exec) {
  return nn::bce_with_logits(forward(model, batch, exec).logits, labels);
}

template <typename T>
std::vector<double> predict(const GritNetModel<T>& model,
                            std::span<const TokenizedSequence* const> seqs, Exec exec,
                            std::size_t chunk, std::size_t* truncated) {
  std::vector<double> out;
  out.reserve(seqs.size());
  if (truncated) *truncated = 0;
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const auto part = seqs.subspan(start, std::min(chunk, seqs.size() - start));
    const auto batch = pad_batch(part, model.t_max);
    if (truncated) *truncated += batch.truncated;
    const auto r = forward(model, batch, exec);
    out.insert(out.end(), r.probabilities.begin(), r.probabilities.end());
  }
  return out;
}

template <typename T>
Tensor<T> sequence_embeddings(const GritNetModel<T>& model,
                              std::span<const TokenizedSequence* const> seqs, Exec exec,
                              std::size_t chunk) {
  const std::size_t width = 2 * std::size_t{model.config.hidden_dim};
  auto out = Tensor<T>::matrix(seqs.size(), width);
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const auto part = seqs.subspan(start, std::min(chunk, seqs.size() - start));
    const auto r = forward(model, pad_batch(part, model.t_max), exec);
    std::copy(r.embeddings.values().begin(), r.embeddings.values().end(),
              out.data() + start * width);
  }
  return out;
}

std::vector<std::int64_t> remap_rows(const CourseSchema& source, const CourseSchema& target) {
  const std::size_t target_l = vocab_size(target);
  std::vector<std::int64_t> rows(target_l + target.delta_cap + 1, -1);
  for (std::size_t a = 0; a < target_l; ++a) {
    const auto triple = decode_action(target, static_cast<std::int32_t>(a));
    const std::uint32_t bound = triple.kind == EventKind::content ? source.num_contents
                                : triple.kind == EventKind::quiz  ? source.num_quizzes
                                                                  : source.num_projects;
    if (triple.ordinal > bound) continue;
    RawEvent e;
    e.kind = triple.kind;
    e.ordinal = triple.ordinal;
    e.outcome = triple.outcome;
    rows[a] = action_token(source, e);
  }
  const std::size_t source_l = vocab_size(source);
  for (std::uint32_t d = 0; d <= target.delta_cap; ++d) {
    if (d <= source.delta_cap) rows[target_l + d] = static_cast<std::int64_t>(source_l + d);
  }
  return rows;
}

template <typename T>
GritNetModel<T> remap_to_schema(const GritNetModel<T>& source, const CourseSchema& target,
                                std::uint64_t seed, RemapStats* stats) {
  target.validate();
  GritNetModel<T> out = source;
  out.schema = target;
  out.config.vocab_size = static_cast<std::uint32_t>(vocab_size(target));
  out.config.delta_buckets = target.delta_cap + 1;
  const std::size_t E = source.config.embedding_dim, O = out.config.input_size();
  out.params.embedding = Parameter<T>("embedding", Tensor<T>::matrix(O, E));

  const auto rows = remap_rows(source.schema, target);
  Rng rng(derive_seed(seed, 0x72656d6170ULL));
  const double limit = std::sqrt(6.0 / static_cast<double>(O + E));
  RemapStats s;
  for (std::size_t r = 0; r < O; ++r) {
    auto dst = out.params.embedding.value.row(r);
    if (rows[r] >= 0) {
      const auto src = source.params.embedding.value.row(static_cast<std::size_t>(rows[r]));
      std::copy(src.begin(), src.end(), dst.begin());
      ++s.reused_rows;
    } else {
      for (auto& v : dst) v = static_cast<T>(uniform(rng, -limit, limit));
      ++s.fresh_rows;
    }
  }
  s.dropped_rows = source.config.input_size() - s.reused_rows;
  out.params.embedding.trainable = source.params.embedding.trainable;
  if (stats) *stats = s;
  return out;
}

#define GRITNET_INSTANTIATE(T)                                                                  \
  template struct GritNetParams<T>;                                                             \
  template GritNetModel<T> make_model<T>(const GritNetConfig&, const CourseSchema&, std::size_t); \
  template std::vector<T> embed_lookup<T>(const GritNetParams<T>&, const GritNetConfig&,        \
                                          const Token&);                                        \
  template ForwardResult<T> forward<T>(const GritNetModel<T>&, const PaddedBatch&, Exec,        \
                                       ForwardCache<T>*);                                       \
  template T loss_and_gradients<T>(GritNetModel<T>&, const PaddedBatch&,                        \
                                   const std::vector<int>&, Exec);                              \
  template T loss<T>(const GritNetModel<T>&, const PaddedBatch&, const std::vector<int>&, Exec); \
  template std::vector<double> predict<T>(const GritNetModel<T>&,                               \
                                          std::span<const TokenizedSequence* const>, Exec,      \
                                          std::size_t, std::size_t*);                           \
  template Tensor<T> sequence_embeddings<T>(const GritNetModel<T>&,                             \
                                            std::span<const TokenizedSequence* const>, Exec,    \
                                            std::size_t);                                       \
  template GritNetModel<T> remap_to_schema<T>(const GritNetModel<T>&, const CourseSchema&,      \
                                              std::uint64_t, RemapStats*);

GRITNET_INSTANTIATE(float)
GRITNET_INSTANTIATE(double)
#undef GRITNET_INSTANTIATE

}  // namespace gritnet
