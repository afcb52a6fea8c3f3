#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gritnet/events.hpp"
#include "gritnet/nn/kernels.hpp"
#include "gritnet/nn/ops.hpp"
#include "gritnet/nn/tensor.hpp"

namespace gritnet {

using nn::Exec;
using nn::Parameter;
using nn::Tensor;

struct GritNetConfig {
  std::uint32_t vocab_size = 0;     // L
  std::uint32_t delta_buckets = 31;  // delta_cap + 1
  std::uint32_t embedding_dim = 64;
  std::uint32_t hidden_dim = 32;    // per direction
  std::uint64_t seed = 0;
  /// Padded steps take part in max pooling (the unmasked reading). false masks
  /// them out, kept for ablations.
  bool pool_padded_steps = true;

  std::size_t input_size() const { return std::size_t{vocab_size} + delta_buckets; }
  void validate() const;
  bool operator==(const GritNetConfig&) const = default;

  static GritNetConfig for_schema(const CourseSchema& schema, std::uint32_t embedding_dim,
                                  std::uint32_t hidden_dim, std::uint64_t seed);
};

/// Trainable state. The embedding is stored input-major: row r is the
/// embedding of one-hot position r (action rows first, then delta rows).
template <typename T>
struct GritNetParams {
  Parameter<T> embedding;  // (L + D) x E
  nn::LstmWeights<T> forward;
  nn::LstmWeights<T> backward;
  Parameter<T> fc_w;  // 2H
  Parameter<T> fc_b;  // 1

  /// Fixed order: embedding, forward {wx, wh, b}, backward {wx, wh, b}, fc_w, fc_b.
  std::vector<Parameter<T>*> all();
  std::vector<const Parameter<T>*> all() const;
  void zero_grad();
  /// Freezes everything except the output layer.
  void freeze_all_but_fc();
  void unfreeze();
};

template <typename T>
struct GritNetModel {
  GritNetConfig config;
  CourseSchema schema;
  std::size_t t_max = 1;  // padding length, fixed by the training set
  GritNetParams<T> params;
};

/// Glorot-uniform matrices, zero biases, forget-gate bias 1.
template <typename T>
GritNetModel<T> make_model(const GritNetConfig& config, const CourseSchema& schema,
                           std::size_t t_max);

/// embedding row(action) + embedding row(L + delta); zero for the padding marker.
template <typename T>
std::vector<T> embed_lookup(const GritNetParams<T>& params, const GritNetConfig& config,
                            const Token& token);

template <typename T>
struct ForwardResult {
  std::vector<T> probabilities;  // B
  Tensor<T> logits;              // B
  Tensor<T> embeddings;          // B x 2H, the max-pooled sequence embedding
};

/// Intermediate values kept for the backward pass; time-major, row t * B + b.
template <typename T>
struct ForwardCache {
  struct Direction {
    Tensor<T> gates, c, tanh_c, h;
  };
  Tensor<T> x;  // (T * B) x E
  Direction fwd, bwd;
  nn::MaxOverTime<T> pooled;
};

template <typename T>
ForwardResult<T> forward(const GritNetModel<T>& model, const PaddedBatch& batch,
                         Exec exec = Exec::serial, ForwardCache<T>* cache = nullptr);

/// Zeroes gradients, runs forward and backward, and returns mean BCE. The
/// recurrent pass is skipped entirely when every non-FC parameter is frozen.
template <typename T>
T loss_and_gradients(GritNetModel<T>& model, const PaddedBatch& batch,
                     const std::vector<int>& labels, Exec exec = Exec::serial);

template <typename T>
T loss(const GritNetModel<T>& model, const PaddedBatch& batch, const std::vector<int>& labels,
       Exec exec = Exec::serial);

/// Probabilities for arbitrary sequences, padded to model.t_max in chunks.
template <typename T>
std::vector<double> predict(const GritNetModel<T>& model,
                            std::span<const TokenizedSequence* const> seqs,
                            Exec exec = Exec::serial, std::size_t chunk = 64,
                            std::size_t* truncated = nullptr);

/// Max-pooled embeddings (rows) for arbitrary sequences.
template <typename T>
Tensor<T> sequence_embeddings(const GritNetModel<T>& model,
                              std::span<const TokenizedSequence* const> seqs,
                              Exec exec = Exec::serial, std::size_t chunk = 64);

/// Rebuilds the embedding input layer for another course by ordinal role:
/// content-n, quiz-n (correct/incorrect), project-n (pass/fail) and delta
/// buckets present in both schemas reuse the source rows; rows only the
/// target has are freshly initialized from `seed`. All other parameters are
/// copied unchanged.
struct RemapStats {
  std::size_t reused_rows = 0;
  std::size_t fresh_rows = 0;
  std::size_t dropped_rows = 0;
};
template <typename T>
GritNetModel<T> remap_to_schema(const GritNetModel<T>& source, const CourseSchema& target,
                                std::uint64_t seed, RemapStats* stats = nullptr);

/// Source embedding row feeding each target row, or -1 for fresh rows.
std::vector<std::int64_t> remap_rows(const CourseSchema& source, const CourseSchema& target);

// ---- checkpoints ------------------------------------------------------------

template <typename T>
std::vector<std::uint8_t> checkpoint_bytes(const GritNetModel<T>& model);
template <typename T>
GritNetModel<T> parse_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const GritNetModel<T>& model, const std::filesystem::path& path);
template <typename T>
GritNetModel<T> load_checkpoint(const std::filesystem::path& path);
/// Fails with schema_mismatch when the stored schema differs from `expected`.
template <typename T>
GritNetModel<T> load_checkpoint(const std::filesystem::path& path, const CourseSchema& expected);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

template <typename T>
std::uint64_t checkpoint_hash(const GritNetModel<T>& model);
/// Hash over the raw bytes of every parameter except the output layer.
template <typename T>
std::uint64_t frozen_parameter_hash(const GritNetModel<T>& model);
template <typename T>
std::uint64_t parameter_hash(const Parameter<T>& param);

}  // namespace gritnet
