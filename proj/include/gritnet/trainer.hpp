#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gritnet/events.hpp"
#include "gritnet/model.hpp"

namespace gritnet {

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 5;  // epochs without a better validation AUC before stopping
  std::uint64_t seed = 0;
  std::vector<int> weeks{1, 2, 3, 4, 5, 6, 7, 8};
  std::optional<double> stop_auc;  // stop once the validation AUC reaches this

  void validate() const;
};

struct AdaptConfig {
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4};
  int epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Share of the target students held out to pick a threshold. Zero trains
  /// every threshold on all students and selects the first that succeeds.
  double selection_fraction = 0.2;

  void validate() const;
};

/// fold[i] is the fold of the i-th label passed to stratified_kfold.
struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold;

  std::vector<std::size_t> members(std::size_t f) const;
  std::vector<std::size_t> complement(std::size_t f) const;
};

/// Shuffles each class with the seed and deals the positives, then the
/// negatives, round-robin over the folds. Fold sizes differ by at most one
/// and per-fold positive counts by at most one.
FoldAssignment stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Balanced k-fold split without labels (for unlabeled target courses).
FoldAssignment plain_kfold(std::size_t n, std::size_t k, std::uint64_t seed);

/// Stratified two-way split; returns the indices of the held-out part.
std::vector<std::size_t> stratified_holdout(std::span<const int> labels, double fraction,
                                            std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_auc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::optional<double> best_auc;
};

template <typename T>
struct TrainResult {
  GritNetModel<T> model;
  TrainHistory history;
};

/// Adam mini-batch training on mean BCE. Keeps the parameters of the epoch
/// with the best validation AUC; an empty validation set selects on the
/// training AUC instead. Batches are padded to model.t_max.
template <typename T>
TrainResult<T> train(GritNetModel<T> model, const LabeledDataset& train_set,
                     const LabeledDataset& valid_set, const TrainConfig& config,
                     Exec exec = Exec::serial);

/// Sequences truncated to the week window; students left with no events are
/// dropped and counted.
LabeledDataset truncate_dataset(const LabeledDataset& data, int week, std::size_t* dropped = nullptr);

template <typename T>
struct WeekOutcome {
  int week = 0;
  std::optional<TrainResult<T>> result;
  std::size_t dropped_train = 0;
  std::size_t dropped_valid = 0;
  std::string skipped;  // reason when no model was trained
};

/// One independent model per week: truncate, size the padding length on the
/// truncated training set, train.
template <typename T>
std::map<int, WeekOutcome<T>> train_weekly(const CourseSchema& schema, const LabeledDataset& train_set,
                                           const LabeledDataset& valid_set,
                                           const GritNetConfig& model_config,
                                           const TrainConfig& config, Exec exec = Exec::serial);

/// 1 where prediction >= theta.
std::vector<int> pseudo_label(std::span<const double> predictions, double theta);

/// The source model carried into the target course: the input layer is
/// remapped when the schemas differ, everything else is copied.
template <typename T>
GritNetModel<T> prepare_for_target(const GritNetModel<T>& source, const CourseSchema& target,
                                   std::uint64_t seed, RemapStats* stats = nullptr,
                                   bool* remapped = nullptr);

/// Probabilities from cached pooled embeddings and the model's output layer.
template <typename T>
std::vector<double> predict_from_embeddings(const GritNetModel<T>& model, const Tensor<T>& embeddings);

/// Trains only the output layer on cached pooled embeddings. Valid because the
/// frozen layers make the embeddings a fixed function of the input.
template <typename T>
GritNetModel<T> fine_tune_fc(const GritNetModel<T>& model, const Tensor<T>& embeddings,
                             std::span<const int> labels, const AdaptConfig& config,
                             std::uint64_t seed);

template <typename T>
struct ThetaRun {
  double theta = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<GritNetModel<T>> model;
  std::optional<double> selection_auc;  // AUC against its own pseudo-labels
  std::string error;
};

template <typename T>
struct AdaptResult {
  GritNetModel<T> start;  // the prepared source model (the unadapted baseline)
  RemapStats remap;
  bool remapped = false;
  std::size_t truncated = 0;
  std::vector<double> source_predictions;
  std::vector<ThetaRun<T>> runs;
  std::optional<std::size_t> selected;

  const GritNetModel<T>& selected_model() const;
};

/// Pseudo-label adaptation from precomputed embeddings of the target students
/// under `start`. Throws degenerate_labels when every threshold yields a
/// single pseudo-label class.
template <typename T>
AdaptResult<T> adapt_from_embeddings(const GritNetModel<T>& start, const Tensor<T>& embeddings,
                                     const AdaptConfig& config, std::uint64_t seed);

template <typename T>
AdaptResult<T> adapt(const GritNetModel<T>& source, const CourseSchema& target_schema,
                     std::span<const TokenizedSequence* const> target, const AdaptConfig& config,
                     std::uint64_t seed, Exec exec = Exec::serial);

/// The upper-bound variant: the output layer is trained on true labels.
template <typename T>
GritNetModel<T> oracle_from_embeddings(const GritNetModel<T>& start, const Tensor<T>& embeddings,
                                       std::span<const int> labels, const AdaptConfig& config,
                                       std::uint64_t seed);

template <typename T>
GritNetModel<T> oracle_adapt(const GritNetModel<T>& source, const CourseSchema& target_schema,
                             std::span<const TokenizedSequence* const> target,
                             std::span<const int> labels, const AdaptConfig& config,
                             std::uint64_t seed, Exec exec = Exec::serial);

/// Throws check_failure unless every non-FC parameter of `after` is
/// bit-identical to `before`.
template <typename T>
void check_frozen(const GritNetModel<T>& before, const GritNetModel<T>& after);

std::vector<const TokenizedSequence*> sequence_pointers(const LabeledDataset& data);
std::vector<int> dataset_labels(const LabeledDataset& data);

}  // namespace gritnet
