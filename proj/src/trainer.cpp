#include "gritnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gritnet/error.hpp"
#include "gritnet/evaluation.hpp"
#include "gritnet/nn/adam.hpp"
#include "gritnet/nn/kernels.hpp"
#include "gritnet/random.hpp"

namespace gritnet {

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::config, "train: epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::config, "train: batch_size must be >= 1");
  if (!(learning_rate > 0)) fail(ErrorKind::config, "train: learning rate must be positive");
  if (patience < 1) fail(ErrorKind::config, "train: patience must be >= 1");
  if (weeks.empty()) fail(ErrorKind::config, "train: week list is empty");
  for (int w : weeks) {
    if (w < 1) fail(ErrorKind::config, "train: weeks must be >= 1");
  }
}

void AdaptConfig::validate() const {
  if (thresholds.empty()) fail(ErrorKind::config, "adapt: threshold grid is empty");
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) {
      fail(ErrorKind::config, "adapt: threshold " + std::to_string(t) + " is outside (0, 1)");
    }
  }
  if (epochs < 1) fail(ErrorKind::config, "adapt: epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::config, "adapt: batch_size must be >= 1");
  if (!(learning_rate > 0)) fail(ErrorKind::config, "adapt: learning rate must be positive");
  if (!(selection_fraction >= 0.0 && selection_fraction < 1.0)) {
    fail(ErrorKind::config, "adapt: selection_fraction must be in [0, 1)");
  }
}

// ---- folds ------------------------------------------------------------------

std::vector<std::size_t> FoldAssignment::members(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == f) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != f) out.push_back(i);
  }
  return out;
}

FoldAssignment stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::config, "k-fold: k must be >= 2");
  if (k > labels.size()) fail(ErrorKind::stratification, "k-fold: more folds than students");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    fail(ErrorKind::stratification, "k-fold: labels contain a single class");
  }
  Rng rng(derive_seed(seed, 0x666f6c64ULL));
  shuffle(pos.begin(), pos.end(), rng);
  shuffle(neg.begin(), neg.end(), rng);
  FoldAssignment out{k, std::vector<std::size_t>(labels.size())};
  std::size_t next = 0;
  for (auto* group : {&pos, &neg}) {
    for (std::size_t i : *group) {
      out.fold[i] = next;
      next = (next + 1) % k;
    }
  }
  return out;
}

FoldAssignment plain_kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::config, "k-fold: k must be >= 2");
  if (k > n) fail(ErrorKind::stratification, "k-fold: more folds than students");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x666f6c64ULL));
  shuffle(order.begin(), order.end(), rng);
  FoldAssignment out{k, std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) out.fold[order[i]] = i % k;
  return out;
}

std::vector<std::size_t> stratified_holdout(std::span<const int> labels, double fraction,
                                            std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) fail(ErrorKind::config, "holdout fraction must be in [0, 1)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  Rng rng(derive_seed(seed, 0x686f6c64ULL));
  shuffle(pos.begin(), pos.end(), rng);
  shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::size_t> out;
  for (auto* group : {&pos, &neg}) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group->size())));
    out.insert(out.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- supervised training ----------------------------------------------------

std::vector<const TokenizedSequence*> sequence_pointers(const LabeledDataset& data) {
  std::vector<const TokenizedSequence*> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(&s.sequence);
  return out;
}

std::vector<int> dataset_labels(const LabeledDataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.label);
  return out;
}

namespace {

void require_two_classes(std::span<const int> labels, const char* what) {
  if (labels.empty()) fail(ErrorKind::empty_input, std::string(what) + ": no students");
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    fail(ErrorKind::stratification, std::string(what) + ": labels contain a single class");
  }
}

}  // namespace

template <typename T>
TrainResult<T> train(GritNetModel<T> model, const LabeledDataset& train_set,
                     const LabeledDataset& valid_set, const TrainConfig& config, Exec exec) {
  config.validate();
  const auto train_labels = dataset_labels(train_set);
  require_two_classes(train_labels, "train");
  for (const auto& s : train_set) {
    if (s.sequence.empty()) fail(ErrorKind::empty_input, "train: student '" + s.sequence.student_id + "' has no events");
  }

  const auto train_ptrs = sequence_pointers(train_set);
  const bool use_valid = !valid_set.empty();
  const auto valid_ptrs = sequence_pointers(use_valid ? valid_set : train_set);
  const auto valid_labels = use_valid ? dataset_labels(valid_set) : train_labels;

  model.params.unfreeze();
  auto params = model.params.all();
  nn::AdamState<T> adam;
  adam.config.learning_rate = config.learning_rate;

  TrainResult<T> result{model, {}};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, 0x1000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const TokenizedSequence*> seqs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        seqs.push_back(train_ptrs[order[i]]);
        labels.push_back(train_labels[order[i]]);
      }
      const auto batch = pad_batch(std::span<const TokenizedSequence* const>(seqs), model.t_max);
      const T l = loss_and_gradients(model, batch, labels, exec);
      loss_sum += static_cast<double>(l) * static_cast<double>(end - start);
      nn::adam_step(std::span<nn::Parameter<T>* const>(params), adam);
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt};
    const auto scores = predict(model, std::span<const TokenizedSequence* const>(valid_ptrs), exec);
    record.valid_auc = try_auc(scores, valid_labels);
    result.history.epochs.push_back(record);

    const bool better = record.valid_auc &&
                        (!result.history.best_auc || *record.valid_auc > *result.history.best_auc);
    if (better || result.history.best_epoch == 0) {
      result.history.best_epoch = epoch;
      result.history.best_auc = record.valid_auc;
      result.model = model;
      since_best = 0;
      if (config.stop_auc && record.valid_auc && *record.valid_auc >= *config.stop_auc) break;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

LabeledDataset truncate_dataset(const LabeledDataset& data, int week, std::size_t* dropped) {
  LabeledDataset out;
  out.reserve(data.size());
  std::size_t lost = 0;
  for (const auto& s : data) {
    auto seq = truncate_to_week(s.sequence, week);
    if (seq.empty()) {
      ++lost;
      continue;
    }
    out.push_back({std::move(seq), s.label});
  }
  if (dropped) *dropped = lost;
  return out;
}

template <typename T>
std::map<int, WeekOutcome<T>> train_weekly(const CourseSchema& schema, const LabeledDataset& train_set,
                                           const LabeledDataset& valid_set,
                                           const GritNetConfig& model_config,
                                           const TrainConfig& config, Exec exec) {
  config.validate();
  std::map<int, WeekOutcome<T>> out;
  for (int week : config.weeks) {
    WeekOutcome<T> o;
    o.week = week;
    const auto tr = truncate_dataset(train_set, week, &o.dropped_train);
    const auto va = truncate_dataset(valid_set, week, &o.dropped_valid);
    const auto labels = dataset_labels(tr);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    if (tr.empty()) {
      o.skipped = "no training student has events in the window";
    } else if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
      o.skipped = "training labels in the window contain a single class";
    } else {
      auto model = make_model<T>(model_config, schema, max_length(tr));
      o.result = train(std::move(model), tr, va, config, exec);
    }
    out.emplace(week, std::move(o));
  }
  return out;
}

// ---- adaptation ---------------------------------------------------------------

std::vector<int> pseudo_label(std::span<const double> predictions, double theta) {
  std::vector<int> out;
  out.reserve(predictions.size());
  for (double p : predictions) out.push_back(p >= theta ? 1 : 0);
  return out;
}

template <typename T>
GritNetModel<T> prepare_for_target(const GritNetModel<T>& source, const CourseSchema& target,
                                   std::uint64_t seed, RemapStats* stats, bool* remapped) {
  target.validate();
  const bool differs = !(source.schema == target);
  if (remapped) *remapped = differs;
  if (!differs) {
    if (stats) *stats = RemapStats{source.params.embedding.value.rows(), 0, 0};
    return source;
  }
  return remap_to_schema(source, target, derive_seed(seed, 0x72656d6170ULL), stats);
}

template <typename T>
std::vector<double> predict_from_embeddings(const GritNetModel<T>& model, const Tensor<T>& embeddings) {
  const auto& w = model.params.fc_w.value;
  if (embeddings.cols() != w.size()) fail(ErrorKind::shape, "embedding width does not match the output layer");
  std::vector<double> out(embeddings.rows());
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    T z = model.params.fc_b.value[0];
    for (std::size_t c = 0; c < w.size(); ++c) z += embeddings(r, c) * w[c];
    out[r] = static_cast<double>(nn::kernels::sigmoid(z));
  }
  return out;
}

template <typename T>
GritNetModel<T> fine_tune_fc(const GritNetModel<T>& model, const Tensor<T>& embeddings,
                             std::span<const int> labels, const AdaptConfig& config,
                             std::uint64_t seed) {
  config.validate();
  if (embeddings.rows() != labels.size()) fail(ErrorKind::shape, "fine_tune_fc: embeddings and labels differ in length");
  require_two_classes(labels, "fine_tune_fc");
  const std::size_t width = embeddings.cols();
  if (width != model.params.fc_w.value.size()) fail(ErrorKind::shape, "fine_tune_fc: embedding width mismatch");

  GritNetModel<T> out = model;
  out.params.freeze_all_but_fc();
  auto params = out.params.all();
  nn::AdamState<T> adam;
  adam.config.learning_rate = config.learning_rate;

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto& w = out.params.fc_w;
  auto& b = out.params.fc_b;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0x2000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto logits = Tensor<T>::vector(end - start);
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) {
        T z = b.value[0];
        for (std::size_t c = 0; c < width; ++c) z += embeddings(order[i], c) * w.value[c];
        logits[i - start] = z;
        y.push_back(labels[order[i]]);
      }
      const auto dz = nn::bce_with_logits_backward(logits, y);
      out.params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const T d = dz[i - start];
        for (std::size_t c = 0; c < width; ++c) w.grad[c] += d * embeddings(order[i], c);
        b.grad[0] += d;
      }
      nn::adam_step(std::span<nn::Parameter<T>* const>(params), adam);
    }
  }
  out.params.unfreeze();
  check_frozen(model, out);
  return out;
}

template <typename T>
void check_frozen(const GritNetModel<T>& before, const GritNetModel<T>& after) {
  if (frozen_parameter_hash(before) != frozen_parameter_hash(after)) {
    fail(ErrorKind::check_failure, "adaptation changed a frozen parameter");
  }
  const auto pb = before.params.all();
  const auto pa = after.params.all();
  for (std::size_t i = 0; i + 2 < pb.size(); ++i) {
    if (!(pb[i]->value == pa[i]->value)) {
      fail(ErrorKind::check_failure, "adaptation changed frozen parameter '" + pb[i]->name + "'");
    }
  }
}

template <typename T>
const GritNetModel<T>& AdaptResult<T>::selected_model() const {
  if (!selected) fail(ErrorKind::degenerate_labels, "adapt: no threshold produced a model");
  return *runs[*selected].model;
}

template <typename T>
AdaptResult<T> adapt_from_embeddings(const GritNetModel<T>& start, const Tensor<T>& embeddings,
                                     const AdaptConfig& config, std::uint64_t seed) {
  config.validate();
  if (embeddings.rows() == 0) fail(ErrorKind::empty_input, "adapt: no target students");

  AdaptResult<T> result{start, {}, false, 0, predict_from_embeddings(start, embeddings), {}, std::nullopt};

  // The selection split is drawn once, independent of the threshold.
  const std::size_t n = embeddings.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x73656cULL));
  shuffle(order.begin(), order.end(), rng);
  auto held = static_cast<std::size_t>(std::llround(config.selection_fraction * static_cast<double>(n)));
  if (held >= n) held = 0;
  std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::vector<std::size_t> sel_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(sel_rows.begin(), sel_rows.end());

  auto gather = [&](const std::vector<std::size_t>& rows) {
    auto t = Tensor<T>::matrix(rows.size(), embeddings.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy(embeddings.row(rows[r]).begin(), embeddings.row(rows[r]).end(), t.row(r).begin());
    }
    return t;
  };
  const auto fit_emb = held == 0 ? embeddings : gather(fit_rows);
  const auto sel_emb = gather(sel_rows);

  for (double theta : config.thresholds) {
    ThetaRun<T> run;
    run.theta = theta;
    const auto all_labels = pseudo_label(result.source_predictions, theta);
    std::vector<int> fit_labels, sel_labels;
    if (held == 0) {
      fit_labels = all_labels;
    } else {
      for (std::size_t r : fit_rows) fit_labels.push_back(all_labels[r]);
    }
    for (std::size_t r : sel_rows) sel_labels.push_back(all_labels[r]);
    run.positives = static_cast<std::size_t>(std::count(all_labels.begin(), all_labels.end(), 1));
    run.negatives = all_labels.size() - run.positives;
    try {
      run.model = fine_tune_fc(start, fit_emb, fit_labels, config, seed);
      if (held > 0) run.selection_auc = try_auc(predict_from_embeddings(*run.model, sel_emb), sel_labels);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::stratification) throw;
      run.error = "degenerate pseudo-labels at theta " + std::to_string(theta) + ": " +
                  std::to_string(run.positives) + " positive, " + std::to_string(run.negatives) +
                  " negative";
      run.model.reset();
    }
    result.runs.push_back(std::move(run));
  }

  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& r = result.runs[i];
    if (!r.model) continue;
    if (!result.selected) {
      result.selected = i;
      continue;
    }
    const auto& best = result.runs[*result.selected];
    if (r.selection_auc && (!best.selection_auc || *r.selection_auc > *best.selection_auc)) result.selected = i;
  }
  if (!result.selected) {
    fail(ErrorKind::degenerate_labels, "adapt: every threshold produced single-class pseudo-labels");
  }
  return result;
}

template <typename T>
AdaptResult<T> adapt(const GritNetModel<T>& source, const CourseSchema& target_schema,
                     std::span<const TokenizedSequence* const> target, const AdaptConfig& config,
                     std::uint64_t seed, Exec exec) {
  RemapStats stats;
  bool remapped = false;
  const auto start = prepare_for_target(source, target_schema, seed, &stats, &remapped);
  std::size_t truncated = 0;
  for (const auto* s : target) truncated += s->size() > start.t_max;
  const auto emb = sequence_embeddings(start, target, exec);
  auto result = adapt_from_embeddings(start, emb, config, seed);
  result.remap = stats;
  result.remapped = remapped;
  result.truncated = truncated;
  return result;
}

template <typename T>
GritNetModel<T> oracle_from_embeddings(const GritNetModel<T>& start, const Tensor<T>& embeddings,
                                       std::span<const int> labels, const AdaptConfig& config,
                                       std::uint64_t seed) {
  if (labels.empty()) fail(ErrorKind::empty_input, "oracle: no target labels");
  return fine_tune_fc(start, embeddings, labels, config, seed);
}

template <typename T>
GritNetModel<T> oracle_adapt(const GritNetModel<T>& source, const CourseSchema& target_schema,
                             std::span<const TokenizedSequence* const> target,
                             std::span<const int> labels, const AdaptConfig& config,
                             std::uint64_t seed, Exec exec) {
  if (labels.empty() || target.empty()) fail(ErrorKind::empty_input, "oracle: no target students");
  if (labels.size() != target.size()) fail(ErrorKind::shape, "oracle: labels and sequences differ in length");
  const auto start = prepare_for_target(source, target_schema, seed);
  return oracle_from_embeddings(start, sequence_embeddings(start, target, exec), labels, config, seed);
}

#define GRITNET_INSTANTIATE_TRAINER(T)                                                             \
  template TrainResult<T> train<T>(GritNetModel<T>, const LabeledDataset&, const LabeledDataset&,  \
                                   const TrainConfig&, Exec);                                      \
  template std::map<int, WeekOutcome<T>> train_weekly<T>(const CourseSchema&, const LabeledDataset&, \
                                                         const LabeledDataset&, const GritNetConfig&, \
                                                         const TrainConfig&, Exec);                \
  template GritNetModel<T> prepare_for_target<T>(const GritNetModel<T>&, const CourseSchema&,      \
                                                 std::uint64_t, RemapStats*, bool*);               \
  template std::vector<double> predict_from_embeddings<T>(const GritNetModel<T>&, const Tensor<T>&); \
  template GritNetModel<T> fine_tune_fc<T>(const GritNetModel<T>&, const Tensor<T>&,               \
                                           std::span<const int>, const AdaptConfig&, std::uint64_t); \
  template void check_frozen<T>(const GritNetModel<T>&, const GritNetModel<T>&);                   \
  template struct AdaptResult<T>;                                                                  \
  template AdaptResult<T> adapt_from_embeddings<T>(const GritNetModel<T>&, const Tensor<T>&,       \
                                                   const AdaptConfig&, std::uint64_t);             \
  template AdaptResult<T> adapt<T>(const GritNetModel<T>&, const CourseSchema&,                    \
                                   std::span<const TokenizedSequence* const>, const AdaptConfig&,  \
                                   std::uint64_t, Exec);                                           \
  template GritNetModel<T> oracle_from_embeddings<T>(const GritNetModel<T>&, const Tensor<T>&,     \
                                                     std::span<const int>, const AdaptConfig&,     \
                                                     std::uint64_t);                               \
  template GritNetModel<T> oracle_adapt<T>(const GritNetModel<T>&, const CourseSchema&,            \
                                           std::span<const TokenizedSequence* const>,              \
                                           std::span<const int>, const AdaptConfig&, std::uint64_t, \
                                           Exec);

GRITNET_INSTANTIATE_TRAINER(float)
GRITNET_INSTANTIATE_TRAINER(double)

}  // namespace gritnet
