#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "gritnet/error.hpp"
#include "gritnet/evaluation.hpp"
#include "gritnet/synthgen.hpp"
#include "gritnet/trainer.hpp"

using namespace gritnet;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::check_failure;
}

struct Course {
  CourseSchema schema;
  LabeledDataset data;
};

Course small_course(std::size_t n, std::uint64_t seed, double difficulty = 1.0) {
  auto spec = preset_spec("symmetric");
  spec.schema = {12, 6, 2, 30};
  spec.difficulty = difficulty;
  const auto cohort = generate(spec, n, seed);
  auto joined = join_labels(group_by_student(cohort.events), cohort.labels);
  Course c{cohort.schema, {}};
  for (std::size_t i = 0; i < joined.students.size(); ++i) {
    c.data.push_back({tokenize_student(c.schema, joined.students[i].events), joined.labels[i]});
  }
  return c;
}

std::vector<int> labels_with(std::size_t pos, std::size_t neg) {
  std::vector<int> y(pos, 1);
  y.insert(y.end(), neg, 0);
  return y;
}

}  // namespace

TEST(Folds, StratifiedKfoldBalancesSizesAndClasses) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (std::size_t k : {2u, 3u, 5u}) {
      const auto y = labels_with(23, 61);
      const auto folds = stratified_kfold(y, k, seed);
      ASSERT_EQ(folds.fold.size(), y.size());
      std::vector<std::size_t> size(k, 0), pos(k, 0);
      for (std::size_t i = 0; i < y.size(); ++i) {
        ASSERT_LT(folds.fold[i], k);
        ++size[folds.fold[i]];
        pos[folds.fold[i]] += static_cast<std::size_t>(y[i]);
      }
      EXPECT_LE(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()), 1u);
      EXPECT_LE(*std::max_element(pos.begin(), pos.end()) - *std::min_element(pos.begin(), pos.end()), 1u);
      for (std::size_t f = 0; f < k; ++f) {
        auto m = folds.members(f), c = folds.complement(f);
        EXPECT_EQ(m.size() + c.size(), y.size());
        std::vector<std::size_t> all(m);
        all.insert(all.end(), c.begin(), c.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
      }
      EXPECT_EQ(stratified_kfold(y, k, seed).fold, folds.fold);
    }
  }
}

TEST(Folds, Errors) {
  const auto y = labels_with(3, 3);
  EXPECT_EQ(kind_of([&] { stratified_kfold(y, 1, 0); }), ErrorKind::config);
  EXPECT_EQ(kind_of([&] { stratified_kfold(y, 7, 0); }), ErrorKind::stratification);
  const auto one = labels_with(0, 6);
  EXPECT_EQ(kind_of([&] { stratified_kfold(one, 2, 0); }), ErrorKind::stratification);
}

TEST(Folds, PlainAndHoldout) {
  const auto folds = plain_kfold(11, 3, 4);
  std::vector<std::size_t> size(3, 0);
  for (auto f : folds.fold) ++size[f];
  EXPECT_EQ(std::set<std::size_t>(size.begin(), size.end()), (std::set<std::size_t>{3, 4}));

  const auto y = labels_with(20, 80);
  const auto held = stratified_holdout(y, 0.2, 9);
  EXPECT_EQ(held.size(), 20u);
  std::size_t pos = 0;
  for (auto i : held) pos += static_cast<std::size_t>(y[i]);
  EXPECT_EQ(pos, 4u);
}

TEST(PseudoLabel, ThresholdIsInclusive) {
  const std::vector<double> p{0.05, 0.1, 0.35, 0.9};
  EXPECT_EQ(pseudo_label(p, 0.1), (std::vector<int>{0, 1, 1, 1}));
  EXPECT_EQ(pseudo_label(p, 0.4), (std::vector<int>{0, 0, 0, 1}));
}

TEST(Train, LearnsAndIsDeterministic) {
  const auto course = small_course(160, 5);
  LabeledDataset train_set(course.data.begin(), course.data.begin() + 120);
  LabeledDataset valid_set(course.data.begin() + 120, course.data.end());
  TrainConfig config;
  config.epochs = 6;
  config.learning_rate = 1e-2;
  config.seed = 3;
  const auto model = make_model<float>(GritNetConfig::for_schema(course.schema, 16, 8, 3), course.schema,
                                       max_length(train_set));
  const auto a = train(model, train_set, valid_set, config);
  const auto b = train(model, train_set, valid_set, config, Exec::parallel);
  EXPECT_EQ(checkpoint_hash(a.model), checkpoint_hash(b.model));
  ASSERT_FALSE(a.history.epochs.empty());
  EXPECT_LT(a.history.epochs.back().train_loss, a.history.epochs.front().train_loss);
  ASSERT_TRUE(a.history.best_auc);
  EXPECT_GT(*a.history.best_auc, 70.0);
  for (const auto& e : a.history.epochs) EXPECT_LE(*e.valid_auc, *a.history.best_auc);

  // the kept model is the best epoch's, not the last one
  const auto valid_ptrs = sequence_pointers(valid_set);
  EXPECT_DOUBLE_EQ(auc(predict(a.model, std::span<const TokenizedSequence* const>(valid_ptrs)),
                       dataset_labels(valid_set)),
                   *a.history.best_auc);
}

TEST(Train, StopsOnceValidationAucIsReached) {
  const auto course = small_course(160, 5);
  LabeledDataset train_set(course.data.begin(), course.data.begin() + 120);
  LabeledDataset valid_set(course.data.begin() + 120, course.data.end());
  TrainConfig config;
  config.epochs = 6;
  config.learning_rate = 1e-2;
  config.seed = 3;
  config.stop_auc = 0.0;
  const auto model = make_model<float>(GritNetConfig::for_schema(course.schema, 16, 8, 3), course.schema,
                                       max_length(train_set));
  const auto r = train(model, train_set, valid_set, config);
  ASSERT_EQ(r.history.epochs.size(), 1u);
  EXPECT_EQ(r.history.best_epoch, 1);
}

TEST(Train, RejectsDegenerateInput) {
  const auto course = small_course(20, 6);
  auto model = make_model<float>(GritNetConfig::for_schema(course.schema, 4, 2, 1), course.schema, 10);
  LabeledDataset one_class = course.data;
  for (auto& s : one_class) s.label = 0;
  EXPECT_EQ(kind_of([&] { train(model, one_class, {}, {}); }), ErrorKind::stratification);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_EQ(kind_of([&] { train(model, course.data, {}, bad); }), ErrorKind::config);
}

TEST(Train, WeeklyModelsAreSizedOnTruncatedData) {
  const auto course = small_course(80, 7);
  TrainConfig config;
  config.epochs = 1;
  config.weeks = {1, 3};
  const auto outcomes = train_weekly<float>(course.schema, course.data, {},
                                            GritNetConfig::for_schema(course.schema, 4, 2, 1), config);
  ASSERT_EQ(outcomes.size(), 2u);
  for (int w : {1, 3}) {
    const auto& o = outcomes.at(w);
    ASSERT_TRUE(o.result);
    EXPECT_EQ(o.result->model.t_max, max_length(truncate_dataset(course.data, w)));
  }
  EXPECT_LE(outcomes.at(1).result->model.t_max, outcomes.at(3).result->model.t_max);
}

TEST(Truncate, DropsEmptyAndKeepsLabels) {
  LabeledDataset data{{{"a", {{0, 0}}, {0}}, 1}, {{"b", {}, {}}, 0}};
  std::size_t dropped = 9;
  const auto out = truncate_dataset(data, 1, &dropped);
  EXPECT_EQ(dropped, 1u);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].label, 1);
}

class Adaptation : public ::testing::Test {
 protected:
  void SetUp() override {
    course_ = small_course(120, 8);
    target_ = small_course(100, 9, 1.3);
    TrainConfig config;
    config.epochs = 3;
    config.learning_rate = 1e-2;
    source_ = train(make_model<float>(GritNetConfig::for_schema(course_.schema, 8, 4, 2), course_.schema,
                                      max_length(course_.data)),
                    course_.data, {}, config)
                  .model;
  }
  Course course_, target_;
  GritNetModel<float> source_ = make_model<float>(GritNetConfig::for_schema({1, 1, 1, 1}, 1, 1, 0), {1, 1, 1, 1}, 1);
};

TEST_F(Adaptation, FineTuneChangesOnlyTheOutputLayer) {
  const auto ptrs = sequence_pointers(target_.data);
  const auto emb = sequence_embeddings(source_, std::span<const TokenizedSequence* const>(ptrs));
  AdaptConfig config;
  config.learning_rate = 1e-2;
  const auto tuned = fine_tune_fc(source_, emb, dataset_labels(target_.data), config, 1);
  EXPECT_EQ(frozen_parameter_hash(tuned), frozen_parameter_hash(source_));
  EXPECT_NE(tuned.params.fc_w.value, source_.params.fc_w.value);
  EXPECT_NO_THROW(check_frozen(source_, tuned));
  for (const auto* p : tuned.params.all()) EXPECT_TRUE(p->trainable) << p->name;

  // embeddings of the tuned model equal the cached ones
  EXPECT_EQ(sequence_embeddings(tuned, std::span<const TokenizedSequence* const>(ptrs)), emb);
}

TEST_F(Adaptation, CheckFrozenCatchesChanges) {
  auto changed = source_;
  changed.params.backward.wh.value[0] += 1e-3f;
  EXPECT_EQ(kind_of([&] { check_frozen(source_, changed); }), ErrorKind::check_failure);
  auto fc_only = source_;
  fc_only.params.fc_b.value[0] += 1.0f;
  EXPECT_NO_THROW(check_frozen(source_, fc_only));
}

TEST_F(Adaptation, GridRunsAndSelection) {
  const auto ptrs = sequence_pointers(target_.data);
  AdaptConfig config;
  const auto result = adapt(source_, target_.schema, std::span<const TokenizedSequence* const>(ptrs), config, 4);
  EXPECT_FALSE(result.remapped);
  ASSERT_EQ(result.runs.size(), 4u);
  EXPECT_EQ(result.source_predictions.size(), target_.data.size());
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& run = result.runs[r];
    EXPECT_EQ(run.theta, config.thresholds[r]);
    if (run.model) {
      EXPECT_EQ(frozen_parameter_hash(*run.model), frozen_parameter_hash(source_));
    } else {
      EXPECT_FALSE(run.error.empty());
    }
  }
  ASSERT_TRUE(result.selected);
  EXPECT_TRUE(result.runs[*result.selected].model);
  // pseudo-label counts use the source predictions on the fitting rows
  for (const auto& run : result.runs) EXPECT_LE(run.positives + run.negatives, target_.data.size());

  const auto again = adapt(source_, target_.schema, std::span<const TokenizedSequence* const>(ptrs), config, 4);
  EXPECT_EQ(checkpoint_hash(again.selected_model()), checkpoint_hash(result.selected_model()));
}

TEST_F(Adaptation, AllSingleClassPseudoLabelsFail) {
  auto silent = source_;
  silent.params.fc_w.value.fill(0.0f);
  silent.params.fc_b.value.fill(-10.0f);  // every prediction far below 0.1
  const auto ptrs = sequence_pointers(target_.data);
  EXPECT_EQ(kind_of([&] { adapt(silent, target_.schema, std::span<const TokenizedSequence* const>(ptrs), {}, 1); }),
            ErrorKind::degenerate_labels);
}

TEST_F(Adaptation, RemapsOtherSchemas) {
  const CourseSchema other{15, 4, 3, 30};
  bool remapped = false;
  RemapStats stats;
  const auto prepared = prepare_for_target(source_, other, 1, &stats, &remapped);
  EXPECT_TRUE(remapped);
  EXPECT_EQ(prepared.schema, other);
  EXPECT_EQ(prepared.t_max, source_.t_max);
  EXPECT_GT(stats.fresh_rows, 0u);
  bool same = true;
  const auto copy = prepare_for_target(source_, course_.schema, 1, nullptr, &same);
  EXPECT_FALSE(same);
  EXPECT_EQ(checkpoint_hash(copy), checkpoint_hash(source_));
}

TEST_F(Adaptation, OracleChecksInputs) {
  const auto ptrs = sequence_pointers(target_.data);
  auto labels = dataset_labels(target_.data);
  const auto oracle = oracle_adapt(source_, target_.schema, std::span<const TokenizedSequence* const>(ptrs), labels, {}, 2);
  EXPECT_EQ(frozen_parameter_hash(oracle), frozen_parameter_hash(source_));
  labels.pop_back();
  EXPECT_EQ(kind_of([&] {
              oracle_adapt(source_, target_.schema, std::span<const TokenizedSequence* const>(ptrs), labels, {}, 2);
            }),
            ErrorKind::shape);
}
