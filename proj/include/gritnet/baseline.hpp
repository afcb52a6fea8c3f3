#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gritnet/events.hpp"

namespace gritnet {

/// Schema-agnostic activity counts over a week window: content views, quiz
/// correct, quiz incorrect, project pass, project fail, distinct active days,
/// total events.
inline constexpr std::size_t kFeatureCount = 7;
using FeatureVector = std::array<double, kFeatureCount>;

/// `events` must be sorted by day; the window is anchored at the first event.
FeatureVector featurize(std::span<const RawEvent> events, int week);

struct LogRegConfig {
  double l2 = 1e-3;
  int epochs = 400;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

struct LogRegModel {
  FeatureVector mean{};
  FeatureVector scale{};  // train-set standard deviation, 1 where constant
  FeatureVector weights{};
  double bias = 0.0;
};

struct LogRegGradient {
  double loss = 0.0;
  FeatureVector weights{};
  double bias = 0.0;
};

/// Mean logistic loss plus (l2 / 2) * |w|^2 on already-standardized rows.
LogRegGradient logreg_loss_and_grad(const FeatureVector& weights, double bias,
                                    std::span<const FeatureVector> standardized,
                                    std::span<const int> labels, double l2);

/// Standardizes with train-set statistics, then runs full-batch proximal
/// gradient descent on the L2-regularized logistic loss.
LogRegModel train_logreg(std::span<const FeatureVector> features, std::span<const int> labels,
                         const LogRegConfig& config);

FeatureVector standardize(const LogRegModel& model, const FeatureVector& features);

double predict(const LogRegModel& model, std::span<const double> features);
std::vector<double> predict(const LogRegModel& model, std::span<const FeatureVector> features);

void save_logreg(const LogRegModel& model, const std::filesystem::path& path);
LogRegModel load_logreg(const std::filesystem::path& path);

}  // namespace gritnet
