#include "gritnet/baseline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "gritnet/error.hpp"
#include "gritnet/random.hpp"

namespace gritnet {

FeatureVector featurize(std::span<const RawEvent> events, int week) {
  if (week < 1) fail(ErrorKind::config, "week must be >= 1");
  FeatureVector f{};
  if (events.empty()) return f;
  const Day end = events.front().day + 7 * static_cast<Day>(week);
  std::unordered_set<Day> days;
  for (const auto& e : events) {
    if (e.day >= end) break;
    switch (e.outcome) {
      case Outcome::none: f[0] += 1; break;
      case Outcome::correct: f[1] += 1; break;
      case Outcome::incorrect: f[2] += 1; break;
      case Outcome::pass: f[3] += 1; break;
      case Outcome::fail: f[4] += 1; break;
    }
    days.insert(e.day);
    f[6] += 1;
  }
  f[5] = static_cast<double>(days.size());
  return f;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(const FeatureVector& w, const FeatureVector& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) s += w[i] * x[i];
  return s;
}

}  // namespace

LogRegGradient logreg_loss_and_grad(const FeatureVector& weights, double bias,
                                    std::span<const FeatureVector> standardized,
                                    std::span<const int> labels, double l2) {
  if (standardized.size() != labels.size() || labels.empty()) {
    fail(ErrorKind::shape, "logreg: features and labels differ in length");
  }
  LogRegGradient g;
  const double n = static_cast<double>(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double z = dot(weights, standardized[r]) + bias;
    const double y = labels[r];
    g.loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) / n;
    const double d = (sigmoid(z) - y) / n;
    for (std::size_t i = 0; i < kFeatureCount; ++i) g.weights[i] += d * standardized[r][i];
    g.bias += d;
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    g.loss += 0.5 * l2 * weights[i] * weights[i];
    g.weights[i] += l2 * weights[i];
  }
  return g;
}

FeatureVector standardize(const LogRegModel& model, const FeatureVector& features) {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out[i] = (features[i] - model.mean[i]) / model.scale[i];
  }
  return out;
}

LogRegModel train_logreg(std::span<const FeatureVector> features, std::span<const int> labels,
                         const LogRegConfig& config) {
  if (features.size() != labels.size() || features.empty()) {
    fail(ErrorKind::empty_input, "train_logreg: no training rows");
  }
  std::size_t positives = 0;
  for (int y : labels) positives += y == 1;
  if (positives == 0 || positives == labels.size()) {
    fail(ErrorKind::stratification, "train_logreg: training labels contain a single class");
  }
  if (config.epochs < 1) fail(ErrorKind::config, "train_logreg: epochs must be >= 1");

  LogRegModel m;
  const double n = static_cast<double>(features.size());
  for (const auto& f : features) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) m.mean[i] += f[i] / n;
  }
  for (const auto& f : features) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      m.scale[i] += (f[i] - m.mean[i]) * (f[i] - m.mean[i]) / n;
    }
  }
  for (auto& s : m.scale) s = s > 0 ? std::sqrt(s) : 1.0;

  std::vector<FeatureVector> x;
  x.reserve(features.size());
  for (const auto& f : features) x.push_back(standardize(m, f));

  Rng rng(derive_seed(config.seed, 0x6c6f67ULL));
  for (auto& w : m.weights) w = uniform(rng, -1e-3, 1e-3);

  // The L2 term is applied as a proximal step so any l2 >= 0 stays stable.
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto g = logreg_loss_and_grad(m.weights, m.bias, x, labels, 0.0);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      m.weights[i] = (m.weights[i] - config.learning_rate * g.weights[i]) /
                     (1.0 + config.learning_rate * config.l2);
    }
    m.bias -= config.learning_rate * g.bias;
  }
  return m;
}

double predict(const LogRegModel& model, std::span<const double> features) {
  if (features.size() != kFeatureCount) {
    fail(ErrorKind::shape, "predict: expected " + std::to_string(kFeatureCount) + " features, got " +
                               std::to_string(features.size()));
  }
  FeatureVector f;
  std::copy(features.begin(), features.end(), f.begin());
  return sigmoid(dot(model.weights, standardize(model, f)) + model.bias);
}

std::vector<double> predict(const LogRegModel& model, std::span<const FeatureVector> features) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(predict(model, std::span<const double>(f)));
  return out;
}

void save_logreg(const LogRegModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  auto row = [&](const char* name, const FeatureVector& v) {
    out << name;
    for (double x : v) out << ' ' << x;
    out << '\n';
  };
  row("mean", model.mean);
  row("scale", model.scale);
  row("weights", model.weights);
  out << "bias " << model.bias << '\n';
}

LogRegModel load_logreg(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  LogRegModel m;
  std::string name;
  auto row = [&](const char* expected, FeatureVector& v) {
    if (!(in >> name) || name != expected) fail(ErrorKind::corrupt_file, path.string() + ": expected " + expected);
    for (double& x : v) {
      if (!(in >> x)) fail(ErrorKind::corrupt_file, path.string() + ": truncated row " + expected);
    }
  };
  row("mean", m.mean);
  row("scale", m.scale);
  row("weights", m.weights);
  if (!(in >> name) || name != "bias" || !(in >> m.bias)) {
    fail(ErrorKind::corrupt_file, path.string() + ": missing bias");
  }
  return m;
}

}  // namespace gritnet
