#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gritnet/config.hpp"
#include "gritnet/evaluation.hpp"

namespace gritnet {

// System names used in curve files and ARR tables.
inline constexpr const char* kBaselineSystem = "gritnet_baseline";
inline constexpr const char* kVanillaSystem = "vanilla_baseline";
inline constexpr const char* kAdaptedSystem = "gritnet_adapted";  // self-selected threshold
inline constexpr const char* kOracleSystem = "gritnet_oracle";
std::string theta_tag(double theta);         // 0.1 -> "0.1"
std::string adapted_system(double theta);    // "gritnet_adapted_theta0.1"

/// A course on disk: events.jsonl, labels.csv (optional for targets), schema.ini.
struct CourseFiles {
  std::filesystem::path events;
  std::filesystem::path labels;
  std::filesystem::path schema;

  static CourseFiles in(const std::filesystem::path& dir);
};

struct GenerateOptions {
  std::optional<std::filesystem::path> spec;
  std::optional<std::string> preset;
  std::size_t students = 1000;
  std::uint64_t seed = 1;
  std::filesystem::path out;
};

struct GenerateResult {
  SyntheticCourseSpec spec;  // after calibration
  CourseFiles files;
  double graduation_rate = 0.0;
};

GenerateResult cmd_generate(const GenerateOptions& options);

/// Writes one simulated cohort of `spec` to `out`.
GenerateResult write_cohort(const SyntheticCourseSpec& spec, std::size_t students, std::uint64_t seed,
                            const std::filesystem::path& out);

struct TrainOptions {
  std::filesystem::path data;  // course directory with labels
  std::filesystem::path out;
  ExperimentConfig config;
  std::uint64_t seed = 1;
};

struct TrainSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path report;
  std::vector<std::string> notices;
};

/// Per week and fold: a GritNet checkpoint and a logistic-regression baseline
/// trained on the same students. With folds = 1 a stratified holdout selects
/// the epoch and files are named week{w}.ckpt.
TrainSummary cmd_train(const TrainOptions& options);

struct AdaptOptions {
  std::filesystem::path source;  // cmd_train output directory
  std::filesystem::path target;  // course directory; labels only used for folds and the oracle
  std::filesystem::path out;
  ExperimentConfig config;
  std::uint64_t seed = 1;
  bool oracle = false;
  std::optional<std::filesystem::path> target_labels;
};

struct AdaptSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path report;
  std::vector<std::string> notices;
};

/// Per week: the source checkpoint carried into the target schema
/// (week{w}_source.ckpt). Per target fold: the threshold-grid models trained
/// on the other folds (week{w}_fold{f}_theta{t}.ckpt) and, with the oracle
/// flag, the true-label variant (week{w}_fold{f}_oracle.ckpt).
AdaptSummary cmd_adapt(const AdaptOptions& options);

struct EvaluateOptions {
  std::filesystem::path train;  // cmd_train output
  std::filesystem::path adapt;  // cmd_adapt output
  std::filesystem::path target;  // target course with labels
  std::filesystem::path out;
  ExperimentConfig config;
};

struct EvaluationResult {
  std::map<std::string, FoldAucs> fold_aucs;  // by system
  std::vector<WeeklyCurve> curves;
  std::map<std::string, ArrReport> arr;  // by adapted system
  std::vector<std::string> notices;
};

/// Scores every system on each held-out target fold and writes curves.csv,
/// curves.svg, fold_aucs.json and arr.txt.
EvaluationResult cmd_evaluate(const EvaluateOptions& options);

/// Curves and ARR reports from per-system fold AUCs.
EvaluationResult summarize(std::map<std::string, FoldAucs> fold_aucs);
void write_evaluation(const EvaluationResult& result, const std::filesystem::path& out,
                      const std::string& title);

struct PlotResult {
  PlotFiles files;
  std::optional<std::string> arr_table;
  std::vector<std::string> warnings;
};

/// Merges curve CSVs (later files win on a repeated system) into one CSV and
/// SVG; prints ARR tables when baseline, oracle and adapted curves are all present.
PlotResult cmd_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& stem);

struct ExperimentResult {
  EvaluationResult evaluation;  // fold AUCs pooled over seeds
  std::filesystem::path out;
  double seconds = 0.0;
  std::vector<std::string> notices;
};

/// generate -> train -> adapt -> evaluate for every seed, then pooled curves
/// and ARR tables in config.out.
ExperimentResult cmd_experiment(const ExperimentConfig& config);

/// Maps an exception to the CLI exit code: 2 for usage, config and missing
/// input files, 1 for everything else.
int exit_code_for(const Error& error);

}  // namespace gritnet
