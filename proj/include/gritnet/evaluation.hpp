#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gritnet {

/// Area under the ROC curve in percent, from average-rank statistics
/// (Mann-Whitney U; ties count one half). Throws undefined_auc when only one
/// class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// auc() that reports a single-class input as nullopt instead of throwing.
std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels);

/// AUC recovery rate: (adapted - baseline) / (oracle - baseline). Oracle
/// training recovers 100% by definition. Throws undefined_arr when the oracle
/// and baseline coincide.
double arr(double auc_baseline, double auc_adapted, double auc_oracle);

struct CurvePoint {
  int week = 0;
  double mean_auc = 0.0;
  double std_auc = 0.0;
  std::size_t folds = 0;      // folds with a defined AUC
  std::size_t undefined = 0;  // folds whose AUC was undefined
};

struct WeeklyCurve {
  std::string system;
  std::vector<CurvePoint> points;  // strictly increasing weeks

  const CurvePoint* at_week(int week) const;
};

/// Per-fold AUCs keyed by week; nullopt marks an undefined fold AUC.
using FoldAucs = std::map<int, std::vector<std::optional<double>>>;

/// Mean and population standard deviation over the defined fold AUCs.
WeeklyCurve weekly_curve(std::string system, const FoldAucs& fold_aucs);

/// Scores every (week, fold) pair with `scorer`, which returns (scores,
/// labels) for that fold's evaluation set.
using FoldScorer =
    std::function<std::pair<std::vector<double>, std::vector<int>>(int week, std::size_t fold)>;
WeeklyCurve weekly_curve(std::string system, std::span<const int> weeks, std::size_t folds,
                         const FoldScorer& scorer);

struct ArrReport {
  std::vector<std::pair<int, std::optional<double>>> per_week;  // nullopt: undefined
  std::optional<double> mean;  // mean of defined per-week values in range
  int first_week = 1;
  int last_week = 4;
};

ArrReport arr_report(const WeeklyCurve& baseline, const WeeklyCurve& adapted,
                     const WeeklyCurve& oracle, int first_week = 1, int last_week = 4);

std::string format_arr_table(const ArrReport& report, const std::string& adapted_name);

// ---- plot output -------------------------------------------------------------

/// CSV with header "system,week,mean_auc,std_auc", six decimals.
std::string curves_csv(std::span<const WeeklyCurve> curves);
std::vector<WeeklyCurve> parse_curves_csv(const std::string& text);
std::string curves_svg(std::span<const WeeklyCurve> curves, const std::string& title = {});

struct PlotFiles {
  std::filesystem::path csv;
  std::filesystem::path svg;
};

/// Writes <stem>.csv and <stem>.svg. Throws usage error on an empty curve list.
PlotFiles emit_plot(std::span<const WeeklyCurve> curves, const std::filesystem::path& stem,
                    const std::string& title = {});

}  // namespace gritnet
