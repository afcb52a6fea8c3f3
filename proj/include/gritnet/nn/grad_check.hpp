#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "gritnet/nn/tensor.hpp"

namespace gritnet::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: gradients smaller than this are compared absolutely.
  double floor = 1e-6;
  /// Check every `stride`-th entry of each parameter.
  std::size_t stride = 1;
};

/// Compares analytic gradients against central differences. `loss` evaluates
/// the scalar objective at the current parameter values; `backward` must zero
/// and fill every parameter's grad.
inline GradCheckReport measure_gradients(const std::function<double()>& loss,
                                         const std::function<void()>& backward,
                                         std::span<Parameter<double>* const> params,
                                         const GradCheckOptions& options = {}) {
  backward();
  GradCheckReport report;
  for (Parameter<double>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); i += std::max<std::size_t>(1, options.stride)) {
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double up = loss();
      p->value[i] = saved - options.step;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.entries_checked;
      if (report.entries_checked == 1 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

/// measure_gradients, raising a check failure naming the worst parameter when
/// the relative error exceeds `tolerance`.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::function<void()>& backward,
                                  std::span<Parameter<double>* const> params, double tolerance,
                                  const GradCheckOptions& options = {}) {
  auto report = measure_gradients(loss, backward, params, options);
  if (!(report.max_relative_error <= tolerance)) {
    fail(ErrorKind::check_failure,
         "gradient check failed: '" + report.worst_parameter + "'[" +
             std::to_string(report.worst_index) + "] analytic " + std::to_string(report.analytic) +
             " vs numeric " + std::to_string(report.numeric) + " (relative error " +
             std::to_string(report.max_relative_error) + ")");
  }
  return report;
}

}  // namespace gritnet::nn
