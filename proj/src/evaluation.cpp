#include "gritnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gritnet/error.hpp"

namespace gritnet {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::shape, "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) positives += y == 1 ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorKind::undefined_auc, "auc is undefined with a single class present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the 1-based average rank keeps every value an integer.
  double positive_rank_sum_x2 = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double rank_x2 = static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]] == 1) positive_rank_sum_x2 += rank_x2;
    }
    start = end;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum_x2 / 2.0 - p * (p + 1.0) / 2.0;
  return 100.0 * u / (p * static_cast<double>(negatives));
}

std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return auc(scores, labels);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::undefined_auc) return std::nullopt;
    throw;
  }
}

double arr(double auc_baseline, double auc_adapted, double auc_oracle) {
  const double denom = auc_oracle - auc_baseline;
  if (denom == 0.0) {
    fail(ErrorKind::undefined_arr, "ARR is undefined when oracle and baseline AUC coincide");
  }
  return (auc_adapted - auc_baseline) / denom;
}

const CurvePoint* WeeklyCurve::at_week(int week) const {
  for (const auto& p : points) {
    if (p.week == week) return &p;
  }
  return nullptr;
}

WeeklyCurve weekly_curve(std::string system, const FoldAucs& fold_aucs) {
  WeeklyCurve curve{std::move(system), {}};
  for (const auto& [week, values] : fold_aucs) {
    CurvePoint point;
    point.week = week;
    double sum = 0.0;
    for (const auto& v : values) {
      if (!v) {
        ++point.undefined;
        continue;
      }
      sum += *v;
      ++point.folds;
    }
    if (point.folds == 0) {
      point.mean_auc = std::nan("");
      point.std_auc = std::nan("");
    } else {
      point.mean_auc = sum / static_cast<double>(point.folds);
      double sq = 0.0;
      for (const auto& v : values) {
        if (v) sq += (*v - point.mean_auc) * (*v - point.mean_auc);
      }
      point.std_auc = std::sqrt(sq / static_cast<double>(point.folds));
    }
    curve.points.push_back(point);
  }
  return curve;
}

WeeklyCurve weekly_curve(std::string system, std::span<const int> weeks, std::size_t folds,
                         const FoldScorer& scorer) {
  FoldAucs aucs;
  for (int week : weeks) {
    auto& row = aucs[week];
    for (std::size_t f = 0; f < folds; ++f) {
      const auto [scores, labels] = scorer(week, f);
      row.push_back(try_auc(scores, labels));
    }
  }
  return weekly_curve(std::move(system), aucs);
}

ArrReport arr_report(const WeeklyCurve& baseline, const WeeklyCurve& adapted,
                     const WeeklyCurve& oracle, int first_week, int last_week) {
  ArrReport report;
  report.first_week = first_week;
  report.last_week = last_week;
  double sum = 0.0;
  std::size_t defined = 0;
  for (int week = first_week; week <= last_week; ++week) {
    const auto* b = baseline.at_week(week);
    const auto* a = adapted.at_week(week);
    const auto* o = oracle.at_week(week);
    if (!b || !a || !o) continue;
    std::optional<double> value;
    try {
      value = arr(b->mean_auc, a->mean_auc, o->mean_auc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::undefined_arr) throw;
    }
    if (value && !std::isfinite(*value)) value.reset();
    if (value) {
      sum += *value;
      ++defined;
    }
    report.per_week.emplace_back(week, value);
  }
  if (defined > 0) report.mean = sum / static_cast<double>(defined);
  return report;
}

std::string format_arr_table(const ArrReport& report, const std::string& adapted_name) {
  std::ostringstream out;
  out << "ARR (" << adapted_name << ") weeks " << report.first_week << "-" << report.last_week
      << "\n";
  out << "week,arr\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& [week, value] : report.per_week) {
    out << week << ',';
    if (value) {
      out << *value;
    } else {
      out << "undefined";
    }
    out << '\n';
  }
  out << "mean,";
  if (report.mean) {
    out << *report.mean;
  } else {
    out << "undefined";
  }
  out << '\n';
  return out.str();
}

std::string curves_csv(std::span<const WeeklyCurve> curves) {
  std::ostringstream out;
  out << "system,week,mean_auc,std_auc\n" << std::fixed << std::setprecision(6);
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out << c.system << ',' << p.week << ',' << p.mean_auc << ',' << p.std_auc << '\n';
    }
  }
  return out.str();
}

std::vector<WeeklyCurve> parse_curves_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("system,week,mean_auc,std_auc", 0) != 0) {
    fail(ErrorKind::config, "curve CSV must start with 'system,week,mean_auc,std_auc'");
  }
  std::vector<WeeklyCurve> curves;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string system, week, mean, sd;
    if (!std::getline(row, system, ',') || !std::getline(row, week, ',') ||
        !std::getline(row, mean, ',') || !std::getline(row, sd, ',')) {
      fail(ErrorKind::config, "malformed curve row '" + line + "'");
    }
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const WeeklyCurve& c) { return c.system == system; });
    if (it == curves.end()) {
      curves.push_back({system, {}});
      it = std::prev(curves.end());
    }
    CurvePoint p;
    try {
      p.week = std::stoi(week);
      p.mean_auc = std::stod(mean);
      p.std_auc = std::stod(sd);
    } catch (const std::exception&) {
      fail(ErrorKind::config, "malformed curve row '" + line + "'");
    }
    p.folds = 1;
    it->points.push_back(p);
  }
  return curves;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string curves_svg(std::span<const WeeklyCurve> curves, const std::string& title) {
  constexpr double width = 720, height = 440, left = 60, right = 200, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  int min_week = 0, max_week = 0;
  double lo = 100.0, hi = 0.0;
  bool any = false;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      if (!std::isfinite(p.mean_auc)) continue;
      if (!any) min_week = max_week = p.week;
      min_week = std::min(min_week, p.week);
      max_week = std::max(max_week, p.week);
      lo = std::min(lo, p.mean_auc);
      hi = std::max(hi, p.mean_auc);
      any = true;
    }
  }
  if (!any) {
    lo = 0;
    hi = 100;
    min_week = max_week = 1;
  }
  lo = std::max(0.0, std::floor((lo - 2.0) / 5.0) * 5.0);
  hi = std::min(100.0, std::ceil((hi + 2.0) / 5.0) * 5.0);
  if (hi <= lo) hi = lo + 5.0;
  const double span_w = std::max(1, max_week - min_week);
  auto sx = [&](double week) { return left + (week - min_week) / span_w * plot_w; };
  auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    out << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\">"
        << escape(title) << "</text>\n";
  }
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double v = lo; v <= hi + 1e-9; v += 5.0) {
    out << "<line x1=\"" << left << "\" y1=\"" << num(sy(v)) << "\" x2=\"" << num(left + plot_w)
        << "\" y2=\"" << num(sy(v)) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(v) + 4)
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  for (int w = min_week; w <= max_week; ++w) {
    out << "<text x=\"" << num(sx(w)) << "\" y=\"" << num(top + plot_h + 18)
        << "\" text-anchor=\"middle\">" << w << "</text>\n";
  }
  out << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(height - 10)
      << "\" text-anchor=\"middle\">Week</text>\n";
  out << "<text x=\"16\" y=\"" << num(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num(top + plot_h / 2) << ")\">AUC (%)</text>\n";

  std::size_t index = 0;
  for (const auto& c : curves) {
    const char* color = kPalette[index % std::size(kPalette)];
    std::ostringstream pts;
    for (const auto& p : c.points) {
      if (!std::isfinite(p.mean_auc)) continue;
      pts << num(sx(p.week)) << ',' << num(sy(p.mean_auc)) << ' ';
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
        << pts.str() << "\"/>\n";
    for (const auto& p : c.points) {
      if (!std::isfinite(p.mean_auc)) continue;
      out << "<circle cx=\"" << num(sx(p.week)) << "\" cy=\"" << num(sy(p.mean_auc))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 14 + 20.0 * static_cast<double>(index);
    out << "<line x1=\"" << num(left + plot_w + 14) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(left + plot_w + 38) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(left + plot_w + 44) << "\" y=\"" << num(ly + 4) << "\">"
        << escape(c.system) << "</text>\n";
    ++index;
  }
  out << "</svg>\n";
  return out.str();
}

PlotFiles emit_plot(std::span<const WeeklyCurve> curves, const std::filesystem::path& stem,
                    const std::string& title) {
  if (curves.empty()) fail(ErrorKind::usage, "emit_plot needs at least one curve");
  PlotFiles files{stem, stem};
  files.csv += ".csv";
  files.svg += ".svg";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + p.string() + "'");
    out << text;
  };
  write(files.csv, curves_csv(curves));
  write(files.svg, curves_svg(curves, title));
  return files;
}

}  // namespace gritnet
