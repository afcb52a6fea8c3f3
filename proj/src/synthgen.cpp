#include "gritnet/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gritnet/error.hpp"
#include "gritnet/random.hpp"

namespace gritnet {

void SyntheticCourseSpec::validate() const {
  schema.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::config, "synthetic spec: " + what);
  };
  require(term_days >= 7, "term_days must be >= 7");
  require(hazard > 0.0 && hazard <= 1.0, "hazard must lie in (0, 1]");
  require(dropout_hazard >= 0.0 && dropout_hazard < 1.0, "dropout_hazard must lie in [0, 1)");
  require(ability_alpha > 0 && ability_beta > 0, "ability Beta parameters must be positive");
  require(persistence_alpha > 0 && persistence_beta > 0,
          "persistence Beta parameters must be positive");
  require(enthusiasm_alpha > 0 && enthusiasm_beta > 0,
          "enthusiasm Beta parameters must be positive");
  require(engagement_decay >= 0.0, "engagement_decay must be non-negative");
  require(max_events_per_day >= 1, "max_events_per_day must be >= 1");
  require(events_per_day >= 1.0 && events_per_day <= max_events_per_day,
          "events_per_day must lie in [1, max_events_per_day]");
  require(difficulty >= 0.0, "difficulty must be non-negative");
  require(project_difficulty_start > 0 && project_difficulty_end > 0,
          "project difficulties must be positive");
  require(steps_to_complete > 0, "steps_to_complete must be positive");
  require(pacing > 0, "pacing must be positive");
}

namespace {

double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

struct StudentOutcome {
  int label = 0;
  double ability = 0;
  double persistence = 0;
};

StudentOutcome simulate_student(const SyntheticCourseSpec& spec, std::uint64_t seed,
                                std::size_t index, const std::string& id,
                                std::vector<RawEvent>* events) {
  Rng rng(derive_seed(seed, index));
  StudentOutcome out;
  const double ability = sample_beta(rng, spec.ability_alpha, spec.ability_beta);
  const double persistence = sample_beta(rng, spec.persistence_alpha, spec.persistence_beta);
  const double enthusiasm = sample_beta(rng, spec.enthusiasm_alpha, spec.enthusiasm_beta);
  out.ability = ability;
  out.persistence = persistence;

  const auto& s = spec.schema;
  const std::uint32_t k = s.num_projects;
  const double quiz_share =
      s.num_quizzes == 0 ? 0.0
                         : static_cast<double>(s.num_quizzes) / (s.num_contents + s.num_quizzes);
  const double activity = std::min(1.0, spec.hazard * spec.pacing * (0.35 + enthusiasm));
  const double decay = spec.engagement_decay * (1.0 - persistence);
  const double dropout = spec.dropout_hazard * (1.7 - 1.4 * persistence);
  const double speed = spec.pacing * (0.5 + ability);
  const double extra_event_p =
      spec.max_events_per_day > 1
          ? std::min(1.0, (spec.events_per_day - 1.0) /
                              static_cast<double>(spec.max_events_per_day - 1) *
                              (0.5 + enthusiasm))
          : 0.0;

  auto emit = [&](Day day, EventKind kind, std::uint32_t ordinal, Outcome outcome) {
    if (events) events->push_back({id, kind, ordinal, outcome, day});
  };
  auto ordinal_at = [](double r, std::uint32_t count) {
    const auto n = static_cast<std::uint32_t>(std::floor(r * count)) + 1;
    return std::min(n, count);
  };

  double progress = 0.0;
  std::uint32_t next_project = 1;
  int failures = 0;
  bool retry_quiz = false;
  bool graduated = false;

  for (int day = 0; day < spec.term_days && !graduated; ++day) {
    if (uniform01(rng) < dropout * (1.0 + spec.fail_dropout_boost * failures)) break;
    if (uniform01(rng) >= activity * std::exp(-decay * day)) continue;
    int n_events = 1;
    for (int e = 1; e < spec.max_events_per_day; ++e) n_events += uniform01(rng) < extra_event_p;

    for (int e = 0; e < n_events; ++e) {
      const double milestone = k == 0 ? 1.0 : static_cast<double>(next_project) / k;
      if (k > 0 && progress >= milestone - 1e-12) {
        const double r = k == 1 ? 1.0 : static_cast<double>(next_project - 1) / (k - 1);
        const double d = lerp(spec.project_difficulty_start, spec.project_difficulty_end, r) *
                         spec.difficulty;
        const bool pass = uniform01(rng) < logistic(spec.discrimination * (ability - d));
        emit(day, EventKind::project, next_project, pass ? Outcome::pass : Outcome::fail);
        if (pass) {
          if (++next_project > k) graduated = true;
        } else {
          ++failures;
        }
        break;  // a submission ends the day
      }
      if (k == 0 && progress >= 1.0) {
        graduated = true;
        break;
      }

      const double step = speed * uniform(rng, 0.5, 1.5) / spec.steps_to_complete;
      const double u = uniform01(rng);
      if (s.num_contents > 0 && progress > 0 && !retry_quiz &&
          u < spec.revisit_rate * (1.0 - ability) + spec.browse_rate * enthusiasm) {
        const auto current = ordinal_at(progress, s.num_contents);
        emit(day, EventKind::content, 1 + static_cast<std::uint32_t>(uniform_index(rng, current)),
             Outcome::none);
        continue;
      }
      if (s.num_quizzes > 0 && (retry_quiz || uniform01(rng) < quiz_share)) {
        const double d = lerp(spec.quiz_difficulty_start, spec.quiz_difficulty_end, progress) *
                         spec.difficulty;
        const bool correct = uniform01(rng) < logistic(spec.discrimination * (ability - d));
        emit(day, EventKind::quiz, ordinal_at(progress, s.num_quizzes),
             correct ? Outcome::correct : Outcome::incorrect);
        retry_quiz = !correct && uniform01(rng) < spec.quiz_retry_rate;
        if (!retry_quiz) progress += correct ? step : 0.5 * step;
      } else if (s.num_contents > 0) {
        emit(day, EventKind::content, ordinal_at(progress, s.num_contents), Outcome::none);
        progress += step;
      } else {
        progress += step;
      }
      progress = std::min(progress, milestone);
    }
  }
  out.label = graduated ? 1 : 0;
  return out;
}

std::string student_id(const std::string& prefix, std::size_t index) {
  std::ostringstream s;
  s << prefix << std::setw(5) << std::setfill('0') << index;
  return s.str();
}

}  // namespace

SyntheticCohort generate(const SyntheticCourseSpec& spec, std::size_t n_students,
                         std::uint64_t seed, const std::string& id_prefix) {
  spec.validate();
  if (n_students < 1) fail(ErrorKind::config, "generate needs at least one student");
  SyntheticCohort cohort;
  cohort.schema = spec.schema;
  for (std::size_t i = 0; i < n_students; ++i) {
    const auto id = student_id(id_prefix, i);
    const auto r = simulate_student(spec, seed, i, id, &cohort.events);
    cohort.labels.emplace_back(id, r.label);
    cohort.abilities.push_back(r.ability);
    cohort.persistence.push_back(r.persistence);
  }
  return cohort;
}

double graduation_rate(const SyntheticCourseSpec& spec, std::size_t n_students, std::uint64_t seed) {
  spec.validate();
  if (n_students == 0) fail(ErrorKind::config, "graduation_rate needs at least one student");
  std::size_t graduates = 0;
  for (std::size_t i = 0; i < n_students; ++i) {
    graduates += simulate_student(spec, seed, i, {}, nullptr).label;
  }
  return static_cast<double>(graduates) / static_cast<double>(n_students);
}

SyntheticCourseSpec calibrate(const SyntheticCourseSpec& spec, double target_rate,
                              std::size_t n_probe, std::uint64_t seed, double tolerance) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    fail(ErrorKind::config, "target graduation rate must lie strictly inside (0, 1)");
  }
  SyntheticCourseSpec probe = spec;
  auto rate_at = [&](double multiplier) {
    probe.difficulty = multiplier;
    return graduation_rate(probe, n_probe, seed);
  };

  const double easiest = rate_at(0.0);
  if (easiest < target_rate - tolerance) {
    std::ostringstream msg;
    msg << "target rate " << target_rate << " is unreachable: the easiest course graduates only "
        << easiest << " (dropout bounds the rate)";
    fail(ErrorKind::calibration, msg.str());
  }
  if (std::abs(easiest - target_rate) <= tolerance) {
    probe.difficulty = 0.0;
    return probe;
  }

  double lo = 0.0, hi = 1.0;
  double rate_hi = rate_at(hi);
  for (int i = 0; i < 16 && rate_hi > target_rate; ++i) {
    lo = hi;
    hi *= 2.0;
    rate_hi = rate_at(hi);
  }
  if (rate_hi > target_rate + tolerance) {
    fail(ErrorKind::calibration, "could not bracket the target rate");
  }
  if (std::abs(rate_hi - target_rate) <= tolerance) {
    probe.difficulty = hi;
    return probe;
  }
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate_at(mid);
    if (std::abs(r - target_rate) <= tolerance) {
      probe.difficulty = mid;
      return probe;
    }
    if (r > target_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  fail(ErrorKind::calibration, "bisection budget exhausted before reaching the target rate");
}

SyntheticCourseSpec shift(const SyntheticCourseSpec& spec, const ShiftSpec& shift_spec) {
  auto apply = [](std::uint32_t base, std::int64_t delta, const char* what) {
    const std::int64_t v = static_cast<std::int64_t>(base) + delta;
    if (v < 0) fail(ErrorKind::config, std::string("shift makes ") + what + " negative");
    return static_cast<std::uint32_t>(v);
  };
  if (!(shift_spec.difficulty_multiplier >= 0.0) || !(shift_spec.pacing_multiplier > 0.0)) {
    fail(ErrorKind::config, "shift multipliers must be positive");
  }
  SyntheticCourseSpec out = spec;
  out.schema.num_contents = apply(spec.schema.num_contents, shift_spec.delta_contents, "contents");
  out.schema.num_quizzes = apply(spec.schema.num_quizzes, shift_spec.delta_quizzes, "quizzes");
  out.schema.num_projects = apply(spec.schema.num_projects, shift_spec.delta_projects, "projects");
  out.difficulty = spec.difficulty * shift_spec.difficulty_multiplier;
  out.pacing = spec.pacing * shift_spec.pacing_multiplier;
  out.validate();
  return out;
}

std::vector<std::string> preset_names() { return {"nd_a_v1", "nd_a_v2", "nd_b", "nd_c", "symmetric"}; }

SyntheticCourseSpec preset_spec(const std::string& name) {
  SyntheticCourseSpec s;
  s.name = name;
  if (name == "nd_a_v1") {
    s.schema = {471, 168, 4, 30};
  } else if (name == "nd_a_v2") {
    s.schema = {471, 168, 4, 30};
    s.pacing = 1.3;
  } else if (name == "nd_b") {
    s.schema = {568, 84, 10, 30};
  } else if (name == "nd_c") {
    s.schema = {346, 50, 5, 30};
  } else if (name == "symmetric") {
    s.schema = {40, 20, 2, 30};
    s.dropout_hazard = 0.0;
    s.hazard = 1.0;
    s.term_days = 120;
    s.quiz_difficulty_start = s.quiz_difficulty_end = 0.5;
    s.project_difficulty_start = s.project_difficulty_end = 0.96;
  } else {
    fail(ErrorKind::config, "unknown preset '" + name + "'");
  }
  return s;
}

double preset_graduation_rate(const std::string& name) {
  if (name == "nd_a_v1") return 0.214;
  if (name == "nd_a_v2") return 0.203;
  if (name == "nd_b") return 0.394;
  if (name == "nd_c") return 0.462;
  if (name == "symmetric") return 0.5;
  fail(ErrorKind::config, "unknown preset '" + name + "'");
}

SpecFile read_spec_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "spec file '" + path.string() + "' not found");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  SpecFile file;
  auto& s = file.spec;
  if (auto preset = tree.get_optional<std::string>("preset")) {
    s = preset_spec(*preset);
    file.target_rate = preset_graduation_rate(*preset);
  }
  const std::set<std::string> known = {
      "preset", "name", "num_contents", "num_quizzes", "num_projects", "delta_cap", "term_days",
      "ability_alpha", "ability_beta", "persistence_alpha", "persistence_beta", "enthusiasm_alpha",
      "enthusiasm_beta", "engagement_decay", "hazard",
      "dropout_hazard", "fail_dropout_boost", "events_per_day", "max_events_per_day",
      "difficulty", "quiz_difficulty_start", "quiz_difficulty_end", "project_difficulty_start",
      "project_difficulty_end", "discrimination", "revisit_rate", "browse_rate", "quiz_retry_rate",
      "steps_to_complete", "pacing", "seed", "target_rate", "calibration_probe"};
  for (const auto& [key, value] : tree) {
    if (!known.contains(key)) fail(ErrorKind::config, path.string() + ": unknown key '" + key + "'");
    if (!value.empty()) fail(ErrorKind::config, path.string() + ": sections are not supported");
  }
  try {
    s.name = tree.get("name", s.name);
    s.schema.num_contents = tree.get("num_contents", s.schema.num_contents);
    s.schema.num_quizzes = tree.get("num_quizzes", s.schema.num_quizzes);
    s.schema.num_projects = tree.get("num_projects", s.schema.num_projects);
    s.schema.delta_cap = tree.get("delta_cap", s.schema.delta_cap);
    s.term_days = tree.get("term_days", s.term_days);
    s.ability_alpha = tree.get("ability_alpha", s.ability_alpha);
    s.ability_beta = tree.get("ability_beta", s.ability_beta);
    s.persistence_alpha = tree.get("persistence_alpha", s.persistence_alpha);
    s.persistence_beta = tree.get("persistence_beta", s.persistence_beta);
    s.enthusiasm_alpha = tree.get("enthusiasm_alpha", s.enthusiasm_alpha);
    s.enthusiasm_beta = tree.get("enthusiasm_beta", s.enthusiasm_beta);
    s.engagement_decay = tree.get("engagement_decay", s.engagement_decay);
    s.hazard = tree.get("hazard", s.hazard);
    s.dropout_hazard = tree.get("dropout_hazard", s.dropout_hazard);
    s.fail_dropout_boost = tree.get("fail_dropout_boost", s.fail_dropout_boost);
    s.events_per_day = tree.get("events_per_day", s.events_per_day);
    s.max_events_per_day = tree.get("max_events_per_day", s.max_events_per_day);
    s.difficulty = tree.get("difficulty", s.difficulty);
    s.quiz_difficulty_start = tree.get("quiz_difficulty_start", s.quiz_difficulty_start);
    s.quiz_difficulty_end = tree.get("quiz_difficulty_end", s.quiz_difficulty_end);
    s.project_difficulty_start = tree.get("project_difficulty_start", s.project_difficulty_start);
    s.project_difficulty_end = tree.get("project_difficulty_end", s.project_difficulty_end);
    s.discrimination = tree.get("discrimination", s.discrimination);
    s.revisit_rate = tree.get("revisit_rate", s.revisit_rate);
    s.browse_rate = tree.get("browse_rate", s.browse_rate);
    s.quiz_retry_rate = tree.get("quiz_retry_rate", s.quiz_retry_rate);
    s.steps_to_complete = tree.get("steps_to_complete", s.steps_to_complete);
    s.pacing = tree.get("pacing", s.pacing);
    s.seed = tree.get("seed", s.seed);
    if (auto t = tree.get_optional<double>("target_rate")) file.target_rate = *t;
    file.calibration_probe = tree.get("calibration_probe", file.calibration_probe);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  s.validate();
  return file;
}

void write_spec_file(const std::filesystem::path& path, const SyntheticCourseSpec& s) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  out << "name = " << s.name << '\n'
      << "num_contents = " << s.schema.num_contents << '\n'
      << "num_quizzes = " << s.schema.num_quizzes << '\n'
      << "num_projects = " << s.schema.num_projects << '\n'
      << "delta_cap = " << s.schema.delta_cap << '\n'
      << "term_days = " << s.term_days << '\n'
      << "ability_alpha = " << s.ability_alpha << '\n'
      << "ability_beta = " << s.ability_beta << '\n'
      << "persistence_alpha = " << s.persistence_alpha << '\n'
      << "persistence_beta = " << s.persistence_beta << '\n'
      << "enthusiasm_alpha = " << s.enthusiasm_alpha << '\n'
      << "enthusiasm_beta = " << s.enthusiasm_beta << '\n'
      << "engagement_decay = " << s.engagement_decay << '\n'
      << "hazard = " << s.hazard << '\n'
      << "dropout_hazard = " << s.dropout_hazard << '\n'
      << "fail_dropout_boost = " << s.fail_dropout_boost << '\n'
      << "events_per_day = " << s.events_per_day << '\n'
      << "max_events_per_day = " << s.max_events_per_day << '\n'
      << "difficulty = " << s.difficulty << '\n'
      << "quiz_difficulty_start = " << s.quiz_difficulty_start << '\n'
      << "quiz_difficulty_end = " << s.quiz_difficulty_end << '\n'
      << "project_difficulty_start = " << s.project_difficulty_start << '\n'
      << "project_difficulty_end = " << s.project_difficulty_end << '\n'
      << "discrimination = " << s.discrimination << '\n'
      << "revisit_rate = " << s.revisit_rate << '\n'
      << "browse_rate = " << s.browse_rate << '\n'
      << "quiz_retry_rate = " << s.quiz_retry_rate << '\n'
      << "steps_to_complete = " << s.steps_to_complete << '\n'
      << "pacing = " << s.pacing << '\n'
      << "seed = " << s.seed << '\n';
}

}  // namespace gritnet
