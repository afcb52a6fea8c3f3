#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gritnet/events.hpp"

namespace gritnet {

/// Parameters of the synthetic course simulator. Each student carries three
/// latent traits drawn from Beta distributions: ability (quiz and project
/// success, pace, revisits), persistence (how slowly activity fades, dropout)
/// and enthusiasm (initial activity and events per active day, unrelated to
/// the outcome). Graduation means passing every project before term_days.
struct SyntheticCourseSpec {
  std::string name = "course";
  CourseSchema schema{471, 168, 4, 30};
  int term_days = 84;

  double ability_alpha = 2.0;
  double ability_beta = 2.0;
  double persistence_alpha = 2.0;
  double persistence_beta = 2.0;
  double enthusiasm_alpha = 2.0;
  double enthusiasm_beta = 2.0;

  double hazard = 0.6;           // daily activity probability scale, in (0, 1]
  double dropout_hazard = 0.005;  // daily dropout probability scale
  double engagement_decay = 0.0;  // daily activity decay rate at zero persistence
  double fail_dropout_boost = 0.35;  // relative dropout increase per failed project
  double events_per_day = 3.0;   // mean events on an active day
  int max_events_per_day = 6;

  double difficulty = 1.0;  // global difficulty multiplier, tuned by calibrate()
  double quiz_difficulty_start = 0.3;
  double quiz_difficulty_end = 0.6;
  double project_difficulty_start = 0.35;
  double project_difficulty_end = 0.6;
  double discrimination = 8.0;  // slope of the success logistic in ability units

  double revisit_rate = 0.35;     // chance a step re-views earlier content (scaled by 1 - ability)
  double browse_rate = 0.0;       // extra re-view chance scaled by enthusiasm
  double quiz_retry_rate = 0.6;   // chance to retry a failed quiz immediately
  double steps_to_complete = 50;  // content/quiz steps to traverse the course at nominal pace
  double pacing = 1.0;            // multiplies activity and progress speed

  std::uint64_t seed = 1;

  void validate() const;
};

struct ShiftSpec {
  std::int64_t delta_contents = 0;
  std::int64_t delta_quizzes = 0;
  std::int64_t delta_projects = 0;
  double difficulty_multiplier = 1.0;
  double pacing_multiplier = 1.0;
  std::optional<double> base_rate;  // recalibrate the shifted course to this rate
};

struct SyntheticCohort {
  CourseSchema schema;
  std::vector<RawEvent> events;  // grouped by student, days non-decreasing
  std::vector<std::pair<std::string, int>> labels;
  std::vector<double> abilities;
  std::vector<double> persistence;
};

SyntheticCohort generate(const SyntheticCourseSpec& spec, std::size_t n_students,
                         std::uint64_t seed, const std::string& id_prefix = "s");

/// Fraction of graduates among n simulated students (events are not kept).
double graduation_rate(const SyntheticCourseSpec& spec, std::size_t n_students, std::uint64_t seed);

/// Bisection on the global difficulty multiplier until the simulated rate is
/// within `tolerance` of target_rate on n_probe students.
SyntheticCourseSpec calibrate(const SyntheticCourseSpec& spec, double target_rate,
                              std::size_t n_probe, std::uint64_t seed, double tolerance = 0.01);

SyntheticCourseSpec shift(const SyntheticCourseSpec& spec, const ShiftSpec& shift);

/// Course shapes and graduation rates of the four reference programs.
SyntheticCourseSpec preset_spec(const std::string& name);
double preset_graduation_rate(const std::string& name);
std::vector<std::string> preset_names();

/// Key-value spec file; unknown keys are rejected. An optional `preset` key
/// seeds defaults, `target_rate` requests calibration.
struct SpecFile {
  SyntheticCourseSpec spec;
  std::optional<double> target_rate;
  std::size_t calibration_probe = 5000;
};
SpecFile read_spec_file(const std::filesystem::path& path);
void write_spec_file(const std::filesystem::path& path, const SyntheticCourseSpec& spec);

}  // namespace gritnet
