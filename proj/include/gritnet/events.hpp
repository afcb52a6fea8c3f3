#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gritnet {

using Day = std::int64_t;

/// Shape of a course's action vocabulary: i contents, j quizzes, k projects.
/// Quizzes and projects contribute two actions each (correct/incorrect,
/// pass/fail), so the vocabulary holds i + 2j + 2k actions.
struct CourseSchema {
  std::uint32_t num_contents = 0;
  std::uint32_t num_quizzes = 0;
  std::uint32_t num_projects = 0;
  std::uint32_t delta_cap = 30;

  void validate() const;
  bool operator==(const CourseSchema&) const = default;
};

std::size_t vocab_size(const CourseSchema& schema);

enum class EventKind : std::uint8_t { content, quiz, project };
enum class Outcome : std::uint8_t { none, correct, incorrect, pass, fail };

struct RawEvent {
  std::string student_id;
  EventKind kind = EventKind::content;
  std::uint32_t ordinal = 1;  // 1-based within its kind
  Outcome outcome = Outcome::none;
  Day day = 0;
};

/// Checks that the outcome matches the kind and the ordinal is >= 1.
void validate_event(const RawEvent& event);

/// Index an action token maps back to.
struct ActionTriple {
  EventKind kind;
  std::uint32_t ordinal;
  Outcome outcome;
  bool operator==(const ActionTriple&) const = default;
};

struct Token {
  std::int32_t action = 0;
  std::int32_t delta = 0;
  bool operator==(const Token&) const = default;
};

/// Marker stored in padded positions; never a valid action index.
inline constexpr std::int32_t kPaddingToken = -1;

struct TokenizedSequence {
  std::string student_id;
  std::vector<Token> tokens;
  std::vector<Day> days;  // source day of each token, same length as tokens

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Fixed-length batch, stored sample-major: token(b, t) = tokens[b * t_max + t].
/// Sequence b occupies the last (t_max - pad[b]) positions.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t t_max = 0;
  std::vector<Token> tokens;
  std::vector<std::size_t> pad;
  std::size_t truncated = 0;  // sequences that lost their oldest events

  const Token& at(std::size_t b, std::size_t t) const { return tokens[b * t_max + t]; }
  bool is_padding(std::size_t b, std::size_t t) const { return t < pad[b]; }
};

struct LabeledSequence {
  TokenizedSequence sequence;
  int label = 0;  // 1 = graduated
};

using LabeledDataset = std::vector<LabeledSequence>;

/// Events of one student, sorted by day (stable on ties).
struct StudentEvents {
  std::string student_id;
  std::vector<RawEvent> events;
};

// Ordinal layout: [contents | quiz correct | quiz incorrect | project pass | project fail].
std::int32_t action_token(const CourseSchema& schema, const RawEvent& event);
ActionTriple decode_action(const CourseSchema& schema, std::int32_t action);

std::int32_t delta_token(std::optional<Day> prev_day, Day cur_day, std::uint32_t delta_cap);

TokenizedSequence tokenize_student(const CourseSchema& schema, std::span<const RawEvent> events);

/// Keeps tokens with day < first_day + 7 * week. Only a suffix is removed, so
/// the surviving delta tokens are unchanged.
TokenizedSequence truncate_to_week(const TokenizedSequence& seq, int week);
std::vector<RawEvent> truncate_events_to_week(std::span<const RawEvent> sorted_events, int week);

/// Pre-pads each sequence to t_max. Longer sequences keep their most recent
/// t_max tokens and are counted in PaddedBatch::truncated.
PaddedBatch pad_batch(std::span<const TokenizedSequence* const> seqs, std::size_t t_max);
PaddedBatch pad_batch(std::span<const TokenizedSequence> seqs, std::size_t t_max);

std::size_t max_length(const LabeledDataset& data);

/// Throws if a student id repeats or a label is not 0/1.
void validate_dataset(const LabeledDataset& data);

// ---- file formats -------------------------------------------------------

std::string_view to_string(EventKind kind);
std::string_view to_string(Outcome outcome);
EventKind parse_kind(std::string_view text);
Outcome parse_outcome(std::string_view text);

/// JSON lines, one event per line:
/// {"student_id":"s1","kind":"quiz","ordinal":3,"outcome":"correct","day":12}
std::vector<RawEvent> read_events(const std::filesystem::path& path);
void write_events(const std::filesystem::path& path, std::span<const RawEvent> events);

/// Groups by student in first-appearance order; each student's events are
/// stably sorted by day.
std::vector<StudentEvents> group_by_student(std::span<const RawEvent> events);

/// CSV with header "student_id,label".
std::vector<std::pair<std::string, int>> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path,
                  std::span<const std::pair<std::string, int>> labels);

/// Key-value text: num_contents, num_quizzes, num_projects, delta_cap.
CourseSchema read_schema(const std::filesystem::path& path);
void write_schema(const std::filesystem::path& path, const CourseSchema& schema);

/// Joins students with labels. Every student with events must have a label;
/// labeled students without events are skipped and counted.
struct JoinedData {
  std::vector<StudentEvents> students;
  std::vector<int> labels;
  std::size_t labels_without_events = 0;
};
JoinedData join_labels(std::vector<StudentEvents> students,
                       std::span<const std::pair<std::string, int>> labels);

}  // namespace gritnet
