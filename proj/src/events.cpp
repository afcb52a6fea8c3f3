#include "gritnet/events.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "gritnet/error.hpp"

namespace gritnet {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema_mismatch: return "schema mismatch";
    case ErrorKind::ordering: return "ordering";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric_failure: return "numeric failure";
    case ErrorKind::vocabulary: return "vocabulary";
    case ErrorKind::corrupt_file: return "corrupt file";
    case ErrorKind::version_mismatch: return "version mismatch";
    case ErrorKind::config: return "config";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::degenerate_labels: return "degenerate labels";
    case ErrorKind::undefined_auc: return "undefined AUC";
    case ErrorKind::undefined_arr: return "undefined ARR";
    case ErrorKind::calibration: return "calibration";
    case ErrorKind::check_failure: return "check failure";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

void CourseSchema::validate() const {
  if (delta_cap < 1) fail(ErrorKind::config, "schema: delta_cap must be >= 1");
}

std::size_t vocab_size(const CourseSchema& schema) {
  return std::size_t{schema.num_contents} + 2 * std::size_t{schema.num_quizzes} +
         2 * std::size_t{schema.num_projects};
}

void validate_event(const RawEvent& event) {
  if (event.ordinal < 1) fail(ErrorKind::schema_mismatch, "event ordinal must be >= 1");
  if (event.day < 0) fail(ErrorKind::ordering, "event day must be non-negative");
  bool ok = false;
  switch (event.kind) {
    case EventKind::content: ok = event.outcome == Outcome::none; break;
    case EventKind::quiz:
      ok = event.outcome == Outcome::correct || event.outcome == Outcome::incorrect;
      break;
    case EventKind::project:
      ok = event.outcome == Outcome::pass || event.outcome == Outcome::fail;
      break;
  }
  if (!ok) {
    fail(ErrorKind::schema_mismatch, "outcome '" + std::string(to_string(event.outcome)) +
                                         "' does not match kind '" +
                                         std::string(to_string(event.kind)) + "'");
  }
}

std::int32_t action_token(const CourseSchema& schema, const RawEvent& event) {
  validate_event(event);
  const auto i = schema.num_contents, j = schema.num_quizzes, k = schema.num_projects;
  const auto n = event.ordinal;
  auto bound = [&](std::uint32_t limit) {
    if (n > limit) {
      fail(ErrorKind::schema_mismatch, std::string(to_string(event.kind)) + "-" +
                                           std::to_string(n) + " exceeds schema bound " +
                                           std::to_string(limit));
    }
  };
  switch (event.kind) {
    case EventKind::content:
      bound(i);
      return static_cast<std::int32_t>(n - 1);
    case EventKind::quiz:
      bound(j);
      return static_cast<std::int32_t>(i + (event.outcome == Outcome::correct ? 0 : j) + n - 1);
    case EventKind::project:
      bound(k);
      return static_cast<std::int32_t>(i + 2 * j + (event.outcome == Outcome::pass ? 0 : k) +
                                       n - 1);
  }
  fail(ErrorKind::schema_mismatch, "unknown event kind");
}

ActionTriple decode_action(const CourseSchema& schema, std::int32_t action) {
  if (action < 0 || static_cast<std::size_t>(action) >= vocab_size(schema)) {
    fail(ErrorKind::vocabulary, "action token " + std::to_string(action) + " out of range");
  }
  auto a = static_cast<std::uint32_t>(action);
  const auto i = schema.num_contents, j = schema.num_quizzes, k = schema.num_projects;
  if (a < i) return {EventKind::content, a + 1, Outcome::none};
  a -= i;
  if (a < j) return {EventKind::quiz, a + 1, Outcome::correct};
  a -= j;
  if (a < j) return {EventKind::quiz, a + 1, Outcome::incorrect};
  a -= j;
  if (a < k) return {EventKind::project, a + 1, Outcome::pass};
  a -= k;
  return {EventKind::project, a + 1, Outcome::fail};
}

std::int32_t delta_token(std::optional<Day> prev_day, Day cur_day, std::uint32_t delta_cap) {
  if (!prev_day) return 0;
  if (cur_day < *prev_day) {
    fail(ErrorKind::ordering, "event day " + std::to_string(cur_day) + " precedes " +
                                  std::to_string(*prev_day));
  }
  return static_cast<std::int32_t>(std::min<Day>(cur_day - *prev_day, delta_cap));
}

TokenizedSequence tokenize_student(const CourseSchema& schema, std::span<const RawEvent> events) {
  if (events.empty()) fail(ErrorKind::empty_input, "cannot tokenize an empty event list");
  std::vector<const RawEvent*> order;
  order.reserve(events.size());
  for (const auto& e : events) {
    if (e.student_id != events.front().student_id) {
      fail(ErrorKind::empty_input, "tokenize_student: events from more than one student");
    }
    order.push_back(&e);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const RawEvent* a, const RawEvent* b) { return a->day < b->day; });

  TokenizedSequence seq;
  seq.student_id = events.front().student_id;
  seq.tokens.reserve(order.size());
  seq.days.reserve(order.size());
  std::optional<Day> prev;
  for (const RawEvent* e : order) {
    seq.tokens.push_back({action_token(schema, *e), delta_token(prev, e->day, schema.delta_cap)});
    seq.days.push_back(e->day);
    prev = e->day;
  }
  return seq;
}

TokenizedSequence truncate_to_week(const TokenizedSequence& seq, int week) {
  if (week < 1) fail(ErrorKind::config, "week must be >= 1");
  TokenizedSequence out;
  out.student_id = seq.student_id;
  if (seq.empty()) return out;
  const Day end = seq.days.front() + 7 * static_cast<Day>(week);
  std::size_t keep = 0;
  while (keep < seq.days.size() && seq.days[keep] < end) ++keep;
  out.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(keep));
  out.days.assign(seq.days.begin(), seq.days.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

std::vector<RawEvent> truncate_events_to_week(std::span<const RawEvent> sorted_events, int week) {
  if (week < 1) fail(ErrorKind::config, "week must be >= 1");
  std::vector<RawEvent> out;
  if (sorted_events.empty()) return out;
  const Day end = sorted_events.front().day + 7 * static_cast<Day>(week);
  for (const auto& e : sorted_events) {
    if (e.day >= end) break;
    out.push_back(e);
  }
  return out;
}

PaddedBatch pad_batch(std::span<const TokenizedSequence* const> seqs, std::size_t t_max) {
  if (t_max == 0) fail(ErrorKind::shape, "pad_batch: t_max must be >= 1");
  PaddedBatch batch;
  batch.batch = seqs.size();
  batch.t_max = t_max;
  batch.tokens.assign(seqs.size() * t_max, Token{kPaddingToken, 0});
  batch.pad.resize(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto& tokens = seqs[b]->tokens;
    std::size_t len = tokens.size();
    std::size_t first = 0;
    if (len > t_max) {
      first = len - t_max;
      len = t_max;
      ++batch.truncated;
    }
    batch.pad[b] = t_max - len;
    std::copy(tokens.begin() + static_cast<std::ptrdiff_t>(first), tokens.end(),
              batch.tokens.begin() + static_cast<std::ptrdiff_t>(b * t_max + batch.pad[b]));
  }
  return batch;
}

PaddedBatch pad_batch(std::span<const TokenizedSequence> seqs, std::size_t t_max) {
  std::vector<const TokenizedSequence*> ptrs;
  ptrs.reserve(seqs.size());
  for (const auto& s : seqs) ptrs.push_back(&s);
  return pad_batch(std::span<const TokenizedSequence* const>(ptrs), t_max);
}

std::size_t max_length(const LabeledDataset& data) {
  std::size_t m = 0;
  for (const auto& item : data) m = std::max(m, item.sequence.size());
  return m;
}

void validate_dataset(const LabeledDataset& data) {
  std::unordered_set<std::string> seen;
  for (const auto& item : data) {
    if (!seen.insert(item.sequence.student_id).second) {
      fail(ErrorKind::config, "duplicate student id '" + item.sequence.student_id + "'");
    }
    if (item.label != 0 && item.label != 1) {
      fail(ErrorKind::config, "label for '" + item.sequence.student_id + "' is not 0/1");
    }
  }
}

// ---- file formats -------------------------------------------------------

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::content: return "content";
    case EventKind::quiz: return "quiz";
    case EventKind::project: return "project";
  }
  return "?";
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::none: return "null";
    case Outcome::correct: return "correct";
    case Outcome::incorrect: return "incorrect";
    case Outcome::pass: return "pass";
    case Outcome::fail: return "fail";
  }
  return "?";
}

EventKind parse_kind(std::string_view text) {
  if (text == "content") return EventKind::content;
  if (text == "quiz") return EventKind::quiz;
  if (text == "project") return EventKind::project;
  fail(ErrorKind::config, "unknown event kind '" + std::string(text) + "'");
}

Outcome parse_outcome(std::string_view text) {
  if (text == "null" || text.empty()) return Outcome::none;
  if (text == "correct") return Outcome::correct;
  if (text == "incorrect") return Outcome::incorrect;
  if (text == "pass") return Outcome::pass;
  if (text == "fail") return Outcome::fail;
  fail(ErrorKind::config, "unknown outcome '" + std::string(text) + "'");
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

std::vector<RawEvent> read_events(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<RawEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RawEvent e;
      e.student_id = j.at("student_id").get<std::string>();
      e.kind = parse_kind(j.at("kind").get<std::string>());
      const auto ordinal = j.at("ordinal").get<std::int64_t>();
      if (ordinal < 1) fail(ErrorKind::config, "ordinal must be >= 1");
      e.ordinal = static_cast<std::uint32_t>(ordinal);
      const auto& outcome = j.at("outcome");
      e.outcome = outcome.is_null() ? Outcome::none : parse_outcome(outcome.get<std::string>());
      e.day = j.at("day").get<Day>();
      validate_event(e);
      events.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorKind::config,
           path.string() + ":" + std::to_string(line_no) + ": malformed event: " + ex.what());
    } catch (const Error& ex) {
      fail(ex.kind(), path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return events;
}

void write_events(const std::filesystem::path& path, std::span<const RawEvent> events) {
  auto out = open_out(path);
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["student_id"] = e.student_id;
    j["kind"] = std::string(to_string(e.kind));
    j["ordinal"] = e.ordinal;
    if (e.outcome == Outcome::none) {
      j["outcome"] = nullptr;
    } else {
      j["outcome"] = std::string(to_string(e.outcome));
    }
    j["day"] = e.day;
    out << j.dump() << '\n';
  }
}

std::vector<StudentEvents> group_by_student(std::span<const RawEvent> events) {
  std::vector<StudentEvents> students;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& e : events) {
    auto [it, inserted] = index.try_emplace(e.student_id, students.size());
    if (inserted) students.push_back({e.student_id, {}});
    students[it->second].events.push_back(e);
  }
  for (auto& s : students) {
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.day < b.day; });
  }
  return students;
}

std::vector<std::pair<std::string, int>> read_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::config, path.string() + ": empty label file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "student_id,label") {
    fail(ErrorKind::config, path.string() + ": expected header 'student_id,label'");
  }
  std::vector<std::pair<std::string, int>> labels;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (comma == std::string::npos || comma == 0) fail(ErrorKind::config, where + "malformed row");
    std::string id = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    if (value != "0" && value != "1") fail(ErrorKind::config, where + "label must be 0 or 1");
    if (!seen.insert(id).second) fail(ErrorKind::config, where + "duplicate student '" + id + "'");
    labels.emplace_back(std::move(id), value == "1" ? 1 : 0);
  }
  return labels;
}

void write_labels(const std::filesystem::path& path,
                  std::span<const std::pair<std::string, int>> labels) {
  auto out = open_out(path);
  out << "student_id,label\n";
  for (const auto& [id, label] : labels) out << id << ',' << label << '\n';
}

CourseSchema read_schema(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
    CourseSchema s;
    s.num_contents = tree.get<std::uint32_t>("num_contents");
    s.num_quizzes = tree.get<std::uint32_t>("num_quizzes");
    s.num_projects = tree.get<std::uint32_t>("num_projects");
    s.delta_cap = tree.get<std::uint32_t>("delta_cap", 30);
    s.validate();
    return s;
  } catch (const boost::property_tree::ptree_error& ex) {
    fail(ErrorKind::config, path.string() + ": " + ex.what());
  }
}

void write_schema(const std::filesystem::path& path, const CourseSchema& schema) {
  auto out = open_out(path);
  out << "num_contents = " << schema.num_contents << '\n'
      << "num_quizzes = " << schema.num_quizzes << '\n'
      << "num_projects = " << schema.num_projects << '\n'
      << "delta_cap = " << schema.delta_cap << '\n';
}

JoinedData join_labels(std::vector<StudentEvents> students,
                       std::span<const std::pair<std::string, int>> labels) {
  std::unordered_map<std::string, int> by_id;
  for (const auto& [id, label] : labels) by_id.emplace(id, label);
  JoinedData joined;
  joined.labels.reserve(students.size());
  for (auto& s : students) {
    auto it = by_id.find(s.student_id);
    if (it == by_id.end()) {
      fail(ErrorKind::config, "student '" + s.student_id + "' has events but no label");
    }
    joined.labels.push_back(it->second);
  }
  joined.labels_without_events = labels.size() - students.size();
  joined.students = std::move(students);
  return joined;
}

}  // namespace gritnet
