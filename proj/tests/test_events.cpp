#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gritnet/error.hpp"
#include "gritnet/events.hpp"

using namespace gritnet;

namespace {

const CourseSchema kSmall{2, 1, 1, 30};

RawEvent ev(EventKind kind, std::uint32_t ordinal, Outcome outcome, Day day,
            std::string id = "s1") {
  return {std::move(id), kind, ordinal, outcome, day};
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::check_failure;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gritnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(VocabSize, CourseShapes) {
  EXPECT_EQ(vocab_size({471, 168, 4, 30}), 815u);
  EXPECT_EQ(vocab_size({0, 0, 0, 30}), 0u);
  EXPECT_EQ(vocab_size({346, 50, 5, 30}), 456u);
  EXPECT_EQ(vocab_size({568, 84, 10, 30}), 756u);
}

TEST(ActionToken, Layout) {
  EXPECT_EQ(action_token(kSmall, ev(EventKind::content, 1, Outcome::none, 0)), 0);
  EXPECT_EQ(action_token(kSmall, ev(EventKind::quiz, 1, Outcome::incorrect, 0)), 3);
  EXPECT_EQ(action_token(kSmall, ev(EventKind::project, 1, Outcome::pass, 0)), 4);
  EXPECT_EQ(action_token(kSmall, ev(EventKind::content, 2, Outcome::none, 0)), 1);
  EXPECT_EQ(action_token(kSmall, ev(EventKind::quiz, 1, Outcome::correct, 0)), 2);
  EXPECT_EQ(action_token(kSmall, ev(EventKind::project, 1, Outcome::fail, 0)), 5);
}

TEST(ActionToken, OutOfBoundsIsSchemaMismatch) {
  EXPECT_EQ(kind_of([] { action_token(kSmall, ev(EventKind::content, 3, Outcome::none, 0)); }),
            ErrorKind::schema_mismatch);
  EXPECT_EQ(kind_of([] { action_token(kSmall, ev(EventKind::project, 2, Outcome::pass, 0)); }),
            ErrorKind::schema_mismatch);
}

TEST(ActionToken, BijectionOverAllTriples) {
  for (const CourseSchema& schema :
       {CourseSchema{2, 1, 1, 30}, CourseSchema{7, 0, 3, 30}, CourseSchema{0, 5, 0, 30},
        CourseSchema{40, 20, 2, 30}}) {
    std::set<std::int32_t> seen;
    auto check = [&](EventKind kind, std::uint32_t n, Outcome outcome) {
      const auto e = ev(kind, n, outcome, 0);
      const auto a = action_token(schema, e);
      EXPECT_TRUE(seen.insert(a).second);
      EXPECT_EQ(decode_action(schema, a), (ActionTriple{kind, n, outcome}));
    };
    for (std::uint32_t n = 1; n <= schema.num_contents; ++n) check(EventKind::content, n, Outcome::none);
    for (std::uint32_t n = 1; n <= schema.num_quizzes; ++n) {
      check(EventKind::quiz, n, Outcome::correct);
      check(EventKind::quiz, n, Outcome::incorrect);
    }
    for (std::uint32_t n = 1; n <= schema.num_projects; ++n) {
      check(EventKind::project, n, Outcome::pass);
      check(EventKind::project, n, Outcome::fail);
    }
    ASSERT_EQ(seen.size(), vocab_size(schema));
    if (!seen.empty()) {
      EXPECT_EQ(*seen.begin(), 0);
      EXPECT_EQ(*seen.rbegin(), static_cast<std::int32_t>(vocab_size(schema)) - 1);
    }
  }
}

TEST(ValidateEvent, OutcomeMustMatchKind) {
  EXPECT_THROW(validate_event(ev(EventKind::content, 1, Outcome::pass, 0)), Error);
  EXPECT_THROW(validate_event(ev(EventKind::quiz, 1, Outcome::none, 0)), Error);
  EXPECT_THROW(validate_event(ev(EventKind::project, 1, Outcome::correct, 0)), Error);
  EXPECT_THROW(validate_event(ev(EventKind::content, 0, Outcome::none, 0)), Error);
  EXPECT_NO_THROW(validate_event(ev(EventKind::quiz, 1, Outcome::correct, 0)));
}

TEST(DeltaToken, Examples) {
  EXPECT_EQ(delta_token(std::nullopt, 5, 30), 0);
  EXPECT_EQ(delta_token(3, 10, 30), 7);
  EXPECT_EQ(delta_token(0, 100, 30), 30);
  EXPECT_EQ(kind_of([] { delta_token(10, 3, 30); }), ErrorKind::ordering);
}

TEST(DeltaToken, BoundedAndMonotone) {
  for (std::uint32_t cap : {1u, 7u, 30u}) {
    std::int32_t prev = 0;
    for (Day gap = 0; gap < 80; ++gap) {
      const auto d = delta_token(Day{4}, 4 + gap, cap);
      EXPECT_GE(d, 0);
      EXPECT_LE(d, static_cast<std::int32_t>(cap));
      EXPECT_GE(d, prev);
      prev = d;
    }
  }
}

TEST(Tokenize, Examples) {
  const std::vector<RawEvent> events{ev(EventKind::content, 1, Outcome::none, 0),
                                     ev(EventKind::quiz, 1, Outcome::incorrect, 2),
                                     ev(EventKind::project, 1, Outcome::pass, 2)};
  const auto seq = tokenize_student(kSmall, events);
  EXPECT_EQ(seq.tokens, (std::vector<Token>{{0, 0}, {3, 2}, {4, 0}}));
  EXPECT_EQ(seq.student_id, "s1");

  const std::vector<RawEvent> single{ev(EventKind::content, 2, Outcome::none, 9)};
  EXPECT_EQ(tokenize_student(kSmall, single).tokens, (std::vector<Token>{{1, 0}}));

  const std::vector<RawEvent> shuffled{events[2], events[0], events[1]};
  // project@2 precedes quiz@2 in the input, so the stable sort keeps that order.
  const auto s2 = tokenize_student(kSmall, shuffled);
  EXPECT_EQ(s2.tokens, (std::vector<Token>{{0, 0}, {4, 2}, {3, 0}}));
  const std::vector<RawEvent> reordered{events[1], events[2], events[0]};
  EXPECT_EQ(tokenize_student(kSmall, reordered).tokens, seq.tokens);
}

TEST(Tokenize, Errors) {
  EXPECT_EQ(kind_of([] { tokenize_student(kSmall, std::vector<RawEvent>{}); }), ErrorKind::empty_input);
  const std::vector<RawEvent> mixed{ev(EventKind::content, 1, Outcome::none, 0, "a"),
                                    ev(EventKind::content, 1, Outcome::none, 0, "b")};
  EXPECT_THROW(tokenize_student(kSmall, mixed), Error);
}

TEST(Tokenize, LengthAndDayOrder) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 40; ++i) {
    events.push_back(ev(EventKind::content, 1 + i % 2, Outcome::none, (i * 37) % 23));
  }
  const auto seq = tokenize_student(kSmall, events);
  ASSERT_EQ(seq.size(), events.size());
  for (std::size_t t = 1; t < seq.days.size(); ++t) EXPECT_LE(seq.days[t - 1], seq.days[t]);
}

TEST(TruncateToWeek, Examples) {
  TokenizedSequence seq{"s", {{0, 0}, {0, 3}, {0, 5}, {0, 7}}, {0, 3, 8, 15}};
  EXPECT_EQ(truncate_to_week(seq, 1).days, (std::vector<Day>{0, 3}));
  EXPECT_EQ(truncate_to_week(seq, 3).days, (std::vector<Day>{0, 3, 8, 15}));
  TokenizedSequence late{"s", {{0, 0}, {0, 2}}, {10, 12}};
  EXPECT_EQ(truncate_to_week(late, 1).size(), 2u);
}

TEST(TruncateToWeek, NestedPrefixes) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 60; ++i) events.push_back(ev(EventKind::content, 1, Outcome::none, 3 + (i * i) % 50));
  const auto seq = tokenize_student(kSmall, events);
  for (int w = 1; w < 9; ++w) {
    const auto a = truncate_to_week(seq, w);
    const auto b = truncate_to_week(seq, w + 1);
    ASSERT_LE(a.size(), b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
      EXPECT_EQ(a.tokens[t], b.tokens[t]);
      EXPECT_EQ(a.tokens[t], seq.tokens[t]);
    }
  }
}

TEST(PadBatch, PrefixPadding) {
  TokenizedSequence a{"a", {{1, 0}, {2, 1}}, {0, 1}};
  TokenizedSequence b{"b", {{1, 0}, {2, 1}, {3, 0}, {0, 4}}, {0, 1, 1, 5}};
  const std::vector<TokenizedSequence> seqs{a, b};
  const auto batch = pad_batch(seqs, 4);
  EXPECT_EQ(batch.pad, (std::vector<std::size_t>{2, 0}));
  EXPECT_TRUE(batch.is_padding(0, 0));
  EXPECT_EQ(batch.at(0, 0).action, kPaddingToken);
  EXPECT_EQ(batch.at(0, 2), (Token{1, 0}));
  EXPECT_EQ(batch.at(1, 3), (Token{0, 4}));
  EXPECT_EQ(batch.truncated, 0u);

  const std::vector<TokenizedSequence> one{b};
  EXPECT_EQ(pad_batch(one, 4).pad, (std::vector<std::size_t>{0}));
}

TEST(PadBatch, KeepsMostRecentWhenTooLong) {
  TokenizedSequence s{"s", {{0, 0}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}}, {0, 1, 2, 3, 4, 5}};
  const std::vector<TokenizedSequence> seqs{s};
  const auto batch = pad_batch(seqs, 4);
  EXPECT_EQ(batch.truncated, 1u);
  EXPECT_EQ(batch.at(0, 0), (Token{2, 1}));
  EXPECT_EQ(batch.at(0, 3), (Token{5, 1}));
}

TEST(PadBatch, PaddingNeverValid) {
  std::vector<TokenizedSequence> seqs;
  for (std::size_t n = 1; n < 8; ++n) {
    TokenizedSequence s{"s" + std::to_string(n), {}, {}};
    for (std::size_t t = 0; t < n; ++t) {
      s.tokens.push_back({static_cast<std::int32_t>(t % 5), 0});
      s.days.push_back(static_cast<Day>(t));
    }
    seqs.push_back(s);
  }
  const auto batch = pad_batch(seqs, 10);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < batch.t_max; ++t) {
      EXPECT_EQ(batch.is_padding(b, t), batch.at(b, t).action == kPaddingToken);
      if (!batch.is_padding(b, t)) EXPECT_GE(batch.at(b, t).action, 0);
    }
  }
}

TEST(Dataset, DuplicateIdsRejected) {
  LabeledDataset d{{{"a", {{0, 0}}, {0}}, 1}, {{"a", {{0, 0}}, {0}}, 0}};
  EXPECT_THROW(validate_dataset(d), Error);
  LabeledDataset bad_label{{{"a", {{0, 0}}, {0}}, 2}};
  EXPECT_THROW(validate_dataset(bad_label), Error);
}

TEST(Files, EventsLabelsSchemaRoundTrip) {
  const auto dir = temp_dir("files");
  const std::vector<RawEvent> events{ev(EventKind::content, 1, Outcome::none, 0, "x"),
                                     ev(EventKind::quiz, 1, Outcome::correct, 3, "y"),
                                     ev(EventKind::project, 1, Outcome::fail, 4, "x")};
  write_events(dir / "events.jsonl", events);
  const auto back = read_events(dir / "events.jsonl");
  ASSERT_EQ(back.size(), events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(back[i].student_id, events[i].student_id);
    EXPECT_EQ(back[i].kind, events[i].kind);
    EXPECT_EQ(back[i].ordinal, events[i].ordinal);
    EXPECT_EQ(back[i].outcome, events[i].outcome);
    EXPECT_EQ(back[i].day, events[i].day);
  }

  const std::vector<std::pair<std::string, int>> labels{{"x", 1}, {"y", 0}, {"z", 1}};
  write_labels(dir / "labels.csv", labels);
  EXPECT_EQ(read_labels(dir / "labels.csv"), labels);

  write_schema(dir / "schema.ini", kSmall);
  EXPECT_EQ(read_schema(dir / "schema.ini"), kSmall);

  const auto grouped = group_by_student(back);
  ASSERT_EQ(grouped.size(), 2u);
  EXPECT_EQ(grouped[0].student_id, "x");
  EXPECT_EQ(grouped[0].events.size(), 2u);
  const auto joined = join_labels(grouped, labels);
  EXPECT_EQ(joined.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(joined.labels_without_events, 1u);
}

TEST(Files, MalformedInputsRejected) {
  const auto dir = temp_dir("malformed");
  {
    std::ofstream(dir / "events.jsonl") << "{\"student_id\":\"a\",\"kind\":\"lecture\",\"ordinal\":1,"
                                           "\"outcome\":null,\"day\":0}\n";
  }
  EXPECT_THROW(read_events(dir / "events.jsonl"), Error);
  { std::ofstream(dir / "labels.csv") << "student_id,label\na,3\n"; }
  EXPECT_THROW(read_labels(dir / "labels.csv"), Error);
  { std::ofstream(dir / "nolabel.csv") << "id,y\na,1\n"; }
  EXPECT_THROW(read_labels(dir / "nolabel.csv"), Error);
  EXPECT_THROW(read_events(dir / "missing.jsonl"), Error);

  const std::vector<StudentEvents> students{{"a", {ev(EventKind::content, 1, Outcome::none, 0, "a")}}};
  const std::vector<std::pair<std::string, int>> none;
  EXPECT_THROW(join_labels(students, none), Error);
}
