// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria, excluding those passed with --known-failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "gritnet/commands.hpp"
#include "gritnet/error.hpp"
#include "gritnet/evaluation.hpp"
#include "gritnet/model.hpp"
#include "gritnet/nn/grad_check.hpp"
#include "gritnet/synthgen.hpp"
#include "gritnet/trainer.hpp"

using namespace gritnet;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "gritnet_acceptance";

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(precision);
  out << v;
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TokenizedSequence random_sequence(std::mt19937_64& rng, const CourseSchema& schema, std::size_t len) {
  TokenizedSequence s;
  const auto l = static_cast<std::int32_t>(vocab_size(schema));
  for (std::size_t t = 0; t < len; ++t) {
    s.tokens.push_back({static_cast<std::int32_t>(rng() % l),
                        t == 0 ? 0 : static_cast<std::int32_t>(rng() % (schema.delta_cap + 1))});
    s.days.push_back(static_cast<Day>(t));
  }
  return s;
}

LabeledDataset load_dataset(const fs::path& dir, CourseSchema* schema) {
  const auto files = CourseFiles::in(dir);
  *schema = read_schema(files.schema);
  auto joined = join_labels(group_by_student(read_events(files.events)), read_labels(files.labels));
  LabeledDataset data;
  for (std::size_t i = 0; i < joined.students.size(); ++i) {
    data.push_back({tokenize_student(*schema, joined.students[i].events), joined.labels[i]});
  }
  return data;
}

Verdict gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const CourseSchema schema{6, 4, 2, 5};
  auto model = make_model<double>(GritNetConfig::for_schema(schema, 8, 4, 17), schema, 6);
  std::mt19937_64 rng(5);
  const std::vector<TokenizedSequence> seqs{random_sequence(rng, schema, 6), random_sequence(rng, schema, 4),
                                            random_sequence(rng, schema, 2)};
  const auto batch = pad_batch(seqs, 6);
  const std::vector<int> labels{1, 0, 1};
  auto params = model.params.all();
  // Zero biases make every leading padding step output exactly 0, a max-pool
  // tie where the loss has a kink; jitter moves the check to a generic point.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += jitter(rng);
  }
  const auto report = nn::measure_gradients([&] { return loss(model, batch, labels); },
                                            [&] { loss_and_gradients(model, batch, labels); }, params);
  const double secs = seconds_since(t0);
  return {report.max_relative_error < 1e-4 && secs < 30.0,
          "max relative error " + std::to_string(report.max_relative_error) + " over " +
              std::to_string(report.entries_checked) + " entries (worst " + report.worst_parameter + "), " +
              fmt(secs, 1) + " s"};
}

Verdict metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    const int levels = trial % 2 == 0 ? 5 : 100000;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels);
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] != 1 || y[j] != 0) continue;
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    worst = std::max(worst, std::abs(auc(s, y) - 100.0 * wins / pairs));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, "max |rank - pairwise| = " + std::to_string(worst) + ", " + fmt(secs, 2) + " s"};
}

Verdict encoding() {
  const auto a = vocab_size({471, 168, 4, 30});
  const auto b = vocab_size({568, 84, 10, 30});
  const auto c = vocab_size({346, 50, 5, 30});
  return {a == 815 && b == 756 && c == 456,
          "ND-A " + std::to_string(a) + ", ND-B " + std::to_string(b) + ", ND-C " + std::to_string(c)};
}

Verdict freeze_contract() {
  const auto dir = kWork / "freeze";
  fs::remove_all(dir);
  auto spec = preset_spec("symmetric");
  spec.schema = {16, 8, 2, 30};
  write_cohort(spec, 200, 1, dir / "source");
  write_cohort(shift(spec, {0, 0, 0, 1.3, 1.0, {}}), 150, 2, dir / "target");
  ExperimentConfig config;
  config.embedding_dim = 8;
  config.hidden_dim = 4;
  config.train.epochs = 3;
  config.train.weeks = {1, 2};
  config.folds = 1;
  config.target_folds = 3;
  config.adapt.learning_rate = 1e-2;
  cmd_train({dir / "source", dir / "train", config, 1});
  AdaptOptions options{dir / "train", dir / "target", dir / "adapt", config, 1, true, std::nullopt};
  const auto summary = cmd_adapt(options);

  std::size_t checked = 0, mismatched = 0;
  for (int week : config.train.weeks) {
    const auto source = load_checkpoint<float>(dir / "train" / ("week" + std::to_string(week) + ".ckpt"));
    const auto expected = frozen_parameter_hash(source);
    for (const auto& path : summary.checkpoints) {
      const auto name = path.filename().string();
      if (name.rfind("week" + std::to_string(week) + "_", 0) != 0) continue;
      const auto model = load_checkpoint<float>(path);
      ++checked;
      bool same = frozen_parameter_hash(model) == expected;
      const auto a = model.params.all();
      const auto b = source.params.all();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == &model.params.fc_w || a[i] == &model.params.fc_b) continue;
        same = same && a[i]->value == b[i]->value;
      }
      mismatched += same ? 0 : 1;
    }
  }
  return {checked > 0 && mismatched == 0,
          std::to_string(checked) + " adapted/oracle/source checkpoints checked, " + std::to_string(mismatched) +
              " with changed non-FC parameters"};
}

Verdict overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto file = read_spec_file(fs::path(GRITNET_CONFIGS) / "source_course.ini");
  const auto spec = calibrate(file.spec, *file.target_rate, file.calibration_probe, file.spec.seed);
  const auto dir = kWork / "overfit";
  write_cohort(spec, 200, 5, dir);
  CourseSchema schema;
  const auto data = load_dataset(dir, &schema);
  TrainConfig config;
  config.epochs = 50;
  config.patience = 50;
  config.stop_auc = 99.0;
  config.learning_rate = 1e-2;
  config.seed = 5;
  auto model = make_model<float>(GritNetConfig::for_schema(schema, 64, 32, 5), schema, max_length(data));
  const auto result = train(model, data, {}, config, Exec::parallel);
  int reached = 0;
  for (const auto& e : result.history.epochs) {
    if (!reached && e.valid_auc && *e.valid_auc >= 99.0) reached = e.epoch;
  }
  const double secs = seconds_since(t0);
  return {reached > 0 && secs < 120.0,
          "train AUC " + fmt(result.history.best_auc.value_or(0.0), 2) +
              (reached ? " (>= 99 at epoch " + std::to_string(reached) + ")" : " (never >= 99)") + ", " +
              fmt(secs, 1) + " s"};
}

struct StudyVerdict {
  Verdict verdict;
  std::string table;
};

StudyVerdict transfer_study() {
  auto config = read_config(fs::path(GRITNET_CONFIGS) / "experiment.ini");
  config.out = kWork / "study";
  fs::remove_all(config.out);
  const auto result = cmd_experiment(config);

  const auto mean_over_weeks = [&](const std::string& system) {
    for (const auto& c : result.evaluation.curves) {
      if (c.system != system) continue;
      double sum = 0.0;
      int n = 0;
      for (int w = 1; w <= 4; ++w) {
        if (const auto* p = c.at_week(w); p && p->folds > 0) {
          sum += p->mean_auc;
          ++n;
        }
      }
      return n == 4 ? sum / 4.0 : std::nan("");
    }
    return std::nan("");
  };
  const double base = mean_over_weeks(kBaselineSystem);
  const double vanilla = mean_over_weeks(kVanillaSystem);
  const double oracle = mean_over_weeks(kOracleSystem);
  std::string best_system;
  double best_arr = -std::numeric_limits<double>::infinity();
  std::ostringstream table;
  for (const auto& [system, report] : result.evaluation.arr) {
    if (system == kAdaptedSystem) continue;  // the grid members are the candidates
    table << "      " << system << ": mean AUC " << fmt(mean_over_weeks(system), 2) << ", mean ARR "
          << (report.mean ? fmt(*report.mean) : "undefined") << '\n';
    if (report.mean && *report.mean > best_arr) {
      best_arr = *report.mean;
      best_system = system;
    }
  }
  const bool a = base > vanilla;
  const bool b = oracle >= base;
  // ARR divides by the oracle gain; without one its sign and size carry no meaning
  const bool c = b && oracle > base && !best_system.empty() && best_arr > 0.0 && best_arr <= 1.0 && best_arr >= 0.3;
  const bool fast = result.seconds < 15 * 60;
  std::ostringstream detail;
  detail << "(a) GritNet " << fmt(base, 2) << " vs vanilla " << fmt(vanilla, 2) << (a ? " ok" : " FAILED")
         << "; (b) oracle " << fmt(oracle, 2) << (b ? " >= " : " < ") << "baseline" << (b ? " ok" : " FAILED")
         << "; (c) best mean ARR " << (best_system.empty() ? "undefined" : fmt(best_arr) + " (" + best_system + ")")
          << (c ? " ok" : (b && oracle > base) ? " FAILED" : " FAILED (no oracle gain to recover)") << "; " << fmt(result.seconds, 0) << " s";
  return {{a && b && c && fast, detail.str()}, table.str()};
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".ckpt") files.emplace_back(fs::relative(e.path(), dir).string(), slurp(e.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Verdict determinism() {
  auto config = read_config(fs::path(GRITNET_CONFIGS) / "smoke.ini");
  config.out = kWork / "det1";
  fs::remove_all(config.out);
  config.workers = 1;
  cmd_experiment(config);
  auto again = config;
  again.out = kWork / "det2";
  fs::remove_all(again.out);
  again.workers = 3;
  cmd_experiment(again);
  const auto a = snapshot(config.out);
  const auto b = snapshot(again.out);
  std::size_t csv = 0, ckpt = 0;
  for (const auto& [name, body] : a) (name.ends_with(".csv") ? csv : ckpt) += 1;
  return {!a.empty() && a == b,
          std::to_string(csv) + " CSV and " + std::to_string(ckpt) + " checkpoint files " +
              (a == b ? "byte-identical" : "DIFFER") + " across two runs (1 and 3 workers)"};
}

Verdict calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (const auto& name : {"nd_a_v1", "nd_b", "nd_c"}) {
    const double target = preset_graduation_rate(name);
    const auto spec = calibrate(preset_spec(name), target, 5000, 1);
    const double rate = graduation_rate(spec, 5000, 99);
    const bool hit = std::abs(rate - target) <= 0.03;
    ok = ok && hit;
    detail << name << " " << fmt(100 * rate, 1) << "% (target " << fmt(100 * target, 1) << "%) ";
  }
  detail << fmt(seconds_since(t0), 1) << " s";
  return {ok, detail.str()};
}

Verdict leakage() {
  const auto dir = kWork / "leak";
  fs::remove_all(dir);
  auto spec = preset_spec("symmetric");
  spec.schema = {16, 8, 2, 30};
  write_cohort(spec, 150, 3, dir / "orig");

  // Same students, every event after each student's week-1 window mutated.
  fs::create_directories(dir / "mutated");
  fs::copy_file(dir / "orig" / "labels.csv", dir / "mutated" / "labels.csv");
  fs::copy_file(dir / "orig" / "schema.ini", dir / "mutated" / "schema.ini");
  auto events = read_events(dir / "orig" / "events.jsonl");
  std::map<std::string, Day> first;
  std::size_t mutated = 0;
  for (auto& e : events) {
    const auto [it, fresh] = first.try_emplace(e.student_id, e.day);
    if (e.day < it->second + 7) continue;
    ++mutated;
    e.day += 3;
    e.kind = EventKind::content;
    e.outcome = Outcome::none;
    e.ordinal = 1 + static_cast<std::uint32_t>(mutated % spec.schema.num_contents);
  }
  write_events(dir / "mutated" / "events.jsonl", events);

  ExperimentConfig config;
  config.embedding_dim = 8;
  config.hidden_dim = 4;
  config.train.epochs = 3;
  config.train.weeks = {1};
  config.folds = 1;
  cmd_train({dir / "orig", dir / "train_orig", config, 4});
  cmd_train({dir / "mutated", dir / "train_mut", config, 4});
  const auto h1 = checkpoint_hash(load_checkpoint<float>(dir / "train_orig" / "week1.ckpt"));
  const auto h2 = checkpoint_hash(load_checkpoint<float>(dir / "train_mut" / "week1.ckpt"));
  const bool vanilla_same = slurp(dir / "train_orig" / "vanilla_week1.txt") == slurp(dir / "train_mut" / "vanilla_week1.txt");
  return {mutated > 0 && h1 == h2 && vanilla_same,
          std::to_string(mutated) + " post-window events mutated; week-1 checkpoint hash " +
              (h1 == h2 ? "unchanged" : "CHANGED") + ", vanilla model " + (vanilla_same ? "unchanged" : "CHANGED")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> known_failures;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--known-failure" && i + 1 < argc) {
      known_failures.insert(std::stoi(argv[++i]));
    } else if (arg == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--only N]... [--known-failure N]...\n";
      return 2;
    }
  }
  fs::create_directories(kWork);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"AUC matches pairwise oracle", metric_oracle},
      {"vocabulary sizes", encoding},
      {"freeze contract after adapt", freeze_contract},
      {"overfit sanity", overfit},
      {"synthetic transfer study", [] {
         const auto r = transfer_study();
         std::cout << r.table;
         return r.verdict;
       }},
      {"determinism", determinism},
      {"calibration", calibration},
      {"leakage guard", leakage},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const bool known = !v.pass && known_failures.contains(id);
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << v.detail
              << (known ? " [known failure, not counted]" : "") << std::endl;
    if (!v.pass && !known) ++failures;
  }
  return failures;
}
