#include "gritnet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "gritnet/baseline.hpp"
#include "gritnet/error.hpp"
#include "gritnet/random.hpp"
#include "gritnet/trainer.hpp"

namespace gritnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string theta_tag(double theta) {
  std::ostringstream out;
  out << theta;
  return out.str();
}

std::string adapted_system(double theta) { return std::string(kAdaptedSystem) + "_theta" + theta_tag(theta); }

CourseFiles CourseFiles::in(const fs::path& dir) {
  return {dir / "events.jsonl", dir / "labels.csv", dir / "schema.ini"};
}

int exit_code_for(const Error& error) {
  switch (error.kind()) {
    case ErrorKind::usage:
    case ErrorKind::config:
    case ErrorKind::io:
      return 2;
    default:
      return 1;
  }
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "'" + path.string() + "' not found");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::corrupt_file, path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) fail(ErrorKind::io, what + " '" + path.string() + "' not found");
}

struct Course {
  CourseSchema schema;
  std::vector<StudentEvents> students;
  std::optional<std::vector<int>> labels;
  std::vector<TokenizedSequence> sequences;
};

Course load_course(const fs::path& dir, bool need_labels, const std::optional<fs::path>& labels_path = {}) {
  const auto files = CourseFiles::in(dir);
  require_file(files.schema, "schema file");
  require_file(files.events, "event file");
  Course course;
  course.schema = read_schema(files.schema);
  const auto events = read_events(files.events);
  for (const auto& e : events) validate_event(e);
  course.students = group_by_student(events);
  const auto label_file = labels_path ? *labels_path : files.labels;
  if (need_labels || labels_path) require_file(label_file, "label file");
  if (fs::exists(label_file) && (need_labels || labels_path)) {
    auto joined = join_labels(std::move(course.students), read_labels(label_file));
    course.students = std::move(joined.students);
    course.labels = std::move(joined.labels);
  }
  if (course.students.empty()) fail(ErrorKind::empty_input, dir.string() + ": no students");
  for (const auto& s : course.students) course.sequences.push_back(tokenize_student(course.schema, s.events));
  return course;
}

LabeledDataset subset(const Course& course, std::span<const std::size_t> rows) {
  LabeledDataset out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back({course.sequences[i], course.labels ? (*course.labels)[i] : 0});
  return out;
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& m, std::span<const std::size_t> rows) {
  auto out = Tensor<T>::matrix(rows.size(), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(m.row(rows[k]).data(), m.cols(), out.row(k).data());
  return out;
}

std::vector<double> take(std::span<const double> v, std::span<const std::size_t> rows) {
  std::vector<double> out;
  for (auto i : rows) out.push_back(v[i]);
  return out;
}

std::vector<int> take(std::span<const int> v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  for (auto i : rows) out.push_back(v[i]);
  return out;
}

/// Runs fn(0..n-1) on up to `workers` threads; the first failure by index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::mutex lock;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard guard(lock);
          if (next >= n) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Exec job_exec(std::size_t workers) { return resolve_workers(workers) > 1 ? Exec::serial : Exec::parallel; }

std::string week_name(int week, std::optional<std::size_t> fold) {
  std::string name = "week" + std::to_string(week);
  if (fold) name += "_fold" + std::to_string(*fold);
  return name;
}

/// The per-week source artifact of a cmd_train directory: the holdout model if
/// present, otherwise the one trained with fold 0 held out.
fs::path source_artifact(const fs::path& dir, const std::string& prefix, int week, const std::string& ext,
                         std::vector<std::string>* notices) {
  const auto single = dir / (prefix + week_name(week, std::nullopt) + ext);
  if (fs::exists(single)) return single;
  const auto fold0 = dir / (prefix + week_name(week, 0) + ext);
  if (fs::exists(fold0)) {
    if (notices) notices->push_back("week " + std::to_string(week) + ": using " + fold0.filename().string());
    return fold0;
  }
  fail(ErrorKind::io, "no " + prefix + "week" + std::to_string(week) + " artifact in '" + dir.string() + "'");
}

void write_assignment(const fs::path& path, const Course& course, const std::vector<std::string>& split) {
  std::ostringstream out;
  out << "student_id,split\n";
  for (std::size_t i = 0; i < course.students.size(); ++i) out << course.students[i].student_id << ',' << split[i] << '\n';
  write_text(path, out.str());
}

std::unordered_map<std::string, std::string> read_assignment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "fold file '" + path.string() + "' not found");
  std::string line;
  std::getline(in, line);
  if (line != "student_id,split") fail(ErrorKind::corrupt_file, path.string() + ": bad header");
  std::unordered_map<std::string, std::string> out;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) fail(ErrorKind::corrupt_file, path.string() + ": bad row '" + line + "'");
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

json history_json(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"valid_auc", e.valid_auc ? json(*e.valid_auc) : json(nullptr)}});
  }
  return {{"best_epoch", h.best_epoch},
          {"best_auc", h.best_auc ? json(*h.best_auc) : json(nullptr)},
          {"epochs", epochs}};
}

}  // namespace

// ---- generate ------------------------------------------------------------------

GenerateResult write_cohort(const SyntheticCourseSpec& spec, std::size_t students, std::uint64_t seed,
                            const fs::path& out) {
  const auto cohort = generate(spec, students, seed);
  GenerateResult result;
  result.spec = spec;
  result.files = CourseFiles::in(out);
  fs::create_directories(out);
  write_events(result.files.events, cohort.events);
  write_labels(result.files.labels, cohort.labels);
  write_schema(result.files.schema, cohort.schema);
  std::size_t graduates = 0;
  for (const auto& [id, label] : cohort.labels) graduates += static_cast<std::size_t>(label);
  result.graduation_rate = static_cast<double>(graduates) / static_cast<double>(students);
  return result;
}

GenerateResult cmd_generate(const GenerateOptions& options) {
  if (options.spec.has_value() == options.preset.has_value()) {
    fail(ErrorKind::usage, "generate needs exactly one of --spec or --preset");
  }
  if (options.students < 1) fail(ErrorKind::usage, "generate: --students must be >= 1");
  if (options.out.empty()) fail(ErrorKind::usage, "generate: --out is required");
  SyntheticCourseSpec spec;
  std::optional<double> rate;
  std::size_t probe = 5000;
  if (options.spec) {
    const auto file = read_spec_file(*options.spec);
    spec = file.spec;
    rate = file.target_rate;
    probe = file.calibration_probe;
  } else {
    spec = preset_spec(*options.preset);
    rate = preset_graduation_rate(*options.preset);
  }
  if (rate) spec = calibrate(spec, *rate, probe, spec.seed);
  return write_cohort(spec, options.students, options.seed, options.out);
}

// ---- train ---------------------------------------------------------------------

TrainSummary cmd_train(const TrainOptions& options) {
  const auto& config = options.config;
  config.validate();
  const auto course = load_course(options.data, true);
  const auto& labels = *course.labels;
  const auto seed = options.seed;

  struct Split {
    std::optional<std::size_t> fold;
    std::vector<std::size_t> train, valid;
  };
  std::vector<Split> splits;
  std::vector<std::string> split_name(labels.size());
  if (config.folds == 1) {
    auto valid = stratified_holdout(labels, config.validation_fraction, derive_seed(seed, 0x686f6c64));
    std::sort(valid.begin(), valid.end());
    std::vector<bool> held(labels.size(), false);
    for (auto i : valid) held[i] = true;
    Split s;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (held[i] ? s.valid : s.train).push_back(i);
      split_name[i] = held[i] ? "valid" : "train";
    }
    splits.push_back(std::move(s));
  } else {
    const auto folds = stratified_kfold(labels, config.folds, seed);
    for (std::size_t f = 0; f < config.folds; ++f) splits.push_back({f, folds.complement(f), folds.members(f)});
    for (std::size_t i = 0; i < labels.size(); ++i) split_name[i] = std::to_string(folds.fold[i]);
  }

  fs::create_directories(options.out);
  write_assignment(options.out / "folds.csv", course, split_name);

  const auto& weeks = config.train.weeks;
  const std::size_t jobs = weeks.size() * splits.size();
  std::vector<json> entries(jobs);
  std::vector<std::optional<fs::path>> written(jobs);
  std::vector<std::string> skipped(jobs);
  const auto exec = job_exec(config.workers);

  parallel_for(jobs, config.workers, [&](std::size_t job) {
    const int week = weeks[job / splits.size()];
    const auto& split = splits[job % splits.size()];
    const auto name = week_name(week, split.fold);
    const auto job_seed = derive_seed(seed, 1000 * static_cast<std::uint64_t>(week) + split.fold.value_or(0));

    TrainConfig tc = config.train;
    tc.weeks = {week};
    tc.seed = job_seed;
    const auto model_config = GritNetConfig::for_schema(course.schema, config.embedding_dim, config.hidden_dim, job_seed);
    auto outcomes = train_weekly<float>(course.schema, subset(course, split.train), subset(course, split.valid),
                                        model_config, tc, exec);
    auto& outcome = outcomes.at(week);
    json entry = {{"week", week},
                  {"fold", split.fold ? json(*split.fold) : json(nullptr)},
                  {"train_students", split.train.size()},
                  {"valid_students", split.valid.size()},
                  {"dropped_train", outcome.dropped_train},
                  {"dropped_valid", outcome.dropped_valid}};
    if (!outcome.result) {
      entry["skipped"] = outcome.skipped;
      skipped[job] = name + ": " + outcome.skipped;
      entries[job] = entry;
      return;
    }
    const auto& model = outcome.result->model;
    const auto ckpt = options.out / (name + ".ckpt");
    save_checkpoint(model, ckpt);
    written[job] = ckpt;
    entry["checkpoint"] = ckpt.filename().string();
    entry["checkpoint_hash"] = hex(checkpoint_hash(model));
    entry["t_max"] = model.t_max;
    entry["history"] = history_json(outcome.result->history);

    std::vector<FeatureVector> features;
    for (auto i : split.train) features.push_back(featurize(course.students[i].events, week));
    auto lr_config = config.logreg;
    lr_config.seed = job_seed;
    const auto vanilla = train_logreg(features, take(std::span<const int>(labels), split.train), lr_config);
    const auto vanilla_path = options.out / ("vanilla_" + name + ".txt");
    save_logreg(vanilla, vanilla_path);
    entry["vanilla"] = vanilla_path.filename().string();
    entries[job] = entry;
  });

  TrainSummary summary;
  for (std::size_t j = 0; j < jobs; ++j) {
    if (written[j]) summary.checkpoints.push_back(*written[j]);
    if (!skipped[j].empty()) summary.notices.push_back("skipped " + skipped[j]);
  }
  json report = {{"command", "train"},
                 {"config_hash", hex(config.hash())},
                 {"seed", seed},
                 {"students", labels.size()},
                 {"folds", config.folds},
                 {"schema",
                  {course.schema.num_contents, course.schema.num_quizzes, course.schema.num_projects,
                   course.schema.delta_cap}},
                 {"runs", entries}};
  summary.report = options.out / "report.json";
  write_json(summary.report, report);
  return summary;
}

// ---- adapt ---------------------------------------------------------------------

AdaptSummary cmd_adapt(const AdaptOptions& options) {
  const auto& config = options.config;
  config.validate();
  const bool need_labels = options.oracle;
  const auto course = load_course(options.target, need_labels, options.target_labels);
  const auto seed = options.seed;
  const auto n = course.students.size();
  if (n < config.target_folds) {
    fail(ErrorKind::stratification, "target has fewer students than folds");
  }

  const auto folds = course.labels ? stratified_kfold(*course.labels, config.target_folds, derive_seed(seed, 0x746172))
                                   : plain_kfold(n, config.target_folds, derive_seed(seed, 0x746172));
  std::vector<std::string> split_name(n);
  for (std::size_t i = 0; i < n; ++i) split_name[i] = std::to_string(folds.fold[i]);
  fs::create_directories(options.out);
  write_assignment(options.out / "target_folds.csv", course, split_name);

  const auto& weeks = config.train.weeks;
  std::vector<json> entries(weeks.size());
  std::vector<std::vector<fs::path>> written(weeks.size());
  std::vector<std::vector<std::string>> notices(weeks.size());
  const auto exec = job_exec(config.workers);

  parallel_for(weeks.size(), config.workers, [&](std::size_t job) {
    const int week = weeks[job];
    auto& out_notes = notices[job];
    const auto source_path = source_artifact(options.source, "", week, ".ckpt", &out_notes);
    const auto source = load_checkpoint<float>(source_path);
    RemapStats stats;
    bool remapped = false;
    const auto start = prepare_for_target(source, course.schema, seed, &stats, &remapped);
    json entry = {{"week", week},
                  {"source_checkpoint", source_path.filename().string()},
                  {"source_frozen_hash", hex(frozen_parameter_hash(source))},
                  {"remapped", remapped}};
    if (remapped) {
      std::ostringstream note;
      note << "week " << week << ": checkpoint vocabulary " << source.config.vocab_size
           << " differs from target vocabulary " << vocab_size(course.schema)
           << "; input layer remapped by ordinal (" << stats.reused_rows << " rows reused, " << stats.fresh_rows
           << " fresh, " << stats.dropped_rows << " dropped)";
      out_notes.push_back(note.str());
      entry["remap"] = {{"notice", note.str()},
                        {"reused_rows", stats.reused_rows},
                        {"fresh_rows", stats.fresh_rows},
                        {"dropped_rows", stats.dropped_rows}};
    }
    const auto start_path = options.out / (week_name(week, std::nullopt) + "_source.ckpt");
    save_checkpoint(start, start_path);
    written[job].push_back(start_path);
    entry["frozen_hash"] = hex(frozen_parameter_hash(start));

    std::vector<TokenizedSequence> truncated;
    truncated.reserve(n);
    for (const auto& s : course.sequences) truncated.push_back(truncate_to_week(s, week));
    std::vector<const TokenizedSequence*> ptrs;
    std::size_t longer = 0;
    for (const auto& s : truncated) {
      ptrs.push_back(&s);
      longer += s.size() > start.t_max ? 1 : 0;
    }
    entry["truncated_sequences"] = longer;
    const auto embeddings = sequence_embeddings(start, std::span<const TokenizedSequence* const>(ptrs), exec);

    json fold_entries = json::array();
    for (std::size_t f = 0; f < config.target_folds; ++f) {
      const auto rows = folds.complement(f);
      const auto fit = take_rows(embeddings, rows);
      const auto fold_seed = derive_seed(seed, 100 * static_cast<std::uint64_t>(week) + f);
      json fe = {{"fold", f}, {"adapt_students", rows.size()}};
      json runs = json::array();
      try {
        const auto result = adapt_from_embeddings(start, fit, config.adapt, fold_seed);
        for (std::size_t r = 0; r < result.runs.size(); ++r) {
          const auto& run = result.runs[r];
          json rj = {{"theta", run.theta}, {"positives", run.positives}, {"negatives", run.negatives}};
          if (run.model) {
            const auto path = options.out / (week_name(week, f) + "_theta" + theta_tag(run.theta) + ".ckpt");
            save_checkpoint(*run.model, path);
            written[job].push_back(path);
            rj["checkpoint"] = path.filename().string();
            rj["frozen_hash"] = hex(frozen_parameter_hash(*run.model));
            rj["checkpoint_hash"] = hex(checkpoint_hash(*run.model));
            rj["selection_auc"] = run.selection_auc ? json(*run.selection_auc) : json(nullptr);
          } else {
            rj["error"] = run.error;
          }
          runs.push_back(rj);
        }
        fe["selected_theta"] = result.selected ? json(result.runs[*result.selected].theta) : json(nullptr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate_labels) throw;
        fe["error"] = e.what();
        fe["selected_theta"] = nullptr;
        out_notes.push_back(week_name(week, f) + ": " + e.what());
      }
      fe["runs"] = runs;
      if (options.oracle) {
        const auto fit_labels = take(std::span<const int>(*course.labels), rows);
        const auto oracle = oracle_from_embeddings(start, fit, fit_labels, config.adapt, fold_seed);
        const auto path = options.out / (week_name(week, f) + "_oracle.ckpt");
        save_checkpoint(oracle, path);
        written[job].push_back(path);
        fe["oracle"] = {{"checkpoint", path.filename().string()}, {"frozen_hash", hex(frozen_parameter_hash(oracle))}};
      }
      fold_entries.push_back(fe);
    }
    entry["folds"] = fold_entries;
    entries[job] = entry;
  });

  AdaptSummary summary;
  for (std::size_t j = 0; j < weeks.size(); ++j) {
    summary.checkpoints.insert(summary.checkpoints.end(), written[j].begin(), written[j].end());
    summary.notices.insert(summary.notices.end(), notices[j].begin(), notices[j].end());
  }
  json thresholds = config.adapt.thresholds;
  json report = {{"command", "adapt"},
                 {"config_hash", hex(config.hash())},
                 {"seed", seed},
                 {"students", n},
                 {"folds", config.target_folds},
                 {"oracle", options.oracle},
                 {"thresholds", thresholds},
                 {"weeks", entries}};
  summary.report = options.out / "report.json";
  write_json(summary.report, report);
  return summary;
}

// ---- evaluate ------------------------------------------------------------------

EvaluationResult summarize(std::map<std::string, FoldAucs> fold_aucs) {
  EvaluationResult result;
  const std::vector<std::string> order_first = {kBaselineSystem, kVanillaSystem, kAdaptedSystem};
  std::vector<std::string> order;
  for (const auto& name : order_first) {
    if (fold_aucs.contains(name)) order.push_back(name);
  }
  for (const auto& [name, aucs] : fold_aucs) {
    if (std::find(order.begin(), order.end(), name) == order.end() && name != kOracleSystem) order.push_back(name);
  }
  if (fold_aucs.contains(kOracleSystem)) order.push_back(kOracleSystem);
  for (const auto& name : order) result.curves.push_back(weekly_curve(name, fold_aucs.at(name)));

  const auto find = [&](const std::string& name) -> const WeeklyCurve* {
    for (const auto& c : result.curves) {
      if (c.system == name) return &c;
    }
    return nullptr;
  };
  const auto* base = find(kBaselineSystem);
  const auto* oracle = find(kOracleSystem);
  if (base && oracle) {
    for (const auto& c : result.curves) {
      if (c.system.rfind(kAdaptedSystem, 0) == 0) result.arr[c.system] = arr_report(*base, c, *oracle);
    }
  }
  result.fold_aucs = std::move(fold_aucs);
  return result;
}

void write_evaluation(const EvaluationResult& result, const fs::path& out, const std::string& title) {
  fs::create_directories(out);
  emit_plot(result.curves, out / "curves", title);
  json doc = json::object();
  for (const auto& [system, weeks] : result.fold_aucs) {
    json sys = json::object();
    for (const auto& [week, values] : weeks) {
      json arr = json::array();
      for (const auto& v : values) arr.push_back(v ? json(*v) : json(nullptr));
      sys[std::to_string(week)] = arr;
    }
    doc[system] = sys;
  }
  write_json(out / "fold_aucs.json", doc);
  std::string tables;
  for (const auto& [system, report] : result.arr) tables += format_arr_table(report, system) + "\n";
  write_text(out / "arr.txt", tables);
}

EvaluationResult cmd_evaluate(const EvaluateOptions& options) {
  const auto& config = options.config;
  config.validate();
  const auto course = load_course(options.target, true);
  const auto& labels = *course.labels;
  const auto assignment = read_assignment(options.adapt / "target_folds.csv");
  const auto report = read_json(options.adapt / "report.json");

  std::vector<std::size_t> fold_of(course.students.size());
  std::size_t folds = 0;
  for (std::size_t i = 0; i < course.students.size(); ++i) {
    const auto it = assignment.find(course.students[i].student_id);
    if (it == assignment.end()) {
      fail(ErrorKind::config, "student '" + course.students[i].student_id + "' is missing from target_folds.csv");
    }
    fold_of[i] = std::stoul(it->second);
    folds = std::max(folds, fold_of[i] + 1);
  }
  std::vector<std::vector<std::size_t>> members(folds);
  for (std::size_t i = 0; i < fold_of.size(); ++i) members[fold_of[i]].push_back(i);

  std::map<int, json> selected_by_week;
  for (const auto& w : report.at("weeks")) selected_by_week[w.at("week").get<int>()] = w.at("folds");

  const auto exec = job_exec(config.workers);
  EvaluationResult result;
  std::map<std::string, FoldAucs> aucs;
  const auto score = [&](const std::string& system, int week, std::size_t f, std::optional<std::vector<double>> preds) {
    auto& row = aucs[system][week];
    row.resize(folds);
    if (!preds) return;
    row[f] = try_auc(take(std::span<const double>(*preds), members[f]), take(std::span<const int>(labels), members[f]));
  };

  for (int week : config.train.weeks) {
    const auto start_path = options.adapt / (week_name(week, std::nullopt) + "_source.ckpt");
    require_file(start_path, "checkpoint");
    const auto start = load_checkpoint<float>(start_path, course.schema);

    std::vector<TokenizedSequence> truncated;
    for (const auto& s : course.sequences) truncated.push_back(truncate_to_week(s, week));
    std::vector<const TokenizedSequence*> ptrs;
    for (const auto& s : truncated) ptrs.push_back(&s);
    // Adapted models share the frozen layers of the start model, so one
    // embedding pass serves all of them.
    std::map<std::uint64_t, Tensor<float>> cache;
    const auto embeddings_for = [&](const GritNetModel<float>& m) -> const Tensor<float>& {
      const auto key = frozen_parameter_hash(m);
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, sequence_embeddings(m, std::span<const TokenizedSequence* const>(ptrs), exec)).first;
      }
      return it->second;
    };
    const auto base = predict_from_embeddings(start, embeddings_for(start));

    const auto vanilla_path = source_artifact(options.train, "vanilla_", week, ".txt", &result.notices);
    const auto vanilla = load_logreg(vanilla_path);
    std::vector<double> vanilla_preds;
    for (const auto& s : course.students) vanilla_preds.push_back(predict(vanilla, std::span<const double>(featurize(s.events, week))));

    const auto& fold_info = selected_by_week.at(week);
    for (std::size_t f = 0; f < folds; ++f) {
      score(kBaselineSystem, week, f, base);
      score(kVanillaSystem, week, f, vanilla_preds);
      std::optional<double> selected;
      for (const auto& fe : fold_info) {
        if (fe.at("fold").get<std::size_t>() == f && !fe.at("selected_theta").is_null()) {
          selected = fe.at("selected_theta").get<double>();
        }
      }
      std::optional<std::vector<double>> selected_preds;
      for (double theta : config.adapt.thresholds) {
        const auto path = options.adapt / (week_name(week, f) + "_theta" + theta_tag(theta) + ".ckpt");
        std::optional<std::vector<double>> preds;
        if (fs::exists(path)) {
          const auto model = load_checkpoint<float>(path, course.schema);
          preds = predict_from_embeddings(model, embeddings_for(model));
        }
        if (selected && *selected == theta) selected_preds = preds;
        score(adapted_system(theta), week, f, preds);
      }
      score(kAdaptedSystem, week, f, selected_preds);
      const auto oracle_path = options.adapt / (week_name(week, f) + "_oracle.ckpt");
      if (fs::exists(oracle_path)) {
        const auto model = load_checkpoint<float>(oracle_path, course.schema);
        score(kOracleSystem, week, f, predict_from_embeddings(model, embeddings_for(model)));
      }
    }
  }

  auto summary = summarize(std::move(aucs));
  summary.notices = std::move(result.notices);
  write_evaluation(summary, options.out, "");
  return summary;
}

// ---- plot ----------------------------------------------------------------------

PlotResult cmd_plot(const std::vector<fs::path>& inputs, const fs::path& stem) {
  if (inputs.empty()) fail(ErrorKind::usage, "plot needs at least one curve file");
  std::vector<WeeklyCurve> curves;
  for (const auto& path : inputs) {
    require_file(path, "curve file");
    std::ifstream in(path);
    std::stringstream text;
    text << in.rdbuf();
    for (auto& c : parse_curves_csv(text.str())) {
      auto it = std::find_if(curves.begin(), curves.end(), [&](const WeeklyCurve& x) { return x.system == c.system; });
      if (it == curves.end()) {
        curves.push_back(std::move(c));
      } else {
        *it = std::move(c);
      }
    }
  }
  PlotResult result;
  result.files = emit_plot(curves, stem);
  const auto find = [&](const std::string& name) -> const WeeklyCurve* {
    for (const auto& c : curves) {
      if (c.system == name) return &c;
    }
    return nullptr;
  };
  const auto* base = find(kBaselineSystem);
  const auto* oracle = find(kOracleSystem);
  std::vector<const WeeklyCurve*> adapted;
  for (const auto& c : curves) {
    if (c.system.rfind(kAdaptedSystem, 0) == 0) adapted.push_back(&c);
  }
  if (!base || !oracle || adapted.empty()) {
    result.warnings.push_back("ARR needs baseline, adapted and oracle curves (" + std::string(kBaselineSystem) +
                              ", " + kAdaptedSystem + "*, " + kOracleSystem + "); table skipped");
    return result;
  }
  std::string tables;
  for (const auto* a : adapted) tables += format_arr_table(arr_report(*base, *a, *oracle), a->system) + "\n";
  result.arr_table = tables;
  auto arr_path = stem;
  arr_path += ".arr.txt";
  write_text(arr_path, tables);
  return result;
}

// ---- experiment ----------------------------------------------------------------

ExperimentResult cmd_experiment(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  if (!config.source_spec) fail(ErrorKind::usage, "experiment needs [source] spec");
  const auto file = read_spec_file(*config.source_spec);
  auto source_spec = file.spec;
  if (file.target_rate) source_spec = calibrate(source_spec, *file.target_rate, file.calibration_probe, source_spec.seed);
  auto target_spec = shift(source_spec, config.shift);
  if (config.shift.base_rate) {
    target_spec = calibrate(target_spec, *config.shift.base_rate, file.calibration_probe, target_spec.seed + 1);
  }
  fs::create_directories(config.out);
  write_spec_file(config.out / "source_spec.ini", source_spec);
  write_spec_file(config.out / "target_spec.ini", target_spec);

  ExperimentResult result;
  result.out = config.out;
  std::map<std::string, FoldAucs> pooled;
  for (auto seed : config.seeds) {
    const auto dir = config.out / ("seed" + std::to_string(seed));
    write_cohort(source_spec, config.source_students, derive_seed(seed, 1), dir / "source");
    write_cohort(target_spec, config.target_students, derive_seed(seed, 2), dir / "target");
    auto trained = cmd_train({dir / "source", dir / "train", config, seed});
    result.notices.insert(result.notices.end(), trained.notices.begin(), trained.notices.end());
    AdaptOptions adapt_options{dir / "train", dir / "target", dir / "adapt", config, seed, config.oracle, std::nullopt};
    auto adapted = cmd_adapt(adapt_options);
    result.notices.insert(result.notices.end(), adapted.notices.begin(), adapted.notices.end());
    auto evaluated = cmd_evaluate({dir / "train", dir / "adapt", dir / "target", dir / "eval", config});
    for (auto& [system, weeks] : evaluated.fold_aucs) {
      for (auto& [week, values] : weeks) {
        auto& dst = pooled[system][week];
        dst.insert(dst.end(), values.begin(), values.end());
      }
    }
  }
  result.evaluation = summarize(std::move(pooled));
  write_evaluation(result.evaluation, config.out, "");

  json summary = {{"config_hash", hex(config.hash())}, {"seeds", config.seeds}};
  json means = json::object();
  for (const auto& c : result.evaluation.curves) {
    double sum = 0.0;
    int count = 0;
    for (const auto& p : c.points) {
      if (p.week >= 1 && p.week <= 4 && p.folds > 0) {
        sum += p.mean_auc;
        ++count;
      }
    }
    means[c.system] = count ? json(sum / count) : json(nullptr);
  }
  summary["mean_auc_weeks_1_4"] = means;
  json arrs = json::object();
  for (const auto& [system, report] : result.evaluation.arr) arrs[system] = report.mean ? json(*report.mean) : json(nullptr);
  summary["mean_arr_weeks_1_4"] = arrs;
  write_json(config.out / "summary.json", summary);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace gritnet
