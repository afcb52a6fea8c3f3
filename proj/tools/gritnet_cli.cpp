#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

#include "gritnet/commands.hpp"
#include "gritnet/error.hpp"

using namespace gritnet;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  std::string weeks;
  std::optional<std::size_t> folds;
};

void add_common(CLI::App* app, Common& c, bool with_folds = true) {
  app->add_option("--config", c.config, "Experiment config (INI)");
  app->add_option("--seed", c.seed, "Seed");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--workers", c.workers, "Parallel jobs (0: all cores)");
  app->add_option("--weeks", c.weeks, "Weeks, e.g. 1-4 or 1,2,8");
  if (with_folds) app->add_option("--folds", c.folds, "Cross-validation folds");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig config = c.config.empty() ? ExperimentConfig{} : read_config(c.config);
  if (!c.out.empty()) config.out = c.out;
  if (c.workers) config.workers = *c.workers;
  if (!c.weeks.empty()) config.train.weeks = parse_int_list(c.weeks);
  return config;
}

std::uint64_t seed_of(const Common& c, const ExperimentConfig& config) {
  return c.seed ? *c.seed : config.seeds.front();
}

fs::path need(const std::string& flag, const std::string& value, const std::optional<fs::path>& fallback) {
  if (!value.empty()) return value;
  if (fallback) return *fallback;
  fail(ErrorKind::usage, flag + " is required");
}

void print_notices(const std::vector<std::string>& notices) {
  for (const auto& n : notices) std::cerr << "note: " << n << '\n';
}

void print_curves(const EvaluationResult& r) {
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& c : r.curves) {
    std::cout << std::left << std::setw(32) << c.system;
    for (const auto& p : c.points) std::cout << " w" << p.week << '=' << p.mean_auc;
    std::cout << '\n';
  }
  for (const auto& [system, report] : r.arr) {
    std::cout << "mean ARR " << system << ": ";
    if (report.mean) {
      std::cout << std::setprecision(4) << *report.mean << std::setprecision(2);
    } else {
      std::cout << "undefined";
    }
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GritNet dropout prediction with unsupervised course adaptation"};
  app.require_subcommand(1);

  GenerateOptions gen;
  std::string gen_spec, gen_preset;
  auto* generate_cmd = app.add_subcommand("generate", "Simulate a course: events.jsonl, labels.csv, schema.ini");
  generate_cmd->add_option("--spec", gen_spec, "Course spec file (INI key = value)");
  generate_cmd->add_option("--preset", gen_preset, "Built-in course")->check(CLI::IsMember(preset_names()));
  generate_cmd->add_option("--students", gen.students, "Number of students")->capture_default_str();
  generate_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  generate_cmd->add_option("--out", gen.out, "Output directory")->required();

  Common train_c;
  std::string train_data;
  auto* train_cmd = app.add_subcommand("train", "Weekly GritNet and logistic-regression models on a labeled course");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--data", train_data, "Course directory (default: [data] source)");

  Common adapt_c;
  std::string adapt_source, adapt_target, adapt_labels, adapt_thresholds;
  bool adapt_oracle = false;
  auto* adapt_cmd = app.add_subcommand("adapt", "Pseudo-label adaptation of trained checkpoints to a target course");
  add_common(adapt_cmd, adapt_c);
  adapt_cmd->add_option("--source", adapt_source, "Output directory of train")->required();
  adapt_cmd->add_option("--target", adapt_target, "Target course directory (default: [data] target)");
  adapt_cmd->add_option("--thresholds", adapt_thresholds, "Pseudo-label thresholds, e.g. 0.1,0.2");
  adapt_cmd->add_flag("--oracle", adapt_oracle, "Also train the output layer on true target labels");
  adapt_cmd->add_option("--target-labels", adapt_labels, "Target labels for folds and the oracle");

  Common eval_c;
  std::string eval_train, eval_adapt, eval_target;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-fold AUC curves, plot and ARR tables");
  add_common(evaluate_cmd, eval_c, false);
  evaluate_cmd->add_option("--train", eval_train, "Output directory of train")->required();
  evaluate_cmd->add_option("--adapt", eval_adapt, "Output directory of adapt")->required();
  evaluate_cmd->add_option("--target", eval_target, "Labeled target course (default: [data] target)");

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "Merge curve CSVs into one CSV and SVG");
  plot_cmd->add_option("inputs", plot_inputs, "Curve CSV files")->required();
  plot_cmd->add_option("--out", plot_out, "Output stem (writes <stem>.csv, <stem>.svg)")->required();

  Common exp_c;
  std::string exp_seeds;
  auto* experiment_cmd = app.add_subcommand("experiment", "generate, train, adapt and evaluate for every seed");
  add_common(experiment_cmd, exp_c);
  experiment_cmd->get_option("--config")->required();
  experiment_cmd->add_option("--seeds", exp_seeds, "Seeds, e.g. 1-3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate_cmd) {
      if (!gen_spec.empty()) gen.spec = gen_spec;
      if (!gen_preset.empty()) gen.preset = gen_preset;
      const auto r = cmd_generate(gen);
      std::cout << "wrote " << r.files.events.string() << ", " << r.files.labels.string() << ", "
                << r.files.schema.string() << " (graduation rate " << r.graduation_rate << ")\n";
    } else if (*train_cmd) {
      auto config = load(train_c);
      if (train_c.folds) config.folds = *train_c.folds;
      TrainOptions options{need("--data", train_data, config.source_dir), config.out, config, seed_of(train_c, config)};
      const auto r = cmd_train(options);
      print_notices(r.notices);
      std::cout << r.checkpoints.size() << " checkpoints, report " << r.report.string() << '\n';
    } else if (*adapt_cmd) {
      auto config = load(adapt_c);
      if (adapt_c.folds) config.target_folds = *adapt_c.folds;
      if (!adapt_thresholds.empty()) config.adapt.thresholds = parse_double_list(adapt_thresholds);
      AdaptOptions options;
      options.source = adapt_source;
      options.target = need("--target", adapt_target, config.target_dir);
      options.out = config.out;
      options.config = config;
      options.seed = seed_of(adapt_c, config);
      options.oracle = adapt_oracle;
      if (!adapt_labels.empty()) options.target_labels = fs::path(adapt_labels);
      if (adapt_oracle && !options.target_labels) options.target_labels = CourseFiles::in(options.target).labels;
      const auto r = cmd_adapt(options);
      print_notices(r.notices);
      std::cout << r.checkpoints.size() << " checkpoints, report " << r.report.string() << '\n';
    } else if (*evaluate_cmd) {
      auto config = load(eval_c);
      EvaluateOptions options{eval_train, eval_adapt, need("--target", eval_target, config.target_dir), config.out,
                              config};
      const auto r = cmd_evaluate(options);
      print_notices(r.notices);
      print_curves(r);
    } else if (*plot_cmd) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      const auto r = cmd_plot(inputs, plot_out);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << r.files.csv.string() << ", " << r.files.svg.string() << '\n';
      if (r.arr_table) std::cout << *r.arr_table;
    } else if (*experiment_cmd) {
      auto config = load(exp_c);
      if (exp_c.folds) config.folds = *exp_c.folds;
      if (exp_c.seed) config.seeds = {*exp_c.seed};
      if (!exp_seeds.empty()) {
        config.seeds.clear();
        for (int s : parse_int_list(exp_seeds)) config.seeds.push_back(static_cast<std::uint64_t>(s));
      }
      const auto r = cmd_experiment(config);
      print_notices(r.notices);
      print_curves(r.evaluation);
      std::cout << "results in " << r.out.string() << " (" << std::setprecision(1) << r.seconds << " s)\n";
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
