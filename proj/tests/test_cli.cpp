#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "gritnet/commands.hpp"
#include "gritnet/error.hpp"

using namespace gritnet;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "gritnet_cli_test";

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args) {
  const auto out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(GRITNET_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext ? 1 : 0;
  return n;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    write(kRoot / "src.ini", "preset = symmetric\nnum_contents = 12\nnum_quizzes = 6\n");
    write(kRoot / "tgt.ini", "preset = symmetric\nnum_contents = 10\nnum_quizzes = 8\nnum_projects = 3\n");
    write(kRoot / "config.ini",
          "[model]\nembedding_dim = 4\nhidden_dim = 2\n[train]\nepochs = 2\nlearning_rate = 1e-2\n"
          "[adapt]\nepochs = 2\nfolds = 3\n[run]\nworkers = 2\n");
  }
  static std::string config() { return "--config " + (kRoot / "config.ini").string(); }
  static std::string dir(const std::string& name) { return (kRoot / name).string(); }
  static void generate_pair() {
    if (fs::exists(kRoot / "src" / "events.jsonl")) return;
    ASSERT_EQ(cli("generate --spec " + dir("src.ini") + " --students 120 --seed 7 --out " + dir("src")).code, 0);
    ASSERT_EQ(cli("generate --spec " + dir("tgt.ini") + " --students 90 --seed 8 --out " + dir("tgt")).code, 0);
  }
};

}  // namespace

TEST_F(Cli, GenerateWritesThreeFilesDeterministically) {
  ASSERT_EQ(cli("generate --spec " + dir("src.ini") + " --students 50 --seed 7 --out " + dir("g1")).code, 0);
  ASSERT_EQ(cli("generate --spec " + dir("src.ini") + " --students 50 --seed 7 --out " + dir("g2")).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(kRoot / "g1")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(kRoot / "g2" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 3u);
}

TEST_F(Cli, UsageAndMissingFilesExitTwo) {
  auto r = cli("generate --spec " + dir("nope.ini") + " --out " + dir("g3"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not found"), std::string::npos);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("generate --out " + dir("g4")).code, 2);  // neither --spec nor --preset
  EXPECT_EQ(cli("train --data " + dir("missing") + " --out " + dir("t0")).code, 2);
  write(kRoot / "badcfg.ini", "[train]\nepochz = 3\n");
  EXPECT_EQ(cli("train --config " + dir("badcfg.ini") + " --data " + dir("src") + " --out " + dir("t0")).code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(Cli, TrainQuickModeGivesOneCheckpointPerFold) {
  generate_pair();
  const auto r = cli("train " + config() + " --data " + dir("src") + " --weeks 1 --folds 5 --out " + dir("train5"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(kRoot / "train5", ".ckpt"), 5u);
  EXPECT_TRUE(fs::exists(kRoot / "train5" / "report.json"));
  EXPECT_TRUE(fs::exists(kRoot / "train5" / "week1_fold4.ckpt"));
  EXPECT_TRUE(fs::exists(kRoot / "train5" / "vanilla_week1_fold4.txt"));
  const auto report = slurp(kRoot / "train5" / "report.json");
  EXPECT_NE(report.find("config_hash"), std::string::npos);
  EXPECT_NE(report.find("\"seed\""), std::string::npos);
}

TEST_F(Cli, BadLabelsFailBeforeTraining) {
  generate_pair();
  fs::create_directories(kRoot / "badlabels");
  for (const char* f : {"events.jsonl", "schema.ini"}) fs::copy_file(kRoot / "src" / f, kRoot / "badlabels" / f, fs::copy_options::overwrite_existing);
  write(kRoot / "badlabels" / "labels.csv", "student_id,label\ns0,7\n");
  const auto r = cli("train " + config() + " --data " + dir("badlabels") + " --weeks 1 --out " + dir("trainbad"));
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(fs::exists(kRoot / "trainbad" / "week1_fold0.ckpt"));
}

TEST_F(Cli, AdaptEvaluatePlot) {
  generate_pair();
  ASSERT_EQ(cli("train " + config() + " --data " + dir("src") + " --weeks 1-2 --folds 1 --out " + dir("train1")).code, 0);
  EXPECT_TRUE(fs::exists(kRoot / "train1" / "week2.ckpt"));

  auto r = cli("adapt " + config() + " --source " + dir("train1") + " --target " + dir("tgt") +
               " --weeks 1-2 --oracle --out " + dir("adapt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("remapped"), std::string::npos);
  EXPECT_NE(slurp(kRoot / "adapt" / "report.json").find("\"notice\""), std::string::npos);
  std::size_t theta = 0, oracle = 0;
  for (const auto& e : fs::directory_iterator(kRoot / "adapt")) {
    const auto name = e.path().filename().string();
    theta += name.find("_theta") != std::string::npos;
    oracle += name.find("_oracle") != std::string::npos;
  }
  EXPECT_LE(theta, 2u * 3u * 4u);  // weeks x folds x default grid, minus single-class runs
  EXPECT_EQ(oracle, 2u * 3u);
  EXPECT_TRUE(fs::exists(kRoot / "adapt" / "target_folds.csv"));

  r = cli("evaluate " + config() + " --train " + dir("train1") + " --adapt " + dir("adapt") + " --target " +
          dir("tgt") + " --weeks 1-2 --out " + dir("eval"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"curves.csv", "curves.svg", "arr.txt", "fold_aucs.json"}) {
    EXPECT_TRUE(fs::exists(kRoot / "eval" / f)) << f;
  }
  const auto curves = parse_curves_csv(slurp(kRoot / "eval" / "curves.csv"));
  EXPECT_EQ(curves.front().system, kBaselineSystem);
  EXPECT_EQ(curves.back().system, kOracleSystem);

  r = cli("plot " + dir("eval/curves.csv") + " --out " + dir("plot/all"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("ARR"), std::string::npos);

  write(kRoot / "single.csv", "system,week,mean_auc,std_auc\nvanilla_baseline,1,70,1\n");
  r = cli("plot " + dir("single.csv") + " --out " + dir("plot/single"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(kRoot / "plot" / "single.svg"));
  EXPECT_FALSE(fs::exists(kRoot / "plot" / "single.arr.txt"));
}

TEST_F(Cli, OracleWithoutLabelsIsAnError) {
  generate_pair();
  fs::create_directories(kRoot / "nolabels");
  for (const char* f : {"events.jsonl", "schema.ini"}) fs::copy_file(kRoot / "tgt" / f, kRoot / "nolabels" / f, fs::copy_options::overwrite_existing);
  ASSERT_EQ(cli("train " + config() + " --data " + dir("src") + " --weeks 1 --folds 1 --out " + dir("train_nl")).code, 0);
  EXPECT_EQ(cli("adapt " + config() + " --source " + dir("train_nl") + " --target " + dir("nolabels") +
                " --weeks 1 --oracle --out " + dir("adapt_nl")).code,
            2);
  // without the oracle, unlabeled targets are fine
  EXPECT_EQ(cli("adapt " + config() + " --source " + dir("train_nl") + " --target " + dir("nolabels") +
                " --weeks 1 --out " + dir("adapt_nl")).code,
            0);
}

TEST(ConfigFile, ParsesListsAndRejectsUnknownKeys) {
  EXPECT_EQ(parse_int_list("1-3,8"), (std::vector<int>{1, 2, 3, 8}));
  EXPECT_EQ(parse_double_list("0.1, 0.2"), (std::vector<double>{0.1, 0.2}));
  EXPECT_THROW(parse_int_list("3-1"), Error);
  EXPECT_THROW(parse_int_list("a"), Error);

  const auto shipped = read_config(fs::path(GRITNET_CONFIGS) / "experiment.ini");
  EXPECT_EQ(shipped.train.weeks, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(shipped.adapt.thresholds, (std::vector<double>{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(shipped.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(shipped.source_students, 1000u);
  EXPECT_EQ(shipped.hash(), read_config(fs::path(GRITNET_CONFIGS) / "experiment.ini").hash());
  auto changed = shipped;
  changed.adapt.epochs += 1;
  EXPECT_NE(changed.hash(), shipped.hash());
  changed = shipped;
  changed.workers = 7;
  EXPECT_EQ(changed.hash(), shipped.hash());

  fs::create_directories(kRoot);
  write(kRoot / "unknown.ini", "[magic]\nx = 1\n");
  try {
    read_config(kRoot / "unknown.ini");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_code_for(e), 2);
  }
}
