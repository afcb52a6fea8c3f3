#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gritnet/baseline.hpp"
#include "gritnet/model.hpp"
#include "gritnet/synthgen.hpp"
#include "gritnet/trainer.hpp"

namespace gritnet {

/// Everything one study needs. Read from a sectioned INI file; relative paths
/// resolve against the directory of that file. Unknown sections or keys are
/// config errors.
struct ExperimentConfig {
  // [data] course directories for the standalone train/adapt/evaluate commands
  std::optional<std::filesystem::path> source_dir;
  std::optional<std::filesystem::path> target_dir;

  // [source] synthetic source course
  std::optional<std::filesystem::path> source_spec;
  std::size_t source_students = 1000;

  // [shift] and [target]
  ShiftSpec shift;
  std::size_t target_students = 1000;

  // [model]
  std::uint32_t embedding_dim = 64;
  std::uint32_t hidden_dim = 32;

  // [train]
  TrainConfig train;
  std::size_t folds = 5;
  double validation_fraction = 0.2;  // holdout share when folds = 1

  // [adapt]
  AdaptConfig adapt;
  std::size_t target_folds = 5;
  bool oracle = true;

  // [baseline]
  LogRegConfig logreg;

  // [run]
  std::vector<std::uint64_t> seeds{1};
  std::size_t workers = 0;  // 0: available cores
  std::filesystem::path out = "runs";

  void validate() const;
  /// Canonical text of every field; the config hash is taken over it.
  std::string canonical() const;
  std::uint64_t hash() const;
};

ExperimentConfig read_config(const std::filesystem::path& path);

/// "1-4", "1,3,5" or a mix of both.
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

std::size_t resolve_workers(std::size_t workers);

}  // namespace gritnet
