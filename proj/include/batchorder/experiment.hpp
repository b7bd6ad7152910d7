#pragma once

// Config-driven experiments: one JSON document describes a run; sweeps
// expand a grid into one document per cell.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchorder/bop.hpp"
#include "batchorder/brrr.hpp"
#include "batchorder/metrics.hpp"

namespace batchorder {

struct DatasetConfig {
  std::string kind = "blobs";  ///< linreg | blobs | digits | idx
  std::size_t n = 4000;        ///< training examples
  std::size_t test_n = 1000;
  std::size_t classes = 4;
  double separation = 3.0;
  double sigma = 1.0;
  double noise_sd = 1.0;
  std::string images, labels;            ///< idx: training files
  std::string test_images, test_labels;  ///< idx: test files
  std::string cache_dir;                 ///< digits: IDX cache directory
};

struct ExperimentConfig {
  std::string run_id = "run";
  DatasetConfig dataset;
  ModelSpec model{ModelKind::mlp, 2, 4, 32};
  std::optional<ModelSpec> surrogate;
  OptimizerConfig optimizer{OptimizerKind::sgd, 0.1};
  OptimizerConfig surrogate_optimizer{OptimizerKind::adam, 0.001};
  std::optional<AttackSpec> attack;
  int epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::string output_dir;
  Augmentation augmentation;
  bool track_bias = false;
  nlohmann::json extra = nlohmann::json::object();  ///< bob / bop / theory sections, passed through
};

/// Parses and validates. Collects every offending key and throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Train and test sets for a config, from the (seed, data) stream.
std::pair<Dataset, Dataset> make_data(const ExperimentConfig& cfg);
/// A fresh source model from the (seed, init) stream.
std::unique_ptr<Model> make_source_model(const ExperimentConfig& cfg);

/// Runs one arm; writes `<output_dir>/<run_id>.csv` when output_dir is set.
/// Arms that differ only in `attack` share data, initialization and the
/// benign shuffle stream.
MetricsLog run_experiment(const ExperimentConfig& cfg);

/// The same config with the attack removed and "-baseline" appended to run_id.
ExperimentConfig baseline_of(const ExperimentConfig& cfg);

struct DeltaReport {
  int baseline_best_epoch = 0;
  int attacked_best_epoch = 0;
  double baseline_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double delta_relative = 0.0;  ///< percent: 100·(attacked − baseline)/baseline
  double delta_points = 0.0;    ///< percentage points: 100·(attacked − baseline)
  std::optional<int> drop_epoch;      ///< first epoch attacked < baseline − 1 point
  std::optional<int> recovery_epoch;  ///< first later epoch back within 1 point
  std::optional<int> epochs_to_recover;
};

/// Test accuracies at each arm's best test-loss epoch, plus the recovery
/// scan. Throws DimensionError when the logs cover different epochs.
DeltaReport compare_arms(const MetricsLog& baseline, const MetricsLog& attacked);

/// Axes a sweep may vary.
inline constexpr const char* kSweepAxes[] = {"policy",          "mode",          "batch_size",
                                             "optimizer",       "learning_rate", "momentum",
                                             "surrogate_optimizer", "surrogate_learning_rate", "surrogate_momentum"};

struct SweepCell {
  std::size_t index = 0;
  nlohmann::json values;  ///< axis → value
  ExperimentConfig config;
  DeltaReport delta;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<MetricsLog> logs;  ///< attacked arm per cell
  std::string summary_csv;
};

/// Cartesian product of `grid` (axis → list of JSON values) over `base`.
/// Each cell runs the attacked arm and, once per distinct baseline, the
/// benign arm. Cells run on up to `workers` threads; outputs are merged by
/// cell index. With an output_dir, writes cells/cell_NNN.json, per-cell CSVs
/// and summary.csv.
SweepResult run_sweep(const ExperimentConfig& base, const nlohmann::json& grid, int workers = 1);

/// Expands a grid into cell configs without running them.
std::vector<SweepCell> expand_grid(const ExperimentConfig& base, const nlohmann::json& grid);

struct TrendFlag {
  bool monotone = false;   ///< attack strength never drops by more than `tolerance` as x grows
  double spearman = 0.0;
};

/// Attack strength (−delta_points) against `xs`.
TrendFlag trend_flag(const std::vector<double>& xs, const std::vector<double>& strength, double tolerance);

}  // namespace batchorder
