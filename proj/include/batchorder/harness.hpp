#pragma once

// Multi-run studies behind the `bob`, `bop` and `theory` subcommands. Each
// reads its own section of the experiment document and produces CSV.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "batchorder/bop.hpp"
#include "batchorder/experiment.hpp"
#include "batchorder/theory.hpp"

namespace batchorder {

// --- backdoor study -----------------------------------------------------------

struct BobStudyConfig {
  std::vector<BobArm> arms{BobArm::random_natural, BobArm::ceiling, BobArm::whitebox, BobArm::blackbox};
  TriggerPattern::Kind trigger = TriggerPattern::Kind::flag_like;
  std::vector<std::size_t> targets{0};
  std::vector<std::uint64_t> seeds;  ///< empty: the config seed
  BobSchedule schedule;
  std::size_t candidate_count = 300;
  /// Matched arms run once per value; the others ignore it.
  std::vector<double> v_fractions{0.7};
  NormOrder p = NormOrder::l2;
};

/// Reads `doc["bob"]` (absent means defaults). Throws ConfigError.
BobStudyConfig parse_bob_section(const nlohmann::json& doc);

struct BobRunRecord {
  BobArm arm;
  std::optional<double> v_fraction;
  std::size_t target = 0;
  std::uint64_t seed = 0;
  TriggerMetrics trigger;
  Evaluation test;
  double mean_match_distance = 0.0;
};

struct BobArmSummary {
  BobArm arm;
  std::optional<double> v_fraction;
  std::size_t runs = 0;
  double trigger_accuracy = 0.0;      ///< mean over targets and seeds
  double std_over_targets = 0.0;      ///< std of per-target means
  double std_over_runs = 0.0;         ///< std over every (target, seed) run
  double error_with_trigger = 0.0;
  double test_accuracy = 0.0;
};

struct BobStudyResult {
  std::vector<BobRunRecord> runs;
  std::vector<BobArmSummary> summary;
  std::string runs_csv;
  std::string summary_csv;
};

/// Runs every arm for every target and seed on the config's dataset and
/// model. With an output_dir, writes per-run metric CSVs, runs.csv,
/// summary.csv and one PPM per target trigger.
BobStudyResult run_bob_study(const ExperimentConfig& cfg, const BobStudyConfig& study);

const BobArmSummary* find_summary(const BobStudyResult& r, BobArm arm, std::optional<double> v_fraction = {});

// --- single-point poisoning study ----------------------------------------------

struct BopStudyConfig {
  int pretrain_epochs = 1;
  std::optional<std::size_t> target_id;     ///< empty: drawn from the trigger_pick stream
  std::optional<std::size_t> target_label;  ///< empty: a random label other than the true one
  std::vector<std::uint64_t> seeds;         ///< empty: the config seed
  BopPointOptions options;
  /// Also deliver the same number of random natural batches from the same start.
  bool control = true;
};

BopStudyConfig parse_bop_section(const nlohmann::json& doc);

struct BopRunRecord {
  std::uint64_t seed = 0;
  std::size_t target_id = 0;
  std::size_t true_label = 0;
  std::size_t target_label = 0;
  BopPointResult attack;
  std::optional<BopPointResult> control;
};

struct BopStudyResult {
  std::vector<BopRunRecord> runs;
  std::string summary_csv;
  std::string trajectory_csv;  ///< seed,arm,batch,predicted,logit_true,logit_target
};

BopStudyResult run_bop_study(const ExperimentConfig& cfg, const BopStudyConfig& study);

// --- theory checks ---------------------------------------------------------------

struct AttackConditionInputs {
  double mu = 1.0, sigma = 1.0, m = 1.0, big_m = 1.0;
};

struct TheoryStudyConfig {
  std::string distribution = "normal";
  std::vector<std::size_t> n{2, 10, 100, 1000};
  std::size_t trials = 100000;
  std::size_t xi_n = 10;
  std::optional<AttackConditionInputs> attack_condition;
  std::optional<BoundInputs> bound;
  BoundMode bound_mode = BoundMode::oned_exact;
  std::size_t bound_trials = 10000;
};

TheoryStudyConfig parse_theory_section(const nlohmann::json& doc);

struct TheoryRow {
  std::string quantity;
  double estimate = 0.0;
  std::optional<double> std_error;
  std::optional<double> reference;
};

/// CSV columns: quantity,estimate,stderr,reference_value.
std::vector<TheoryRow> run_theory_study(const TheoryStudyConfig& study, std::uint64_t seed);
std::string theory_csv(const std::vector<TheoryRow>& rows);

/// Sample standard deviation (n − 1); 0 for fewer than two values.
double std_dev(const std::vector<double>& v);

}  // namespace batchorder
