#pragma once

// Batch-order poisoning (BOP) and backdooring (BOB).
//
// Both attacks deliver only natural examples with their natural labels. At
// each injection point the attacker computes the gradient the model would
// take on an adversarial batch (e.g. triggered images relabeled to a target
// class) and searches random natural batches for one whose gradient is
// closest to it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "batchorder/gradient.hpp"
#include "batchorder/metrics.hpp"
#include "batchorder/trainer.hpp"

namespace batchorder {

// --- triggers -----------------------------------------------------------------

/// A fixed pixel mask with overlay values and a target class.
struct TriggerPattern {
  enum class Kind { white_lines, flag_like, custom_mask };
  Kind kind = Kind::white_lines;
  std::size_t rows = 28, cols = 28;
  std::vector<char> mask;       ///< rows·cols, row-major
  std::vector<double> overlay;  ///< rows·cols; read where mask is set
  std::size_t target_class = 0;

  std::size_t coverage() const noexcept;
};

/// Built-in triggers on a rows×cols raster, covering 30% of the pixels.
///
///   white_lines  the top rows set to 1.0, the last one partially
///   flag_like    every fourth row set to 1.0 plus a bottom-right block
TriggerPattern make_trigger(TriggerPattern::Kind kind, std::size_t target_class, std::size_t rows = 28,
                            std::size_t cols = 28);
/// Wraps a user mask. Throws DomainError unless coverage is 30% ± one row.
TriggerPattern make_custom_trigger(std::vector<char> mask, std::vector<double> overlay, std::size_t target_class,
                                   std::size_t rows, std::size_t cols);
/// Throws DomainError if the mask covers other than 30% of pixels ± one row.
void check_trigger_coverage(const TriggerPattern& t);

TriggerPattern::Kind parse_trigger_kind(const std::string& text);
std::string to_string(TriggerPattern::Kind kind);

/// Overlays the trigger. Accepts one image (size rows·cols) or a batch
/// (n, rows·cols). Output is clamped to [0, 1].
Tensor apply_trigger(const Tensor& images, const TriggerPattern& trigger);

/// Binary PPM (P6) of a grayscale image with values in [0, 1].
void write_ppm(const std::filesystem::path& path, std::span<const double> image, std::size_t rows, std::size_t cols);
/// The trigger overlay on black, masked pixels only.
void write_trigger_ppm(const std::filesystem::path& path, const TriggerPattern& trigger);

struct TriggerMetrics {
  double trigger_accuracy = 0.0;    ///< eligible triggered images predicted as the target
  double error_with_trigger = 0.0;  ///< all triggered images predicted wrongly
  std::size_t eligible = 0;
  std::size_t total = 0;
};

/// Evaluates `model` on the triggered test set. Examples whose label is the
/// target count only toward error_with_trigger. Throws DomainError when no
/// example is eligible.
TriggerMetrics trigger_metrics(const Model& model, const Dataset& test, const TriggerPattern& trigger);

// --- gradient matching --------------------------------------------------------

struct PoisonObjective {
  Batch adversarial;  ///< X̂ with the labels the attacker wants
  NormOrder p = NormOrder::l2;
  std::size_t candidate_count = 300;
  double v_fraction = 0.7;  ///< share of each batch chosen by matching
};

/// ∇ of the mean loss over the adversarial batch at the model's current θ.
GradientVector poison_gradient(const Model& model, const PoisonObjective& objective);

/// B−V natural random fill plus V matched slots, V = round(v_fraction·B).
std::size_t matched_slots(double v_fraction, std::size_t batch_size);

struct MatchResult {
  std::vector<std::size_t> ids;  ///< the winning candidate
  double distance = 0.0;
  std::size_t index = 0;                         ///< position among the candidates
  std::vector<std::vector<std::size_t>> candidates;
  std::vector<double> distances;                 ///< one per candidate
};

/// Scores explicit candidate batches against `target` and returns the
/// closest one (ties go to the earliest candidate).
MatchResult match_candidates(const Model& model, const GradientVector& target, const Dataset& data,
                             std::vector<std::vector<std::size_t>> candidates, NormOrder p, bool parallel = true);

/// Samples `objective.candidate_count` random natural batches of `slots`
/// ids (serially, from `rng`) and returns the best match.
MatchResult find_matching_batch(const Model& model, const GradientVector& target, const Dataset& data,
                                std::size_t slots, const PoisonObjective& objective, Rng& rng, bool parallel = true);

/// Joins `natural_fill` (first B−V ids used) with `matched` (exactly V ids)
/// and shuffles the result. Throws DomainError when V > B or counts disagree.
std::vector<std::size_t> compose_bop_batch(std::span<const std::size_t> natural_fill,
                                           std::span<const std::size_t> matched, std::size_t batch_size,
                                           double v_fraction, Rng& rng);

/// One full BOP batch: target gradient, matching, fill and composition.
struct BopBatch {
  std::vector<std::size_t> ids;
  double distance = 0.0;
};
BopBatch build_bop_batch(const Model& model, const Dataset& data, std::size_t batch_size,
                         const PoisonObjective& objective, Rng& rng);

// --- backdoor runs --------------------------------------------------------------

enum class BobArm { random_natural, ceiling, whitebox, blackbox };
std::string to_string(BobArm arm);
BobArm parse_bob_arm(const std::string& text);

/// Benign pretraining, then `inject_epochs` epochs with `inject_per_epoch`
/// extra batches spread evenly through each, then `pure_batches` attack
/// batches with no natural batches between them.
struct BobSchedule {
  int pretrain_epochs = 3;
  int inject_epochs = 2;
  std::size_t inject_per_epoch = 20;
  std::size_t pure_batches = 40;

  bool empty() const noexcept { return inject_epochs * inject_per_epoch == 0 && pure_batches == 0; }
};

struct BobOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t candidate_count = 300;
  double v_fraction = 0.7;
  NormOrder p = NormOrder::l2;
  ModelSpec surrogate_model{ModelKind::logreg, 784, 10};
  OptimizerConfig surrogate_optimizer{OptimizerKind::adam, 0.001};
  std::string run_id = "bob";
};

struct BobResult {
  MetricsLog log;
  std::vector<std::vector<std::size_t>> injected;  ///< ids of every attack-slot batch delivered
  std::vector<double> match_distances;
  TriggerMetrics final_trigger;
  Evaluation final_test;
};

/// Trains `trainer` under the schedule. Arms differ only in what fills the
/// attack slots: random natural batches, explicitly triggered data relabeled
/// to the target (ceiling), or gradient-matched natural batches chosen with
/// the source model (whitebox) or a co-trained surrogate (blackbox).
/// Train, test and trigger rows are logged after every epoch and after the
/// pure phase.
BobResult run_bob(Trainer& trainer, const Dataset& train, const Dataset& test, const TriggerPattern& trigger,
                  const BobSchedule& schedule, BobArm arm, const BobOptions& options);

struct BopPointOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t candidate_count = 300;
  double v_fraction = 0.7;
  NormOrder p = NormOrder::l2;
  std::size_t max_batches = 50;
  bool stop_on_flip = true;
  std::string run_id = "bop";
};

struct BopPointResult {
  MetricsLog log;
  std::optional<std::size_t> batches_to_flip;  ///< 0 when already predicted as the target label
  std::vector<double> predicted;               ///< target's predicted class before each batch and after the last
  std::vector<std::vector<double>> logits;     ///< matching raw outputs
  std::vector<std::vector<std::size_t>> delivered;
  Evaluation before;
  Evaluation after;
};

/// Poisons one training example: BOP batches are built against the gradient
/// of (example, target_label) until it is predicted as target_label.
BopPointResult run_bop_single_point(Trainer& trainer, const Dataset& train, const Dataset& test, std::size_t target_id,
                                    std::size_t target_label, const BopPointOptions& options);

}  // namespace batchorder
