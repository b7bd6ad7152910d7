#pragma once

// Batch reordering, reshuffling and replacement (BRRR).
//
// The attacker sits between the benign shuffler and the trainer. During the
// first epoch it passes batches through untouched while recording every
// example and co-training a surrogate. From then on, at the start of every
// attacked epoch, it scores all recorded items once, ranks them, permutes
// the ranking with a policy, and serves the result instead of the benign
// stream.

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "batchorder/batch_plan.hpp"
#include "batchorder/metrics.hpp"
#include "batchorder/trainer.hpp"

namespace batchorder {

enum class ReorderPolicy { low_high, high_low, oscillation_inward, oscillation_outward };
enum class AttackMode { reorder, reshuffle, replace };
/// Whose loss ranks the data: a co-trained surrogate (blackbox) or the
/// attacked model itself (whitebox).
enum class LossOracle { surrogate, source_loss };
/// Ranking key. `signed_error` (prediction − target) applies to regression only.
enum class RankScore { loss, signed_error };
enum class ReplaceStrategy { single_class_batches };

std::string to_string(ReorderPolicy p);
std::string to_string(AttackMode m);
std::string to_string(LossOracle o);
std::string to_string(RankScore s);
ReorderPolicy parse_policy(const std::string& text);
AttackMode parse_mode(const std::string& text);
LossOracle parse_oracle(const std::string& text);
RankScore parse_rank_score(const std::string& text);

inline constexpr ReorderPolicy kAllPolicies[] = {ReorderPolicy::low_high, ReorderPolicy::high_low,
                                                 ReorderPolicy::oscillation_inward,
                                                 ReorderPolicy::oscillation_outward};

/// Which epochs the attacker intervenes in. Epoch 1 is always benign.
struct EpochSchedule {
  bool all_after_first = true;
  std::set<int> epochs;

  bool active(int epoch) const noexcept { return epoch > 1 && (all_after_first || epochs.contains(epoch)); }
  static EpochSchedule all() { return {}; }
  static EpochSchedule only(std::set<int> e) { return {false, std::move(e)}; }
  static EpochSchedule never() { return {false, {}}; }
};

struct AttackSpec {
  AttackMode mode = AttackMode::reshuffle;
  ReorderPolicy policy = ReorderPolicy::high_low;
  LossOracle oracle = LossOracle::surrogate;
  EpochSchedule schedule;
  /// Re-read (and re-chunk / re-augment) the benign stream every attacked
  /// epoch instead of replaying the data recorded in epoch 1.
  bool resample_each_epoch = false;
  std::optional<ReplaceStrategy> replace_strategy;
  RankScore score = RankScore::loss;

  /// Throws PlanError for inconsistent combinations.
  void validate() const;
};

struct ScoredItem {
  std::size_t id;
  double loss;
};

/// Ids sorted ascending by loss, ties by ascending id. Throws NumericError on NaN.
std::vector<std::size_t> rank_items(std::span<const ScoredItem> items);

/// Permutes an ascending-by-loss sequence. `unit` is the number of items
/// taken per pick from either end by the oscillation policies (1 when
/// ordering whole batches, B when reshuffling datapoints).
///
///   low_high             identity
///   high_low             reversal
///   oscillation_inward   alternately take `unit` from the high end, then from the low end
///   oscillation_outward  reverse each half first, then oscillate as above
std::vector<std::size_t> apply_policy(std::span<const std::size_t> ranked, ReorderPolicy policy, std::size_t unit = 1);

/// Reshuffle: rank every id by loss, apply the policy, chunk into batches of B.
BatchPlan plan_reshuffle(std::span<const ScoredItem> losses, ReorderPolicy policy, std::size_t batch_size,
                         int epoch = 0);

/// Reorder: permute whole batches by their mean loss; contents stay as they are.
/// `per_batch_losses[i]` scores `batches[i]`.
BatchPlan plan_reorder(const std::vector<std::vector<std::size_t>>& batches, std::span<const double> per_batch_losses,
                       ReorderPolicy policy, int epoch = 0);

/// Replacement with label-homogeneous batches, grouped by class: all
/// batches of one class, then the next, in a random class order. Produces
/// ceil(n/B) full batches; ids repeat when a class runs out.
BatchPlan plan_replace_single_class(std::span<const std::size_t> ids, std::span<const double> labels,
                                    std::size_t batch_size, Rng& rng, int epoch = 0);
BatchPlan plan_replace_single_class(const Dataset& data, std::size_t batch_size, Rng& rng, int epoch = 0);

/// Ranking keys of a set of examples under `model`.
std::vector<double> score_examples(const Model& model, const Tensor& inputs, std::span<const double> targets,
                                   RankScore score);

/// The BRRR attacker as a batch source wrapped around the benign pipeline.
class BrrrController final : public BatchSource {
 public:
  /// `source_model` is read for whitebox scoring; `surrogate` is co-trained
  /// on every delivered batch and used for blackbox scoring.
  BrrrController(std::unique_ptr<BatchSource> benign, AttackSpec spec, std::size_t batch_size,
                 const Model* source_model, std::unique_ptr<Trainer> surrogate, std::uint64_t seed);

  void reset(int epoch) override;
  std::optional<Batch> next_batch() override;

  /// Delivered ids of every epoch so far, as plans.
  const std::vector<BatchPlan>& delivered() const noexcept { return delivered_; }
  const Trainer* surrogate() const noexcept { return surrogate_.get(); }
  const AttackSpec& spec() const noexcept { return spec_; }
  /// True while the current epoch is served from an attack plan.
  bool attacking() const noexcept { return attacking_; }
  /// Ranking keys computed at the start of the current attacked epoch, by stored id.
  const std::unordered_map<std::size_t, double>& last_scores() const noexcept { return last_scores_; }

 private:
  struct Store {
    std::vector<std::size_t> ids;                 // insertion order
    std::unordered_map<std::size_t, std::size_t> row_of;
    std::vector<double> inputs;                   // row-major
    std::vector<double> targets;
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> row_shape;

    void clear();
    void record(const Batch& b);
    Batch gather(const std::vector<std::size_t>& ids) const;
  };

  void build_plan(int epoch);
  void deliver(const Batch& b);

  std::unique_ptr<BatchSource> benign_;
  AttackSpec spec_;
  std::size_t batch_size_;
  const Model* source_model_;
  std::unique_ptr<Trainer> surrogate_;
  std::uint64_t seed_;

  Store store_;
  int epoch_ = 0;
  bool attacking_ = false;
  BatchPlan plan_;
  std::size_t cursor_ = 0;
  std::vector<BatchPlan> delivered_;
  std::unordered_map<std::size_t, double> last_scores_;
};

struct BrrrRunOptions {
  int epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Augmentation augmentation;
  std::optional<ModelSpec> surrogate_model;
  OptimizerConfig surrogate_optimizer{OptimizerKind::adam, 0.001};
  /// Record the per-step convergence-bound bias term (costs a full-dataset
  /// gradient per step).
  bool track_bias = false;
  std::string run_id = "run";
};

/// Trains `source` for `options.epochs` epochs behind a BrrrController and
/// logs train/test metrics each epoch. A null spec trains benignly.
MetricsLog run_brrr(Trainer& source, const Dataset& train, const Dataset& test, const std::optional<AttackSpec>& spec,
                    const BrrrRunOptions& options);

}  // namespace batchorder
