#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "batchorder/dataset.hpp"
#include "batchorder/rng.hpp"

namespace batchorder {

/// An explicit ordering of dataset ids into batches for one epoch.
struct BatchPlan {
  int epoch = 0;
  std::size_t batch_size = 1;
  std::vector<std::vector<std::size_t>> batches;
  /// Set for replacement plans, where ids may repeat or be absent.
  bool multiset_ok = false;

  std::size_t total_items() const noexcept;
  std::vector<std::size_t> flattened() const;
};

/// True when every id in 0..n−1 appears exactly once across all batches. O(n).
bool satisfies_partition(const BatchPlan& plan, std::size_t n);

/// Throws PlanError unless every batch has batch_size ids (the last may be
/// shorter), all ids are < n, and, when multiset_ok is unset, the plan is a
/// partition of 0..n−1.
void validate_plan(const BatchPlan& plan, std::size_t n);

/// Chunks an id sequence into consecutive batches of size B (short last batch kept).
BatchPlan chunk_plan(const std::vector<std::size_t>& order, std::size_t batch_size, int epoch);

/// Uniformly random permutation of 0..n−1 chunked into batches of B.
BatchPlan random_plan(std::size_t n, std::size_t batch_size, Rng& rng, int epoch = 0);
inline BatchPlan random_plan(const Dataset& data, std::size_t batch_size, Rng& rng, int epoch = 0) {
  return random_plan(data.size(), batch_size, rng, epoch);
}

// --- input augmentation -----------------------------------------------------

/// Optional per-fetch input transform, keyed by (epoch, id) so it is
/// reproducible. Images get a random ±1 pixel shift; feature vectors get
/// additive Gaussian jitter.
struct Augmentation {
  enum class Kind { none, jitter, shift };
  Kind kind = Kind::none;
  double strength = 0.0;  ///< jitter standard deviation
  std::uint64_t seed = 0;

  void apply(std::span<double> row, const std::vector<std::size_t>& sample_shape, int epoch, std::size_t id) const;
};

// --- batch sources ----------------------------------------------------------

/// Where the trainer gets its batches. A source is single-consumer; the
/// trainer sees only (inputs, targets) and cannot tell who produced them.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  /// Begins epoch `epoch` (1-based).
  virtual void reset(int epoch) = 0;
  /// Next batch of the current epoch, or nullopt at epoch end.
  virtual std::optional<Batch> next_batch() = 0;
};

/// The benign pipeline: a fresh uniformly random plan every epoch.
class ShuffledSource final : public BatchSource {
 public:
  ShuffledSource(const Dataset& data, std::size_t batch_size, std::uint64_t seed, Augmentation augmentation = {});

  void reset(int epoch) override;
  std::optional<Batch> next_batch() override;

  const BatchPlan& current_plan() const noexcept { return plan_; }

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  Augmentation augmentation_;
  BatchPlan plan_;
  std::size_t cursor_ = 0;
};

/// Serves a fixed list of pre-materialized batches, then ends the epoch.
class ReplaySource final : public BatchSource {
 public:
  explicit ReplaySource(std::vector<Batch> batches) : batches_(std::move(batches)) {}
  void reset(int) override { cursor_ = 0; }
  std::optional<Batch> next_batch() override;

 private:
  std::vector<Batch> batches_;
  std::size_t cursor_ = 0;
};

/// Materializes a plan from a dataset, applying augmentation per fetch.
Batch materialize(const Dataset& data, const std::vector<std::size_t>& ids, const Augmentation& aug, int epoch);

}  // namespace batchorder
