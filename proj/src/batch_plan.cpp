#include "batchorder/batch_plan.hpp"

#include <numeric>
#include <string>

#include "batchorder/errors.hpp"

namespace batchorder {

std::size_t BatchPlan::total_items() const noexcept {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

std::vector<std::size_t> BatchPlan::flattened() const {
  std::vector<std::size_t> out;
  out.reserve(total_items());
  for (const auto& b : batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool satisfies_partition(const BatchPlan& plan, std::size_t n) {
  if (plan.total_items() != n) return false;
  std::vector<char> seen(n, 0);
  for (const auto& b : plan.batches)
    for (auto id : b) {
      if (id >= n || seen[id]) return false;
      seen[id] = 1;
    }
  return true;
}

void validate_plan(const BatchPlan& plan, std::size_t n) {
  if (plan.batch_size == 0) throw PlanError("batch size must be positive");
  for (std::size_t i = 0; i < plan.batches.size(); ++i) {
    const auto& b = plan.batches[i];
    const bool last = i + 1 == plan.batches.size();
    if (b.empty() || b.size() > plan.batch_size || (!last && b.size() != plan.batch_size))
      throw PlanError("batch " + std::to_string(i) + " has " + std::to_string(b.size()) + " ids, batch size is " +
                      std::to_string(plan.batch_size));
    for (auto id : b)
      if (id >= n) throw PlanError("id " + std::to_string(id) + " outside dataset of size " + std::to_string(n));
  }
  if (!plan.multiset_ok && !satisfies_partition(plan, n))
    throw PlanError("plan repeats or omits ids but multiset_ok is not set");
}

BatchPlan chunk_plan(const std::vector<std::size_t>& order, std::size_t batch_size, int epoch) {
  if (batch_size == 0) throw PlanError("batch size must be positive");
  BatchPlan plan;
  plan.epoch = epoch;
  plan.batch_size = batch_size;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

BatchPlan random_plan(std::size_t n, std::size_t batch_size, Rng& rng, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return chunk_plan(order, batch_size, epoch);
}

void Augmentation::apply(std::span<double> row, const std::vector<std::size_t>& sample_shape, int epoch,
                         std::size_t id) const {
  if (kind == Kind::none) return;
  Rng rng(seed, stream_id(Stream::augment, (static_cast<std::uint64_t>(epoch) << 32) ^ id));
  if (kind == Kind::jitter) {
    for (double& v : row) v += strength * rng.normal();
    return;
  }
  if (sample_shape.size() != 2) throw DimensionError("shift augmentation needs 2-D samples");
  const std::size_t h = sample_shape[0], w = sample_shape[1];
  const int dy = static_cast<int>(rng.index(3)) - 1;
  const int dx = static_cast<int>(rng.index(3)) - 1;
  std::vector<double> src(row.begin(), row.end());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const long sy = static_cast<long>(y) - dy, sx = static_cast<long>(x) - dx;
      const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
      row[y * w + x] = inside ? src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] : 0.0;
    }
}

Batch materialize(const Dataset& data, const std::vector<std::size_t>& ids, const Augmentation& aug, int epoch) {
  Batch b = data.gather(ids);
  if (aug.kind != Augmentation::Kind::none)
    for (std::size_t i = 0; i < ids.size(); ++i) aug.apply(b.inputs.row(i), data.sample_shape, epoch, ids[i]);
  return b;
}

ShuffledSource::ShuffledSource(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                               Augmentation augmentation)
    : data_(&data), batch_size_(batch_size), seed_(seed), augmentation_(augmentation) {
  if (batch_size == 0) throw PlanError("batch size must be positive");
}

void ShuffledSource::reset(int epoch) {
  Rng rng(seed_, stream_id(Stream::shuffle, static_cast<std::uint64_t>(epoch)));
  plan_ = random_plan(*data_, batch_size_, rng, epoch);
  cursor_ = 0;
}

std::optional<Batch> ShuffledSource::next_batch() {
  if (cursor_ >= plan_.batches.size()) return std::nullopt;
  return materialize(*data_, plan_.batches[cursor_++], augmentation_, plan_.epoch);
}

std::optional<Batch> ReplaySource::next_batch() {
  if (cursor_ >= batches_.size()) return std::nullopt;
  return batches_[cursor_++];
}

}  // namespace batchorder
