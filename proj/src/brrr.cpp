#include "batchorder/brrr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "batchorder/errors.hpp"
#include "batchorder/gradient.hpp"
#include "batchorder/theory.hpp"

namespace batchorder {

std::string to_string(ReorderPolicy p) {
  switch (p) {
    case ReorderPolicy::low_high: return "low_high";
    case ReorderPolicy::high_low: return "high_low";
    case ReorderPolicy::oscillation_inward: return "oscillation_inward";
    case ReorderPolicy::oscillation_outward: return "oscillation_outward";
  }
  return "?";
}

std::string to_string(AttackMode m) {
  switch (m) {
    case AttackMode::reorder: return "reorder";
    case AttackMode::reshuffle: return "reshuffle";
    case AttackMode::replace: return "replace";
  }
  return "?";
}

std::string to_string(LossOracle o) { return o == LossOracle::surrogate ? "surrogate" : "source_loss"; }
std::string to_string(RankScore s) { return s == RankScore::loss ? "loss" : "signed_error"; }

ReorderPolicy parse_policy(const std::string& text) {
  for (auto p : kAllPolicies)
    if (to_string(p) == text) return p;
  throw DomainError("unknown policy '" + text + "'");
}

AttackMode parse_mode(const std::string& text) {
  for (auto m : {AttackMode::reorder, AttackMode::reshuffle, AttackMode::replace})
    if (to_string(m) == text) return m;
  throw DomainError("unknown attack mode '" + text + "'");
}

LossOracle parse_oracle(const std::string& text) {
  if (text == "surrogate" || text == "blackbox") return LossOracle::surrogate;
  if (text == "source_loss" || text == "whitebox") return LossOracle::source_loss;
  throw DomainError("unknown loss oracle '" + text + "'");
}

RankScore parse_rank_score(const std::string& text) {
  if (text == "loss") return RankScore::loss;
  if (text == "signed_error") return RankScore::signed_error;
  throw DomainError("unknown rank score '" + text + "'");
}

void AttackSpec::validate() const {
  if (mode == AttackMode::replace && !replace_strategy) throw PlanError("replace mode requires a replace strategy");
  if (mode != AttackMode::replace && replace_strategy)
    throw PlanError("replace strategy given for a non-replacing mode");
}

// --- ranking and policies -------------------------------------------------

std::vector<std::size_t> rank_items(std::span<const ScoredItem> items) {
  for (const auto& it : items)
    if (std::isnan(it.loss)) throw NumericError("NaN loss for id " + std::to_string(it.id));
  std::vector<ScoredItem> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredItem& a, const ScoredItem& b) {
    return a.loss < b.loss || (a.loss == b.loss && a.id < b.id);
  });
  std::vector<std::size_t> ids(sorted.size());
  std::transform(sorted.begin(), sorted.end(), ids.begin(), [](const ScoredItem& s) { return s.id; });
  return ids;
}

std::vector<std::size_t> apply_policy(std::span<const std::size_t> ranked, ReorderPolicy policy, std::size_t unit) {
  if (ranked.empty()) throw DomainError("cannot apply a policy to an empty sequence");
  if (unit == 0) throw DomainError("policy unit must be positive");
  std::vector<std::size_t> seq(ranked.begin(), ranked.end());
  switch (policy) {
    case ReorderPolicy::low_high: return seq;
    case ReorderPolicy::high_low: std::reverse(seq.begin(), seq.end()); return seq;
    case ReorderPolicy::oscillation_outward: {
      const std::size_t half = seq.size() / 2;
      std::reverse(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(half));
      std::reverse(seq.begin() + static_cast<std::ptrdiff_t>(half), seq.end());
      break;
    }
    case ReorderPolicy::oscillation_inward: break;
  }
  // osc flag loop: first pick from the end, then the start, and so on
  std::vector<std::size_t> out;
  out.reserve(seq.size());
  std::size_t lo = 0, hi = seq.size();
  bool osc = false;
  while (lo < hi) {
    osc = !osc;
    const std::size_t take = std::min(unit, hi - lo);
    if (osc) {
      out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(hi - take),
                 seq.begin() + static_cast<std::ptrdiff_t>(hi));
      hi -= take;
    } else {
      out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(lo),
                 seq.begin() + static_cast<std::ptrdiff_t>(lo + take));
      lo += take;
    }
  }
  return out;
}

BatchPlan plan_reshuffle(std::span<const ScoredItem> losses, ReorderPolicy policy, std::size_t batch_size,
                         int epoch) {
  if (batch_size == 0) throw PlanError("batch size must be positive");
  const auto ranked = rank_items(losses);
  BatchPlan plan = chunk_plan(apply_policy(ranked, policy, batch_size), batch_size, epoch);
  return plan;
}

BatchPlan plan_reorder(const std::vector<std::vector<std::size_t>>& batches, std::span<const double> per_batch_losses,
                       ReorderPolicy policy, int epoch) {
  if (batches.size() != per_batch_losses.size()) throw PlanError("one loss per batch is required");
  std::vector<ScoredItem> items(batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) items[i] = {i, per_batch_losses[i]};
  const auto order = apply_policy(rank_items(items), policy, 1);
  BatchPlan plan;
  plan.epoch = epoch;
  plan.batch_size = 0;
  for (const auto& b : batches) plan.batch_size = std::max(plan.batch_size, b.size());
  for (auto i : order) plan.batches.push_back(batches[i]);
  return plan;
}

BatchPlan plan_replace_single_class(std::span<const std::size_t> ids, std::span<const double> labels,
                                    std::size_t batch_size, Rng& rng, int epoch) {
  if (ids.size() != labels.size()) throw DimensionError("ids and labels differ in length");
  if (ids.empty()) throw DomainError("cannot replace from an empty store");
  if (batch_size == 0) throw PlanError("batch size must be positive");
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double y = labels[i];
    if (!(y >= 0.0) || y != std::floor(y)) throw DomainError("single-class batches need integer class labels");
    const auto c = static_cast<std::size_t>(y);
    if (c >= by_class.size()) by_class.resize(c + 1);
    by_class[c].push_back(ids[i]);
  }
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (!by_class[c].empty()) {
      rng.shuffle(by_class[c]);
      classes.push_back(c);
    }
  rng.shuffle(classes);

  BatchPlan plan;
  plan.epoch = epoch;
  plan.batch_size = batch_size;
  plan.multiset_ok = true;
  const std::size_t batches = (ids.size() + batch_size - 1) / batch_size;
  std::vector<std::size_t> cursor(by_class.size(), 0);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t c = classes[b * classes.size() / batches];
    const auto& pool = by_class[c];
    auto& cur = cursor[c];
    std::vector<std::size_t> batch(batch_size);
    for (auto& id : batch) {
      id = pool[cur % pool.size()];
      ++cur;
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

BatchPlan plan_replace_single_class(const Dataset& data, std::size_t batch_size, Rng& rng, int epoch) {
  if (!data.is_classification()) throw DomainError("single-class batches need a labeled dataset");
  return plan_replace_single_class(data.ids, data.targets, batch_size, rng, epoch);
}

std::vector<double> score_examples(const Model& model, const Tensor& inputs, std::span<const double> targets,
                                   RankScore score) {
  if (score == RankScore::signed_error && model.is_classifier())
    throw DomainError("signed-error ranking needs a regression model");
  constexpr std::size_t chunk = 256;
  const std::size_t n = targets.size();
  const std::size_t d = inputs.row_size();
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<double> out(n);
  std::vector<std::string> errors(chunks);
#pragma omp parallel for schedule(static) if (n * d >= (1u << 16))
  for (std::size_t c = 0; c < chunks; ++c) {
    try {
      const std::size_t start = c * chunk;
      const std::size_t count = std::min(chunk, n - start);
      std::vector<double> xs(inputs.data().begin() + static_cast<std::ptrdiff_t>(start * d),
                             inputs.data().begin() + static_cast<std::ptrdiff_t>((start + count) * d));
      const Tensor x({count, d}, std::move(xs));
      const std::span<const double> y(targets.data() + start, count);
      const auto v = score == RankScore::loss ? model.forward_loss(x, y).per_example : model.signed_errors(x, y);
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw NumericError("scoring failed: " + e);
  return out;
}

// --- controller -------------------------------------------------------------

void BrrrController::Store::clear() {
  ids.clear();
  row_of.clear();
  inputs.clear();
  targets.clear();
  batches.clear();
}

void BrrrController::Store::record(const Batch& b) {
  const std::size_t d = b.inputs.row_size();
  row_shape = {d};
  std::vector<std::size_t> batch_ids;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const std::size_t id = b.ids[i];
    batch_ids.push_back(id);
    if (row_of.contains(id)) continue;
    row_of.emplace(id, ids.size());
    ids.push_back(id);
    const auto row = b.inputs.row(i);
    inputs.insert(inputs.end(), row.begin(), row.end());
    targets.push_back(b.targets[i]);
  }
  batches.push_back(std::move(batch_ids));
}

Batch BrrrController::Store::gather(const std::vector<std::size_t>& wanted) const {
  const std::size_t d = row_shape.empty() ? 0 : row_shape[0];
  Batch b;
  b.inputs = Tensor({wanted.size(), d});
  b.targets.resize(wanted.size());
  b.ids = wanted;
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    const auto it = row_of.find(wanted[i]);
    if (it == row_of.end()) throw PlanError("plan references unrecorded id " + std::to_string(wanted[i]));
    const std::size_t r = it->second;
    std::copy(inputs.begin() + static_cast<std::ptrdiff_t>(r * d), inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * d),
              b.inputs.row(i).begin());
    b.targets[i] = targets[r];
  }
  return b;
}

BrrrController::BrrrController(std::unique_ptr<BatchSource> benign, AttackSpec spec, std::size_t batch_size,
                               const Model* source_model, std::unique_ptr<Trainer> surrogate, std::uint64_t seed)
    : benign_(std::move(benign)),
      spec_(std::move(spec)),
      batch_size_(batch_size),
      source_model_(source_model),
      surrogate_(std::move(surrogate)),
      seed_(seed) {
  spec_.validate();
  if (!benign_) throw PlanError("controller needs a benign source");
  if (batch_size_ == 0) throw PlanError("batch size must be positive");
  if (spec_.oracle == LossOracle::source_loss && !source_model_)
    throw PlanError("whitebox oracle needs access to the source model");
  if (spec_.oracle == LossOracle::surrogate && !surrogate_ && spec_.mode != AttackMode::replace)
    throw PlanError("blackbox oracle needs a surrogate");
}

void BrrrController::reset(int epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  benign_->reset(epoch);
  attacking_ = spec_.schedule.active(epoch) && !store_.ids.empty();
  delivered_.push_back(BatchPlan{epoch, batch_size_, {}, false});
  if (epoch == 1) store_.clear();
  if (!attacking_) return;
  if (spec_.resample_each_epoch) {
    store_.clear();
    while (auto b = benign_->next_batch()) store_.record(*b);
  }
  build_plan(epoch);
}

void BrrrController::build_plan(int epoch) {
  last_scores_.clear();
  if (spec_.mode == AttackMode::replace) {
    Rng rng(seed_, stream_id(Stream::attack, static_cast<std::uint64_t>(epoch)));
    plan_ = plan_replace_single_class(store_.ids, store_.targets, batch_size_, rng, epoch);
    return;
  }
  const Model& oracle = spec_.oracle == LossOracle::source_loss ? *source_model_ : surrogate_->model();
  const std::size_t n = store_.ids.size();
  const Tensor x({n, store_.row_shape[0]}, store_.inputs);
  const auto scores = score_examples(oracle, x, store_.targets, spec_.score);
  for (std::size_t i = 0; i < n; ++i) last_scores_.emplace(store_.ids[i], scores[i]);

  if (spec_.mode == AttackMode::reshuffle) {
    std::vector<ScoredItem> items(n);
    for (std::size_t i = 0; i < n; ++i) items[i] = {store_.ids[i], scores[i]};
    plan_ = plan_reshuffle(items, spec_.policy, batch_size_, epoch);
  } else {
    std::vector<double> means;
    for (const auto& batch : store_.batches) {
      double s = 0.0;
      for (auto id : batch) s += last_scores_.at(id);
      means.push_back(s / static_cast<double>(batch.size()));
    }
    plan_ = plan_reorder(store_.batches, means, spec_.policy, epoch);
  }
  plan_.batch_size = batch_size_;
}

void BrrrController::deliver(const Batch& b) {
  delivered_.back().batches.push_back(b.ids);
  if (spec_.mode == AttackMode::replace) delivered_.back().multiset_ok = true;
  if (surrogate_ && spec_.oracle == LossOracle::surrogate) surrogate_->train_batch(b, epoch_);
}

std::optional<Batch> BrrrController::next_batch() {
  if (!attacking_) {
    auto b = benign_->next_batch();
    if (!b) return std::nullopt;
    if (epoch_ == 1) store_.record(*b);
    deliver(*b);
    return b;
  }
  if (cursor_ >= plan_.batches.size()) return std::nullopt;
  // pretend reading the benign batch, then throw it away
  if (!spec_.resample_each_epoch) (void)benign_->next_batch();
  Batch b = store_.gather(plan_.batches[cursor_++]);
  deliver(b);
  return b;
}

// --- end-to-end run -----------------------------------------------------------

MetricsLog run_brrr(Trainer& source, const Dataset& train, const Dataset& test, const std::optional<AttackSpec>& spec,
                    const BrrrRunOptions& options) {
  if (options.epochs < 1) throw DomainError("at least one epoch is required");
  auto benign = std::make_unique<ShuffledSource>(train, options.batch_size, options.seed, options.augmentation);
  std::unique_ptr<BatchSource> feed;
  BrrrController* controller = nullptr;
  if (spec) {
    std::unique_ptr<Trainer> surrogate;
    if (spec->oracle == LossOracle::surrogate) {
      ModelSpec ms = options.surrogate_model.value_or(source.model().spec());
      Rng init(options.seed, stream_id(Stream::surrogate_init));
      surrogate = std::make_unique<Trainer>(make_model(ms, init), options.surrogate_optimizer);
    }
    auto c = std::make_unique<BrrrController>(std::move(benign), *spec, options.batch_size, &source.model(),
                                              std::move(surrogate), options.seed);
    controller = c.get();
    feed = std::move(c);
  } else {
    feed = std::move(benign);
  }

  std::optional<BiasTracer> tracer;
  if (options.track_bias) {
    tracer.emplace(train, source.model());
    source.set_observer(tracer->observer());
  }

  const std::string policy = spec ? to_string(spec->policy) : "none";
  const std::string mode = spec ? to_string(spec->mode) : "none";
  MetricsLog log;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    const std::size_t first_step = tracer ? tracer->trace().size() : 0;
    source.train_epoch(*feed, epoch);
    std::optional<double> bias;
    if (tracer && tracer->trace().size() > first_step) {
      const auto& t = tracer->trace();
      bias = std::accumulate(t.begin() + static_cast<std::ptrdiff_t>(first_step), t.end(), 0.0) /
             static_cast<double>(t.size() - first_step);
    }
    for (const auto* split : {"train", "test"}) {
      const Evaluation e = source.evaluate(std::string(split) == "train" ? train : test);
      MetricsRow row;
      row.run_id = options.run_id;
      row.epoch = epoch;
      row.split = split;
      row.loss = e.loss;
      row.accuracy = e.accuracy;
      row.epoch_mean_bias_term = bias;
      const bool attacked = controller && controller->spec().schedule.active(epoch);
      row.policy = attacked ? policy : "none";
      row.mode = attacked ? mode : "none";
      row.seed = options.seed;
      log.add(std::move(row));
    }
  }
  if (options.track_bias) source.set_observer({});
  return log;
}

}  // namespace batchorder
