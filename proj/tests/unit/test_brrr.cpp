#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>

#include "batchorder/brrr.hpp"
#include "batchorder/errors.hpp"

using namespace batchorder;

namespace {

// Straightforward deque version of the oscillation policies.
std::vector<std::size_t> oscillate_oracle(std::vector<std::size_t> seq, bool outward, std::size_t unit) {
  if (outward) {
    const std::size_t half = seq.size() / 2;
    std::vector<std::size_t> lo(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<std::size_t> hi(seq.begin() + static_cast<std::ptrdiff_t>(half), seq.end());
    std::reverse(lo.begin(), lo.end());
    std::reverse(hi.begin(), hi.end());
    seq = lo;
    seq.insert(seq.end(), hi.begin(), hi.end());
  }
  std::deque<std::size_t> d(seq.begin(), seq.end());
  std::vector<std::size_t> out;
  bool from_back = true;
  while (!d.empty()) {
    std::vector<std::size_t> chunk;
    for (std::size_t i = 0; i < unit && !d.empty(); ++i) {
      if (from_back) {
        chunk.insert(chunk.begin(), d.back());
        d.pop_back();
      } else {
        chunk.push_back(d.front());
        d.pop_front();
      }
    }
    out.insert(out.end(), chunk.begin(), chunk.end());
    from_back = !from_back;
  }
  return out;
}

Dataset blobs(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed, stream_id(Stream::data));
  return generate_blobs(n, k, 3.0, rng);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double m = (n - 1) / 2;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - m) * (rb[i] - m);
    da += (ra[i] - m) * (ra[i] - m);
    db += (rb[i] - m) * (rb[i] - m);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("policies on a four-item ranking") {
  const std::vector<std::size_t> r{1, 2, 3, 4};
  CHECK(apply_policy(r, ReorderPolicy::low_high) == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK(apply_policy(r, ReorderPolicy::high_low) == std::vector<std::size_t>{4, 3, 2, 1});
  CHECK(apply_policy(r, ReorderPolicy::oscillation_inward) == std::vector<std::size_t>{4, 1, 3, 2});
  CHECK(apply_policy(r, ReorderPolicy::oscillation_outward) == std::vector<std::size_t>{3, 2, 4, 1});
}

TEST_CASE("oscillation with a batch-sized unit") {
  std::vector<std::size_t> r(10);
  std::iota(r.begin(), r.end(), 0);
  CHECK(apply_policy(r, ReorderPolicy::oscillation_inward, 3) ==
        std::vector<std::size_t>{7, 8, 9, 0, 1, 2, 4, 5, 6, 3});
  for (std::size_t unit : {1, 2, 3, 4, 7, 10, 20}) {
    CHECK(apply_policy(r, ReorderPolicy::oscillation_inward, unit) == oscillate_oracle(r, false, unit));
    CHECK(apply_policy(r, ReorderPolicy::oscillation_outward, unit) == oscillate_oracle(r, true, unit));
  }
}

TEST_CASE("every policy returns a permutation of its input") {
  Rng rng(11, 0);
  for (int c = 0; c < 10000; ++c) {
    const std::size_t n = 1 + rng.index(64);
    const std::size_t unit = 1 + rng.index(8);
    std::vector<std::size_t> ids(n);
    for (auto& v : ids) v = rng.index(1000);
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (auto p : kAllPolicies) {
      auto out = apply_policy(ids, p, unit);
      std::sort(out.begin(), out.end());
      REQUIRE(out == sorted);
    }
  }
}

TEST_CASE("policy argument errors") {
  const std::vector<std::size_t> empty;
  CHECK_THROWS_AS(apply_policy(empty, ReorderPolicy::high_low), DomainError);
  const std::vector<std::size_t> one{5};
  CHECK_THROWS_AS(apply_policy(one, ReorderPolicy::high_low, 0), DomainError);
  CHECK(apply_policy(one, ReorderPolicy::oscillation_outward) == one);
}

TEST_CASE("ranking sorts by loss and breaks ties by id") {
  const std::vector<ScoredItem> items{{7, 0.5}, {3, 0.1}, {9, 0.5}, {1, 0.5}, {4, -2.0}};
  CHECK(rank_items(items) == std::vector<std::size_t>{4, 3, 1, 7, 9});
  const std::vector<ScoredItem> bad{{0, 1.0}, {1, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(rank_items(bad), NumericError);
}

TEST_CASE("reshuffle chunks the permuted ranking") {
  std::vector<ScoredItem> items;
  for (std::size_t i = 0; i < 10; ++i) items.push_back({i, static_cast<double>((i * 7) % 10)});
  const auto plan = plan_reshuffle(items, ReorderPolicy::high_low, 4, 2);
  CHECK(plan.epoch == 2);
  REQUIRE(plan.batches.size() == 3);
  CHECK(plan.batches[2].size() == 2);
  CHECK(satisfies_partition(plan, 10));
  // loss of id i is (7i mod 10); highest first
  CHECK(plan.batches[0] == std::vector<std::size_t>{7, 4, 1, 8});
  CHECK_THROWS_AS(plan_reshuffle(items, ReorderPolicy::high_low, 0), PlanError);
}

TEST_CASE("reorder moves whole batches and leaves contents alone") {
  const std::vector<std::vector<std::size_t>> batches{{0, 1}, {2, 3}, {4, 5}, {6}};
  const std::vector<double> means{0.3, 0.9, 0.1, 0.5};
  const auto plan = plan_reorder(batches, means, ReorderPolicy::high_low, 3);
  REQUIRE(plan.batches.size() == 4);
  CHECK(plan.batches[0] == std::vector<std::size_t>{2, 3});
  CHECK(plan.batches[1] == std::vector<std::size_t>{6});
  CHECK(plan.batches[2] == std::vector<std::size_t>{0, 1});
  CHECK(plan.batches[3] == std::vector<std::size_t>{4, 5});
  CHECK(satisfies_partition(plan, 7));
  const std::vector<double> short_means{0.1};
  CHECK_THROWS_AS(plan_reorder(batches, short_means, ReorderPolicy::low_high), PlanError);
}

TEST_CASE("single-class replacement") {
  const auto data = blobs(40, 2, 3);
  Rng rng(5, stream_id(Stream::attack, 2));
  const auto plan = plan_replace_single_class(data, 4, rng, 2);
  CHECK(plan.multiset_ok);
  CHECK(plan.batches.size() == 10);
  std::vector<std::size_t> batch_class;
  for (const auto& b : plan.batches) {
    REQUIRE(b.size() == 4);
    const double y = data.targets[data.position_of(b[0])];
    for (auto id : b) CHECK(data.targets[data.position_of(id)] == y);
    batch_class.push_back(static_cast<std::size_t>(y));
  }
  // blocked: the class changes exactly once across the epoch
  std::size_t switches = 0;
  for (std::size_t i = 1; i < batch_class.size(); ++i) switches += batch_class[i] != batch_class[i - 1];
  CHECK(switches == 1);
  CHECK_NOTHROW(validate_plan(plan, data.size()));

  const auto reg = [] {
    Rng r(1, 1);
    return generate_linreg_data(8, r);
  }();
  CHECK_THROWS_AS(plan_replace_single_class(reg, 4, rng), DomainError);
}

TEST_CASE("attack spec validation") {
  AttackSpec s;
  s.mode = AttackMode::replace;
  CHECK_THROWS_AS(s.validate(), PlanError);
  s.replace_strategy = ReplaceStrategy::single_class_batches;
  CHECK_NOTHROW(s.validate());
  CHECK(EpochSchedule::only({10}).active(10));
  CHECK_FALSE(EpochSchedule::only({10}).active(11));
  CHECK_FALSE(EpochSchedule::all().active(1));
  CHECK(EpochSchedule::all().active(2));
  CHECK_FALSE(EpochSchedule::only({1}).active(1));
}

TEST_CASE("names round trip") {
  for (auto p : kAllPolicies) CHECK(parse_policy(to_string(p)) == p);
  for (auto m : {AttackMode::reorder, AttackMode::reshuffle, AttackMode::replace}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS(parse_policy("sideways"));
}

TEST_CASE("controller passes epoch 1 through and attacks only scheduled epochs") {
  const auto data = blobs(64, 2, 1);
  Rng init(1, stream_id(Stream::init));
  auto model = make_model({ModelKind::logreg, 2, 2}, init);
  Trainer trainer(std::move(model), {OptimizerKind::sgd, 0.1});

  AttackSpec spec;
  spec.mode = AttackMode::reshuffle;
  spec.oracle = LossOracle::source_loss;
  spec.schedule = EpochSchedule::only({3});
  auto benign = std::make_unique<ShuffledSource>(data, 8, 1);
  const auto* benign_ptr = benign.get();
  BrrrController ctl(std::move(benign), spec, 8, &trainer.model(), nullptr, 1);

  for (int e = 1; e <= 4; ++e) {
    trainer.train_epoch(ctl, e);
    const auto& got = ctl.delivered().back();
    if (e == 3) {
      CHECK(ctl.attacking());
      CHECK(ctl.last_scores().size() == 64);
      // served in descending score order
      const auto flat = got.flattened();
      for (std::size_t i = 1; i < flat.size(); ++i)
        CHECK(ctl.last_scores().at(flat[i - 1]) >= ctl.last_scores().at(flat[i]));
    } else {
      CHECK_FALSE(ctl.attacking());
      CHECK(got.batches == benign_ptr->current_plan().batches);
    }
    CHECK(satisfies_partition(got, 64));
  }
}

TEST_CASE("controller reorder keeps the epoch-1 batches") {
  const auto data = blobs(48, 3, 2);
  Rng init(2, stream_id(Stream::init));
  Trainer trainer(make_model({ModelKind::logreg, 2, 3}, init), {OptimizerKind::sgd, 0.05});
  AttackSpec spec;
  spec.mode = AttackMode::reorder;
  spec.oracle = LossOracle::source_loss;
  BrrrController ctl(std::make_unique<ShuffledSource>(data, 6, 2), spec, 6, &trainer.model(), nullptr, 2);
  trainer.train_epoch(ctl, 1);
  auto first = ctl.delivered()[0].batches;
  trainer.train_epoch(ctl, 2);
  auto second = ctl.delivered()[1].batches;
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  CHECK(first == second);
}

TEST_CASE("controller construction errors") {
  const auto data = blobs(16, 2, 0);
  AttackSpec spec;
  spec.oracle = LossOracle::source_loss;
  CHECK_THROWS_AS(BrrrController(std::make_unique<ShuffledSource>(data, 4, 0), spec, 4, nullptr, nullptr, 0), PlanError);
  spec.oracle = LossOracle::surrogate;
  CHECK_THROWS_AS(BrrrController(std::make_unique<ShuffledSource>(data, 4, 0), spec, 4, nullptr, nullptr, 0), PlanError);
  CHECK_THROWS_AS(BrrrController(nullptr, AttackSpec{.oracle = LossOracle::source_loss}, 4, nullptr, nullptr, 0),
                  PlanError);
}

TEST_CASE("surrogate ranking agrees with the source ranking") {
  const auto data = blobs(400, 4, 7);
  Rng init(7, stream_id(Stream::init));
  Trainer trainer(make_model({ModelKind::mlp, 2, 4, 16}, init), {OptimizerKind::sgd, 0.1});
  Rng sinit(7, stream_id(Stream::surrogate_init));
  auto surrogate = std::make_unique<Trainer>(make_model({ModelKind::logreg, 2, 4}, sinit),
                                             OptimizerConfig{OptimizerKind::adam, 0.01});
  AttackSpec spec;
  spec.mode = AttackMode::reshuffle;
  BrrrController ctl(std::make_unique<ShuffledSource>(data, 16, 7), spec, 16, &trainer.model(), std::move(surrogate), 7);
  trainer.train_epoch(ctl, 1);
  trainer.train_epoch(ctl, 2);
  const auto src = score_examples(trainer.model(), data.inputs, data.targets, RankScore::loss);
  const auto sur = score_examples(ctl.surrogate()->model(), data.inputs, data.targets, RankScore::loss);
  CHECK(spearman(src, sur) > 0.3);
}

TEST_CASE("signed error scores need a regression model") {
  const auto data = blobs(8, 2, 0);
  Rng init(0, 2);
  const auto logreg = make_model({ModelKind::logreg, 2, 2}, init);
  CHECK_THROWS_AS(score_examples(*logreg, data.inputs, data.targets, RankScore::signed_error), DomainError);

  const auto lin = make_model({ModelKind::linreg2, 1, 1}, init);
  std::vector<double> p{2.0, 1.0};
  lin->set_params(p);
  const Tensor x({2, 1}, {1.0, 3.0});
  const std::vector<double> y{4.0, 5.0};
  const auto s = score_examples(*lin, x, y, RankScore::signed_error);
  CHECK(s[0] == doctest::Approx(-1.0));
  CHECK(s[1] == doctest::Approx(2.0));
}

TEST_CASE("benign and attacked runs differ only after epoch 1") {
  const auto data = blobs(200, 2, 4);
  const auto [train, test] = split_tail(data, 50);
  BrrrRunOptions opt;
  opt.epochs = 3;
  opt.batch_size = 10;
  opt.seed = 4;
  auto run = [&](std::optional<AttackSpec> s) {
    Rng init(4, stream_id(Stream::init));
    Trainer t(make_model({ModelKind::logreg, 2, 2}, init), {OptimizerKind::sgd, 0.1});
    return run_brrr(t, train, test, s, opt);
  };
  AttackSpec spec;
  spec.oracle = LossOracle::source_loss;
  const auto a = run(std::nullopt);
  const auto b = run(spec);
  REQUIRE(a.rows.size() == 6);
  CHECK(a.rows[0].loss == b.rows[0].loss);
  CHECK(a.rows[1].accuracy == b.rows[1].accuracy);
  CHECK(b.rows[2].policy == "high_low");
  CHECK(b.rows[0].policy == "none");
  CHECK(a.rows[4].loss != b.rows[4].loss);
}
