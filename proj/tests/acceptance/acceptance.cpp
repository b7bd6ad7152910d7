// Acceptance checks. Prints one PASS/FAIL line per criterion, with
// indented info lines, and exits nonzero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "batchorder/brrr.hpp"
#include "batchorder/errors.hpp"
#include "batchorder/experiment.hpp"
#include "batchorder/harness.hpp"
#include "batchorder/theory.hpp"

using namespace batchorder;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> info;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome(const fs::path&)> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double last_fifth_std(const std::vector<double>& v) {
  const std::size_t start = v.size() * 8 / 10;
  const std::span<const double> tail(v.data() + start, v.size() - start);
  double mean = 0.0;
  for (double x : tail) mean += x;
  mean /= static_cast<double>(tail.size());
  double ss = 0.0;
  for (double x : tail) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(tail.size()));
}

// --- linear regression --------------------------------------------------------

constexpr double kLinregEta = 3e-3;
constexpr int kLinregEpochs = 30;
constexpr std::size_t kLinregN = 10000;

Dataset linreg_data(std::uint64_t seed) {
  Rng rng(seed, stream_id(Stream::data));
  return generate_linreg_data(kLinregN, rng);
}

struct LinregRun {
  double final_loss = 0.0;
  std::vector<double> intercept_trace;
  std::vector<double> params;
};

LinregRun linreg_run(const Dataset& data, std::size_t batch_size, std::optional<AttackSpec> spec, std::uint64_t seed) {
  Rng init(seed, stream_id(Stream::init));
  Trainer t(make_model({ModelKind::linreg2, 1, 1}, init), {OptimizerKind::sgd, kLinregEta});
  LinregRun r;
  t.set_observer([&](const StepEvent& ev) { r.intercept_trace.push_back(ev.model.params()[1]); });
  BrrrRunOptions o;
  o.epochs = kLinregEpochs;
  o.batch_size = batch_size;
  o.seed = seed;
  const auto log = run_brrr(t, data, data, spec, o);
  r.final_loss = log.split("train").back().loss;
  r.params.assign(t.model().params().begin(), t.model().params().end());
  return r;
}

AttackSpec whitebox(AttackMode mode, RankScore score) {
  AttackSpec s;
  s.mode = mode;
  s.policy = ReorderPolicy::high_low;
  s.oracle = LossOracle::source_loss;
  s.score = score;
  return s;
}

Outcome c1_divergence(const fs::path&) {
  const auto data = linreg_data(0);
  const auto random = linreg_run(data, 1, std::nullopt, 0);
  const auto sorted = linreg_run(data, 1, whitebox(AttackMode::reshuffle, RankScore::signed_error), 0);
  const double loss_ratio = sorted.final_loss / random.final_loss;
  const double std_ratio = last_fifth_std(sorted.intercept_trace) / last_fifth_std(random.intercept_trace);
  Outcome o;
  o.pass = loss_ratio >= 5.0 && std_ratio >= 10.0;
  o.summary = fmt("loss ratio %.1f (>= 5), intercept std ratio %.1f (>= 10)", loss_ratio, std_ratio);
  o.info.push_back(fmt("random final loss %.4f, sorted final loss %.4f", random.final_loss, sorted.final_loss));
  return o;
}

Outcome c2_dampening(const fs::path&) {
  const auto data = linreg_data(0);
  // closed-form least squares
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.inputs.data()[i], y = data.targets[i];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  const auto r = linreg_run(data, 4, whitebox(AttackMode::reorder, RankScore::loss), 0);
  const double es = std::abs(r.params[0] / slope - 1.0), ei = std::abs(r.params[1] / intercept - 1.0);
  Outcome o;
  o.pass = es <= 0.05 && ei <= 0.05;
  o.summary = fmt("slope off by %.2f%%, intercept off by %.2f%% (<= 5%%)", 100 * es, 100 * ei);
  o.info.push_back(fmt("fit (%.4f, %.4f) vs least squares (%.4f, %.4f)", r.params[0], r.params[1], slope, intercept));
  return o;
}

// --- theory ---------------------------------------------------------------------

Outcome c3_kinf(const fs::path&) {
  const double ref = 1.0 / std::sqrt(std::numbers::pi);
  const double quad = k_infinity(standard_normal());
  const auto mc = estimate_Kn(1000, standard_normal(), 100000, 0);
  const double eq = std::abs(quad / ref - 1.0), em = std::abs(mc.value / ref - 1.0);
  Outcome o;
  o.pass = eq <= 0.01 && em <= 0.01;
  o.summary = fmt("quadrature %.6f (%.4f%%), Monte Carlo K_1000 %.5f (%.3f%%) vs %.5f", quad, 100 * eq, mc.value,
                  100 * em, ref);
  o.info.push_back(fmt("Monte Carlo standard error %.2g", mc.std_error));
  return o;
}

Outcome c4_rademacher(const fs::path&) {
  const auto k2 = estimate_Kn(2, rademacher(), 100000, 0);
  const std::vector<double> support{-1.0, 1.0}, probs{0.5, 0.5};
  const auto exact = xi_order_gap_exact(support, probs, 2);
  const bool kn_ok = std::abs(k2.value - 0.5) <= 3 * k2.std_error;
  const bool xi_ok = exact.sorted.value == 0.5 && exact.random.value == 0.0;
  Outcome o;
  o.pass = kn_ok && xi_ok;
  o.summary = fmt("K_2 %.5f +- %.5f (0.5 within 3 se: %s); exact E[xi sorted] %.17g, E[xi random] %.17g", k2.value,
                  k2.std_error, kn_ok ? "yes" : "no", exact.sorted.value, exact.random.value);
  return o;
}

Outcome c5_unbiased(const fs::path&) {
  Outcome o;
  o.pass = true;
  struct Case {
    ModelSpec spec;
    bool regression;
  };
  for (const Case& c : {Case{{ModelKind::linreg2, 1, 1}, true}, Case{{ModelKind::logreg, 2, 4}, false},
                        Case{{ModelKind::mlp, 2, 4, 32}, false}}) {
    Rng drng(5, stream_id(Stream::data));
    const Dataset data = c.regression ? generate_linreg_data(1003, drng) : generate_blobs(1003, 4, 3.0, drng);
    Rng init(5, stream_id(Stream::init));
    const auto model = make_model(c.spec, init);
    const auto full = model->backward(data.inputs, data.targets).values;
    Rng prng(5, stream_id(Stream::shuffle));
    const BatchPlan plan = random_plan(data, 32, prng);
    if (!satisfies_partition(plan, data.size())) throw Error("random plan is not a partition");
    std::vector<double> acc(full.size(), 0.0);
    for (const auto& ids : plan.batches) {
      const Batch b = data.gather(ids);
      const auto g = model->backward(b.inputs, b.targets).values;
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += static_cast<double>(ids.size()) * g[i];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double m = acc[i] / static_cast<double>(data.size());
      num += (m - full[i]) * (m - full[i]);
      den += full[i] * full[i];
    }
    const double rel = std::sqrt(num / den);
    o.pass = o.pass && rel <= 1e-10;
    o.info.push_back(fmt("%s: relative error %.3g", to_string(c.spec.kind).c_str(), rel));
  }
  o.summary = "size-weighted batch gradients reproduce the full gradient (<= 1e-10)";
  return o;
}

// --- integrity attack -------------------------------------------------------------

ExperimentConfig integrity_config() {
  return parse_config(json::parse(R"({
    "run_id": "integrity",
    "dataset": {"kind": "blobs", "n": 4000, "test_n": 1000, "classes": 4, "separation": 2.0},
    "model": {"kind": "mlp", "hidden": 32},
    "surrogate": {"kind": "logreg"},
    "optimizer": {"kind": "momentum", "learning_rate": 0.1, "momentum": 0.9},
    "surrogate_optimizer": {"kind": "adam", "learning_rate": 0.01},
    "attack": {"mode": "reshuffle", "policy": "high_low", "oracle": "surrogate"},
    "epochs": 30,
    "batch_size": 32,
    "seed": 0
  })"));
}

Outcome c6_integrity(const fs::path& work) {
  auto cfg = integrity_config();
  cfg.output_dir = (work / "integrity").string();
  const json grid = {{"mode", {"reshuffle", "reorder"}},
                     {"policy", {"low_high", "high_low", "oscillation_inward", "oscillation_outward"}}};
  const auto sweep = run_sweep(cfg, grid, 1);
  const auto baseline = run_experiment(baseline_of(cfg)).split("test");
  Outcome o;
  bool floor_ok = true, order_ok = true;
  std::map<std::string, double> reshuffle_delta;
  for (std::size_t i = 0; i < sweep.cells.size(); ++i) {
    const auto& cell = sweep.cells[i];
    const std::string mode = cell.values["mode"], policy = cell.values["policy"];
    const double d = cell.delta.delta_points;
    if (mode == "reshuffle") {
      reshuffle_delta[policy] = d;
      floor_ok = floor_ok && d <= -20.0;
    } else {
      order_ok = order_ok && d > reshuffle_delta.at(policy);
    }
    const auto test = sweep.logs[i].split("test");
    double mean_attacked = 0.0;
    for (std::size_t e = 1; e < test.size(); ++e) mean_attacked += test[e].accuracy / static_cast<double>(test.size() - 1);
    o.info.push_back(fmt("%s/%s: best-loss-epoch delta %+.1f pts (epochs %d vs %d); final-epoch delta %+.1f pts; "
                         "mean attacked-epoch accuracy %.3f",
                         mode.c_str(), policy.c_str(), d, cell.delta.attacked_best_epoch, cell.delta.baseline_best_epoch,
                         100 * (test.back().accuracy - baseline.back().accuracy), mean_attacked));
  }
  o.pass = floor_ok && order_ok;
  o.summary = fmt("every reshuffle policy <= -20 pts: %s; reorder degrades strictly less: %s", floor_ok ? "yes" : "no",
                  order_ok ? "yes" : "no");
  return o;
}

// --- availability attack -------------------------------------------------------------

ExperimentConfig availability_config(std::uint64_t seed) {
  auto c = parse_config(json::parse(R"({
    "run_id": "availability",
    "dataset": {"kind": "blobs", "n": 4000, "test_n": 1000, "classes": 4, "separation": 3.0},
    "model": {"kind": "mlp", "hidden": 32},
    "optimizer": {"kind": "momentum", "learning_rate": 0.3, "momentum": 0.9},
    "attack": {"mode": "replace", "oracle": "source_loss", "epochs_active": [10],
               "replace_strategy": "single_class_batches"},
    "epochs": 60,
    "batch_size": 32
  })"));
  c.seed = seed;
  return c;
}

struct AvailabilityResult {
  double drop_points = 0.0;
  std::optional<int> recovery_epoch;
};

AvailabilityResult availability_run(std::uint64_t seed, const fs::path& out) {
  auto cfg = availability_config(seed);
  cfg.run_id += "-s" + std::to_string(seed);
  cfg.output_dir = out.string();
  const auto attacked = run_experiment(cfg);
  const auto baseline = run_experiment(baseline_of(cfg));
  const auto a = attacked.split("test"), b = baseline.split("test");
  AvailabilityResult r;
  r.drop_points = 100 * (b[10].accuracy - a[10].accuracy);  // epoch 11
  for (std::size_t e = 11; e < a.size(); ++e)
    if (a[e].accuracy >= b[e].accuracy - 0.01) {
      r.recovery_epoch = a[e].epoch;
      break;
    }
  return r;
}

Outcome c7_availability(const fs::path& work) {
  Outcome o;
  const auto r = availability_run(0, work / "availability");
  const int further = r.recovery_epoch ? *r.recovery_epoch - 11 : 60 - 11;
  o.pass = r.drop_points >= 15.0 && further >= 10;
  o.summary = fmt("epoch-11 drop %.1f pts (>= 15); recovery %s (>= 10 further epochs)", r.drop_points,
                  r.recovery_epoch ? fmt("at epoch %d", *r.recovery_epoch).c_str() : "not within 60 epochs");
  for (std::uint64_t s : {1, 2, 3}) {
    const auto x = availability_run(s, work / "availability");
    o.info.push_back(fmt("seed %llu: epoch-11 drop %.1f pts, recovery %s", static_cast<unsigned long long>(s),
                         x.drop_points, x.recovery_epoch ? fmt("at epoch %d", *x.recovery_epoch).c_str() : "none"));
  }
  return o;
}

// --- backdoor ---------------------------------------------------------------------------

Outcome c8_backdoor(const fs::path& work) {
  auto cfg = parse_config(json::parse(R"({
    "run_id": "bob",
    "dataset": {"kind": "digits", "n": 4000, "test_n": 1000},
    "model": {"kind": "cnn_small"},
    "optimizer": {"kind": "momentum", "learning_rate": 0.05, "momentum": 0.9},
    "epochs": 1,
    "batch_size": 32,
    "seed": 0
  })"));
  cfg.dataset.cache_dir = (work / "cache").string();
  cfg.output_dir = (work / "bob").string();
  BobStudyConfig study = parse_bob_section(json::parse(R"({"bob": {
    "trigger": "flag_like", "targets": [0, 1], "pretrain_epochs": 3, "inject_epochs": 2,
    "inject_per_epoch": 20, "pure_batches": 40, "candidate_count": 300, "v_fractions": [0.7]}})"));
  const auto r = run_bob_study(cfg, study);
  const double chance = 1.0 / 10.0;
  const auto* rnd = find_summary(r, BobArm::random_natural);
  const auto* ceil = find_summary(r, BobArm::ceiling);
  const auto* wb = find_summary(r, BobArm::whitebox, 0.7);
  const auto* bb = find_summary(r, BobArm::blackbox, 0.7);
  Outcome o;
  const bool order = rnd->trigger_accuracy < wb->trigger_accuracy && wb->trigger_accuracy < ceil->trigger_accuracy;
  const bool wb_ok = wb->trigger_accuracy >= 3 * chance;
  const bool ceil_ok = ceil->trigger_accuracy >= 0.9;
  const bool bb_ok = bb->trigger_accuracy >= 2 * chance;
  o.pass = order && wb_ok && ceil_ok && bb_ok;
  o.summary = fmt("trigger accuracy random %.3f < whitebox %.3f < ceiling %.3f: %s; whitebox >= 0.3: %s; "
                  "ceiling >= 0.9: %s; blackbox %.3f >= 0.2: %s",
                  rnd->trigger_accuracy, wb->trigger_accuracy, ceil->trigger_accuracy, order ? "yes" : "no",
                  wb_ok ? "yes" : "no", ceil_ok ? "yes" : "no", bb->trigger_accuracy, bb_ok ? "yes" : "no");
  for (const auto& s : r.summary)
    o.info.push_back(fmt("%s: trigger %.3f (std over targets %.3f), error with trigger %.3f, clean test %.3f",
                         to_string(s.arm).c_str(), s.trigger_accuracy, s.std_over_targets, s.error_with_trigger,
                         s.test_accuracy));
  for (const auto& run : r.runs)
    if (run.v_fraction)
      o.info.push_back(fmt("%s target %zu: mean match distance %.3g", to_string(run.arm).c_str(), run.target,
                           run.mean_match_distance));
  return o;
}

// --- single-point poisoning ----------------------------------------------------------------

Outcome c9_single_point(const fs::path& work) {
  auto cfg = parse_config(json::parse(R"({
    "run_id": "bop",
    "dataset": {"kind": "digits", "n": 4000, "test_n": 1000},
    "model": {"kind": "mlp", "hidden": 32},
    "optimizer": {"kind": "sgd", "learning_rate": 0.01},
    "epochs": 1,
    "batch_size": 32,
    "seed": 0
  })"));
  cfg.dataset.cache_dir = (work / "cache").string();
  cfg.output_dir = (work / "bop").string();
  BopStudyConfig study = parse_bop_section(json::parse(R"({"bop": {
    "pretrain_epochs": 1, "v_fraction": 0.7, "candidate_count": 300, "max_batches": 50, "control": true}})"));
  const auto r = run_bop_study(cfg, study);
  const auto& run = r.runs.front();
  const double loss_points = 100 * (run.attack.before.accuracy - run.attack.after.accuracy);
  Outcome o;
  o.pass = run.attack.batches_to_flip && *run.attack.batches_to_flip <= 50 && loss_points <= 10.0;
  o.summary = fmt("example %zu (label %zu -> %zu) %s; test accuracy %.3f -> %.3f (loss %.1f pts, <= 10)",
                  run.target_id, run.true_label, run.target_label,
                  run.attack.batches_to_flip ? fmt("flipped after %zu batches", *run.attack.batches_to_flip).c_str()
                                             : "did not flip within 50 batches",
                  run.attack.before.accuracy, run.attack.after.accuracy, loss_points);

  study.seeds = {1, 2, 3, 4};
  study.control = true;
  cfg.output_dir = (work / "bop_seeds").string();
  std::size_t flips = 0, control_flips = 0;
  double worst = 0.0;
  auto add = [&](const BopRunRecord& x) {
    flips += x.attack.batches_to_flip.has_value();
    control_flips += x.control && x.control->batches_to_flip.has_value();
    worst = std::max(worst, 100 * (x.attack.before.accuracy - x.attack.after.accuracy));
  };
  add(run);
  for (const auto& x : run_bop_study(cfg, study).runs) add(x);
  o.info.push_back(fmt("seeds 0-4: %zu/5 flipped; random-batch control %zu/5; worst accuracy loss %.1f pts", flips,
                       control_flips, worst));
  return o;
}

// --- property suites ----------------------------------------------------------------------

Outcome c10_properties(const fs::path& work) {
  Outcome o;
  std::vector<std::string> failed;

  // policy permutations
  {
    Rng rng(10, 0);
    bool ok = true;
    for (int c = 0; c < 10000 && ok; ++c) {
      const std::size_t n = 1 + rng.index(200);
      const std::size_t unit = 1 + rng.index(16);
      std::vector<std::size_t> ids(n);
      for (auto& v : ids) v = rng.index(1000);
      auto sorted = ids;
      std::sort(sorted.begin(), sorted.end());
      for (auto p : kAllPolicies) {
        auto out = apply_policy(ids, p, unit);
        std::sort(out.begin(), out.end());
        ok = ok && out == sorted;
      }
    }
    if (!ok) failed.push_back("policy permutation");
    o.info.push_back(fmt("policy permutation over 10^4 cases: %s", ok ? "ok" : "FAILED"));
  }

  // momentum with mu = 0 against sgd
  {
    Rng drng(1, stream_id(Stream::data));
    const Dataset data = generate_blobs(512, 4, 3.0, drng);
    auto train = [&](OptimizerConfig oc) {
      Rng init(1, stream_id(Stream::init));
      Trainer t(make_model({ModelKind::mlp, 2, 4, 16}, init), oc);
      ShuffledSource src(data, 16, 1);
      for (int e = 1; e <= 3; ++e) t.train_epoch(src, e);
      return std::vector<double>(t.model().params().begin(), t.model().params().end());
    };
    const auto a = train({OptimizerKind::sgd, 0.05});
    const auto b = train({OptimizerKind::momentum, 0.05, 0.0});
    const bool ok = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
    if (!ok) failed.push_back("momentum mu=0");
    o.info.push_back(fmt("momentum mu=0 vs sgd after 3 epochs: %s", ok ? "bit-identical" : "DIFFERENT"));
  }

  // finite differences across the zoo
  {
    double worst = 0.0;
    Rng rng(3, 3);
    for (const ModelSpec& spec : {ModelSpec{ModelKind::linreg2, 1, 1}, ModelSpec{ModelKind::logreg, 784, 10},
                                  ModelSpec{ModelKind::mlp, 2, 4, 32}, ModelSpec{ModelKind::cnn_small, 784, 10}}) {
      const auto model = make_model(spec, rng);
      Tensor x({3, spec.input_dim});
      for (auto& v : x.data()) v = rng.uniform(0.0, 1.0);
      std::vector<double> y(3);
      for (auto& t : y) t = model->is_classifier() ? static_cast<double>(rng.index(spec.classes)) : rng.uniform(-2, 2);
      const auto g = model->backward(x, y);
      auto probe = model->clone();
      const auto f = [&](const Tensor& theta) {
        probe->set_params(theta.data());
        return probe->forward_loss(x, y).mean;
      };
      const Tensor theta({model->param_count()}, std::vector<double>(model->params().begin(), model->params().end()));
      const auto fd = finite_diff_gradient(f, theta, 1e-6);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        num += (g.values[i] - fd.values[i]) * (g.values[i] - fd.values[i]);
        den += fd.values[i] * fd.values[i];
      }
      const double rel = std::sqrt(num / den);
      worst = std::max(worst, rel);
      o.info.push_back(fmt("finite differences %s (%zu params): relative error %.2g", to_string(spec.kind).c_str(),
                           model->param_count(), rel));
    }
    if (!(worst < 1e-4)) failed.push_back("finite differences");
  }

  // repeated runs
  {
    auto cfg = integrity_config();
    cfg.epochs = 3;
    cfg.dataset.n = 1000;
    cfg.output_dir = (work / "determinism").string();
    const auto a = run_experiment(cfg).to_csv();
    const auto b = run_experiment(cfg).to_csv();
    const bool ok = a == b;
    if (!ok) failed.push_back("determinism");
    o.info.push_back(fmt("repeated 3-epoch attacked run: %s", ok ? "byte-identical CSV" : "DIFFERENT"));
  }

  // sample-size bound
  {
    BoundInputs in;
    in.mu = {0.0};
    in.sigma = 1.0;
    in.epsilon = 0.1;
    in.p_conf = 0.05;
    in.target = {0.0};
    const double n = sample_size_bound(in, BoundMode::oned_exact);
    const auto samples = static_cast<std::size_t>(std::ceil(n));
    const double rate = sample_size_hit_rate(in, samples, 10000, 0);
    if (!(rate >= 0.95)) failed.push_back("sample-size bound");
    o.info.push_back(fmt("sample-size bound %.2f -> %zu draws: hit rate %.4f over 10^4 trials (>= 0.95)", n, samples,
                         rate));
  }

  o.pass = failed.empty();
  o.summary = failed.empty() ? "all five property suites hold" : "failed: " + failed.front();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work_dir = (fs::temp_directory_path() / "batchorder_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "scratch directory for data caches and outputs");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path work(work_dir);
  fs::create_directories(work);

  const std::vector<Criterion> criteria{
      {1, "linear regression diverges under sorted ordering", 10, c1_divergence},
      {2, "batch size dampens the oscillation", 10, c2_dampening},
      {3, "K_inf for the normal distribution", 60, c3_kinf},
      {4, "Rademacher N=2 order statistics", 5, c4_rademacher},
      {5, "partition plans give unbiased gradients", 5, c5_unbiased},
      {6, "integrity attack at desk scale", 300, c6_integrity},
      {7, "availability attack from one epoch", 300, c7_availability},
      {8, "batch-order backdoor arm ordering", 900, c8_backdoor},
      {9, "single-point batch-order poisoning", 300, c9_single_point},
      {10, "property suites", 180, c10_properties},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s criterion %d: %s: %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.summary.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
    for (const auto& line : o.info) std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
