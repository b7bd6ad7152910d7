#include "batchorder/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "batchorder/errors.hpp"
#include "config_reader.hpp"

namespace batchorder {

using nlohmann::json;
using detail::Reader;

double std_dev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

ExperimentConfig with_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.seed = seed;
  return c;
}

std::vector<std::uint64_t> seeds_or(const std::vector<std::uint64_t>& seeds, std::uint64_t fallback) {
  return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
}

ModelSpec surrogate_spec(const ExperimentConfig& cfg, const Dataset& train) {
  if (cfg.surrogate) return *cfg.surrogate;
  return ModelSpec{ModelKind::logreg, train.feature_dim(), train.num_classes};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

// --- backdoor study -----------------------------------------------------------

BobStudyConfig parse_bob_section(const json& doc) {
  BobStudyConfig s;
  if (!doc.contains("bob")) return s;
  const json& j = doc.at("bob");
  Reader r;
  if (!r.object(j, "bob")) throw ConfigError(r.errors);
  r.unknown_keys(j, "bob.", {"arms", "trigger", "targets", "seeds", "pretrain_epochs", "inject_epochs",
                             "inject_per_epoch", "pure_batches", "candidate_count", "v_fractions", "p"});
  if (j.contains("arms")) {
    std::vector<std::string> names;
    r.get(j, "bob.", "arms", names);
    s.arms.clear();
    for (const auto& n : names) {
      try {
        s.arms.push_back(parse_bob_arm(n));
      } catch (const Error& e) {
        r.errors.push_back(std::string("bob.arms: ") + e.what());
      }
    }
    r.check(!s.arms.empty(), "bob.arms", "must list at least one arm");
  }
  r.parse(j, "bob.", "trigger", s.trigger, parse_trigger_kind);
  r.check(s.trigger != TriggerPattern::Kind::custom_mask, "bob.trigger", "custom masks are not configurable here");
  r.get(j, "bob.", "targets", s.targets);
  r.check(!s.targets.empty(), "bob.targets", "must list at least one class");
  r.get(j, "bob.", "seeds", s.seeds);
  r.get(j, "bob.", "pretrain_epochs", s.schedule.pretrain_epochs);
  r.get(j, "bob.", "inject_epochs", s.schedule.inject_epochs);
  r.get(j, "bob.", "inject_per_epoch", s.schedule.inject_per_epoch);
  r.get(j, "bob.", "pure_batches", s.schedule.pure_batches);
  r.check(s.schedule.pretrain_epochs >= 0 && s.schedule.inject_epochs >= 0, "bob.pretrain_epochs",
          "epoch counts must be non-negative");
  r.check(!s.schedule.empty(), "bob", "schedule injects nothing");
  r.get(j, "bob.", "candidate_count", s.candidate_count);
  r.check(s.candidate_count >= 1, "bob.candidate_count", "must be at least 1");
  r.get(j, "bob.", "v_fractions", s.v_fractions);
  r.check(!s.v_fractions.empty(), "bob.v_fractions", "must list at least one value");
  for (double v : s.v_fractions) r.check(v >= 0.0 && v <= 1.0, "bob.v_fractions", "values must lie in [0, 1]");
  if (j.contains("p")) {
    const json& p = j.at("p");
    try {
      s.p = parse_norm_order(p.is_string() ? p.get<std::string>() : std::to_string(p.get<int>()));
    } catch (const std::exception& e) {
      r.errors.push_back(std::string("bob.p: ") + e.what());
    }
  }
  if (!r.errors.empty()) throw ConfigError(r.errors);
  return s;
}

BobStudyResult run_bob_study(const ExperimentConfig& cfg, const BobStudyConfig& study) {
  if (cfg.model.kind == ModelKind::linreg2) throw ConfigError({"model.kind: backdoors need a classifier"});
  const bool write = !cfg.output_dir.empty();
  const std::filesystem::path dir(cfg.output_dir);
  if (write) std::filesystem::create_directories(dir);

  BobStudyResult result;
  for (const auto seed : seeds_or(study.seeds, cfg.seed)) {
    const ExperimentConfig c = with_seed(cfg, seed);
    const auto [train, test] = make_data(c);
    if (train.sample_shape.size() != 2) throw ConfigError({"dataset.kind: backdoors need image data"});
    for (const auto target : study.targets) {
      if (target >= train.num_classes) throw ConfigError({"bob.targets: class out of range"});
      const TriggerPattern trigger =
          make_trigger(study.trigger, target, train.sample_shape[0], train.sample_shape[1]);
      if (write) write_trigger_ppm(dir / ("trigger_" + to_string(study.trigger) + "_" + std::to_string(target) + ".ppm"),
                                   trigger);
      for (const auto arm : study.arms) {
        const bool matched = arm == BobArm::whitebox || arm == BobArm::blackbox;
        std::vector<std::optional<double>> fractions;
        if (matched)
          for (double v : study.v_fractions) fractions.emplace_back(v);
        else
          fractions.emplace_back();
        for (const auto& vf : fractions) {
          BobOptions o;
          o.batch_size = c.batch_size;
          o.seed = seed;
          o.candidate_count = study.candidate_count;
          o.v_fraction = vf.value_or(0.7);
          o.p = study.p;
          o.surrogate_model = surrogate_spec(c, train);
          o.surrogate_optimizer = c.surrogate_optimizer;
          char name[160];
          std::snprintf(name, sizeof name, "%s-bob-%s-t%zu-s%llu%s", c.run_id.c_str(), to_string(arm).c_str(), target,
                        static_cast<unsigned long long>(seed),
                        vf ? ("-v" + std::to_string(static_cast<int>(std::lround(*vf * 100)))).c_str() : "");
          o.run_id = name;
          Trainer trainer(make_source_model(c), c.optimizer);
          BobResult r = run_bob(trainer, train, test, trigger, study.schedule, arm, o);
          if (write) r.log.write_csv(dir / (o.run_id + ".csv"));
          BobRunRecord rec{arm, vf, target, seed, r.final_trigger, r.final_test, mean_of(r.match_distances)};
          result.runs.push_back(rec);
        }
      }
    }
  }

  // Summaries in first-seen (arm, v_fraction) order.
  std::vector<std::pair<BobArm, std::optional<double>>> keys;
  for (const auto& r : result.runs) {
    const std::pair<BobArm, std::optional<double>> k{r.arm, r.v_fraction};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [arm, vf] : keys) {
    BobArmSummary s{arm, vf};
    std::vector<double> acc, err, test_acc;
    std::map<std::size_t, std::vector<double>> by_target;
    for (const auto& r : result.runs) {
      if (r.arm != arm || r.v_fraction != vf) continue;
      acc.push_back(r.trigger.trigger_accuracy);
      err.push_back(r.trigger.error_with_trigger);
      test_acc.push_back(r.test.accuracy);
      by_target[r.target].push_back(r.trigger.trigger_accuracy);
    }
    std::vector<double> target_means;
    for (const auto& [_, v] : by_target) target_means.push_back(mean_of(v));
    s.runs = acc.size();
    s.trigger_accuracy = mean_of(acc);
    s.std_over_targets = std_dev(target_means);
    s.std_over_runs = std_dev(acc);
    s.error_with_trigger = mean_of(err);
    s.test_accuracy = mean_of(test_acc);
    result.summary.push_back(s);
  }

  std::ostringstream runs;
  runs << "arm,v_fraction,target,seed,trigger_accuracy,error_with_trigger,test_accuracy,mean_match_distance\n";
  for (const auto& r : result.runs)
    runs << to_string(r.arm) << ',' << opt_field(r.v_fraction) << ',' << r.target << ',' << r.seed << ','
         << format_double(r.trigger.trigger_accuracy) << ',' << format_double(r.trigger.error_with_trigger) << ','
         << format_double(r.test.accuracy) << ',' << format_double(r.mean_match_distance) << '\n';
  result.runs_csv = runs.str();
  std::ostringstream sum;
  sum << "arm,v_fraction,runs,trigger_accuracy,std_over_targets,std_over_runs,error_with_trigger,test_accuracy\n";
  for (const auto& s : result.summary)
    sum << to_string(s.arm) << ',' << opt_field(s.v_fraction) << ',' << s.runs << ','
        << format_double(s.trigger_accuracy) << ',' << format_double(s.std_over_targets) << ','
        << format_double(s.std_over_runs) << ',' << format_double(s.error_with_trigger) << ','
        << format_double(s.test_accuracy) << '\n';
  result.summary_csv = sum.str();
  if (write) {
    write_text(dir / "runs.csv", result.runs_csv);
    write_text(dir / "summary.csv", result.summary_csv);
  }
  return result;
}

const BobArmSummary* find_summary(const BobStudyResult& r, BobArm arm, std::optional<double> v_fraction) {
  for (const auto& s : r.summary)
    if (s.arm == arm && (!v_fraction || (s.v_fraction && std::abs(*s.v_fraction - *v_fraction) < 1e-12)))
      return &s;
  return nullptr;
}

// --- single-point poisoning study ----------------------------------------------

BopStudyConfig parse_bop_section(const json& doc) {
  BopStudyConfig s;
  if (!doc.contains("bop")) return s;
  const json& j = doc.at("bop");
  Reader r;
  if (!r.object(j, "bop")) throw ConfigError(r.errors);
  r.unknown_keys(j, "bop.", {"pretrain_epochs", "target_id", "target_label", "seeds", "candidate_count",
                             "v_fraction", "p", "max_batches", "stop_on_flip", "control"});
  r.get(j, "bop.", "pretrain_epochs", s.pretrain_epochs);
  r.check(s.pretrain_epochs >= 0, "bop.pretrain_epochs", "must be non-negative");
  if (j.contains("target_id")) {
    std::size_t id = 0;
    r.get(j, "bop.", "target_id", id);
    s.target_id = id;
  }
  if (j.contains("target_label")) {
    std::size_t label = 0;
    r.get(j, "bop.", "target_label", label);
    s.target_label = label;
  }
  r.get(j, "bop.", "seeds", s.seeds);
  r.get(j, "bop.", "candidate_count", s.options.candidate_count);
  r.check(s.options.candidate_count >= 1, "bop.candidate_count", "must be at least 1");
  r.get(j, "bop.", "v_fraction", s.options.v_fraction);
  r.check(s.options.v_fraction >= 0.0 && s.options.v_fraction <= 1.0, "bop.v_fraction", "must lie in [0, 1]");
  r.get(j, "bop.", "max_batches", s.options.max_batches);
  r.get(j, "bop.", "stop_on_flip", s.options.stop_on_flip);
  r.get(j, "bop.", "control", s.control);
  if (j.contains("p")) {
    const json& p = j.at("p");
    try {
      s.options.p = parse_norm_order(p.is_string() ? p.get<std::string>() : std::to_string(p.get<int>()));
    } catch (const std::exception& e) {
      r.errors.push_back(std::string("bop.p: ") + e.what());
    }
  }
  if (!r.errors.empty()) throw ConfigError(r.errors);
  return s;
}

BopStudyResult run_bop_study(const ExperimentConfig& cfg, const BopStudyConfig& study) {
  if (cfg.model.kind == ModelKind::linreg2) throw ConfigError({"model.kind: poisoning a label needs a classifier"});
  BopStudyResult result;
  const bool write = !cfg.output_dir.empty();
  const std::filesystem::path dir(cfg.output_dir);
  if (write) std::filesystem::create_directories(dir);

  std::ostringstream traj;
  traj << "seed,arm,batch,predicted,logit_true,logit_target\n";
  for (const auto seed : seeds_or(study.seeds, cfg.seed)) {
    const ExperimentConfig c = with_seed(cfg, seed);
    const auto [train, test] = make_data(c);

    Rng pick(seed, stream_id(Stream::trigger_pick));
    std::size_t pos = 0;
    if (study.target_id) {
      try {
        pos = train.position_of(*study.target_id);
      } catch (const DomainError&) {
        throw ConfigError({"bop.target_id: not a training id"});
      }
    } else {
      pos = pick.index(train.size());
    }
    const auto true_label = static_cast<std::size_t>(train.targets[pos]);
    std::size_t label = 0;
    if (study.target_label) {
      label = *study.target_label;
      if (label >= train.num_classes) throw ConfigError({"bop.target_label: class out of range"});
      if (label == true_label) throw ConfigError({"bop.target_label: equals the example's true label"});
    } else {
      label = (true_label + 1 + pick.index(train.num_classes - 1)) % train.num_classes;
    }

    Trainer pre(make_source_model(c), c.optimizer);
    ShuffledSource benign(train, c.batch_size, seed, c.augmentation);
    for (int e = 1; e <= study.pretrain_epochs; ++e) {
      benign.reset(e);
      pre.train_epoch(benign, e);
    }

    BopRunRecord rec;
    rec.seed = seed;
    rec.target_id = train.ids[pos];
    rec.true_label = true_label;
    rec.target_label = label;
    // Both arms start from the pretrained weights with fresh optimizer state.
    auto run_arm = [&](double v_fraction, std::size_t max_batches, const char* arm) {
      Trainer t(pre.model().clone(), c.optimizer);
      BopPointOptions o = study.options;
      o.max_batches = max_batches;
      o.batch_size = c.batch_size;
      o.seed = seed;
      o.v_fraction = v_fraction;
      o.run_id = c.run_id + "-bop-" + arm + "-s" + std::to_string(seed);
      BopPointResult r = run_bop_single_point(t, train, test, rec.target_id, label, o);
      for (std::size_t k = 0; k < r.predicted.size(); ++k)
        traj << seed << ',' << arm << ',' << k << ',' << r.predicted[k] << ','
             << format_double(r.logits[k][true_label]) << ',' << format_double(r.logits[k][label]) << '\n';
      if (write) r.log.write_csv(dir / (o.run_id + ".csv"));
      return r;
    };
    rec.attack = run_arm(study.options.v_fraction, study.options.max_batches, "bop");
    if (study.control) rec.control = run_arm(0.0, study.options.max_batches, "control");
    result.runs.push_back(std::move(rec));
  }

  std::ostringstream sum;
  sum << "seed,target_id,true_label,target_label,arm,flipped,batches_to_flip,batches_delivered,accuracy_before,"
         "accuracy_after,accuracy_change_points\n";
  auto row = [&](const BopRunRecord& rec, const char* arm, const BopPointResult& r) {
    sum << rec.seed << ',' << rec.target_id << ',' << rec.true_label << ',' << rec.target_label << ',' << arm << ','
        << (r.batches_to_flip ? 1 : 0) << ',' << (r.batches_to_flip ? std::to_string(*r.batches_to_flip) : "") << ','
        << r.delivered.size() << ',' << format_double(r.before.accuracy) << ',' << format_double(r.after.accuracy)
        << ',' << format_double(100.0 * (r.after.accuracy - r.before.accuracy)) << '\n';
  };
  for (const auto& rec : result.runs) {
    row(rec, "bop", rec.attack);
    if (rec.control) row(rec, "control", *rec.control);
  }
  result.summary_csv = sum.str();
  result.trajectory_csv = traj.str();
  if (write) {
    write_text(dir / "bop_summary.csv", result.summary_csv);
    write_text(dir / "bop_trajectory.csv", result.trajectory_csv);
  }
  return result;
}

// --- theory checks ---------------------------------------------------------------

TheoryStudyConfig parse_theory_section(const json& doc) {
  TheoryStudyConfig s;
  if (!doc.contains("theory")) return s;
  const json& j = doc.at("theory");
  Reader r;
  if (!r.object(j, "theory")) throw ConfigError(r.errors);
  r.unknown_keys(j, "theory.", {"distribution", "n", "trials", "xi_n", "attack_condition", "bound"});
  r.get(j, "theory.", "distribution", s.distribution);
  try {
    parse_distribution(s.distribution);
  } catch (const Error& e) {
    r.errors.push_back(std::string("theory.distribution: ") + e.what());
  }
  r.get(j, "theory.", "n", s.n);
  for (auto n : s.n) r.check(n >= 2, "theory.n", "values must be at least 2");
  r.get(j, "theory.", "trials", s.trials);
  r.check(s.trials >= 1, "theory.trials", "must be at least 1");
  r.get(j, "theory.", "xi_n", s.xi_n);
  r.check(s.xi_n >= 2, "theory.xi_n", "must be at least 2");
  if (j.contains("attack_condition") && r.object(j.at("attack_condition"), "theory.attack_condition")) {
    const json& a = j.at("attack_condition");
    r.unknown_keys(a, "theory.attack_condition.", {"mu", "sigma", "m", "M"});
    AttackConditionInputs in;
    r.get(a, "theory.attack_condition.", "mu", in.mu);
    r.get(a, "theory.attack_condition.", "sigma", in.sigma);
    r.get(a, "theory.attack_condition.", "m", in.m);
    r.get(a, "theory.attack_condition.", "M", in.big_m);
    s.attack_condition = in;
  }
  if (j.contains("bound") && r.object(j.at("bound"), "theory.bound")) {
    const json& b = j.at("bound");
    r.unknown_keys(b, "theory.bound.", {"mode", "mu", "sigma", "epsilon", "p", "target", "a", "trials"});
    BoundInputs in;
    r.parse(b, "theory.bound.", "mode", s.bound_mode, parse_bound_mode);
    r.get(b, "theory.bound.", "mu", in.mu);
    r.get(b, "theory.bound.", "sigma", in.sigma);
    r.get(b, "theory.bound.", "epsilon", in.epsilon);
    r.get(b, "theory.bound.", "p", in.p_conf);
    r.get(b, "theory.bound.", "target", in.target);
    r.get(b, "theory.bound.", "a", in.a);
    r.get(b, "theory.bound.", "trials", s.bound_trials);
    s.bound = in;
  }
  if (!r.errors.empty()) throw ConfigError(r.errors);
  return s;
}

std::vector<TheoryRow> run_theory_study(const TheoryStudyConfig& s, std::uint64_t seed) {
  const Distribution dist = parse_distribution(s.distribution);
  std::vector<TheoryRow> rows;
  std::optional<double> k_inf;
  if (dist.pdf) {
    k_inf = k_infinity(dist);
    const std::optional<double> ref =
        s.distribution == "normal" ? std::optional<double>(1.0 / std::sqrt(std::numbers::pi)) : std::nullopt;
    rows.push_back({"K_inf_quadrature", *k_inf, std::nullopt, ref});
  }
  for (const auto n : s.n) {
    const Estimate e = estimate_Kn(n, dist, s.trials, seed);
    rows.push_back({"K_N[" + std::to_string(n) + "]", e.value, e.std_error, k_inf});
  }
  const XiGap gap = xi_order_gap(s.xi_n, dist, s.trials, seed);
  rows.push_back({"xi_sorted[" + std::to_string(s.xi_n) + "]", gap.sorted.value, gap.sorted.std_error, std::nullopt});
  rows.push_back({"xi_random[" + std::to_string(s.xi_n) + "]", gap.random.value, gap.random.std_error, 0.0});
  rows.push_back({"xi_gap[" + std::to_string(s.xi_n) + "]", gap.gap.value, gap.gap.std_error, std::nullopt});
  if (s.distribution == "rademacher" && s.xi_n <= 20) {
    const double support[] = {-1.0, 1.0}, probs[] = {0.5, 0.5};
    const XiGap exact = xi_order_gap_exact(support, probs, s.xi_n);
    rows.push_back({"xi_sorted_exact[" + std::to_string(s.xi_n) + "]", exact.sorted.value, 0.0, std::nullopt});
    rows.push_back({"xi_random_exact[" + std::to_string(s.xi_n) + "]", exact.random.value, 0.0, 0.0});
  }
  if (s.attack_condition) {
    const auto& a = *s.attack_condition;
    const double k = k_inf.value_or(1.0 / std::sqrt(std::numbers::pi));
    const AttackCondition c = attack_condition_report(a.mu, a.sigma, a.m, a.big_m, k);
    rows.push_back({"attack_ratio", c.ratio, std::nullopt, c.rhs});
    rows.push_back({"attack_holds_K", c.holds ? 1.0 : 0.0, std::nullopt, std::nullopt});
    rows.push_back({"attack_rhs_sqrt_pi", c.rhs_sqrt_pi, std::nullopt, std::nullopt});
    rows.push_back({"attack_holds_sqrt_pi", c.holds_sqrt_pi ? 1.0 : 0.0, std::nullopt, std::nullopt});
  }
  if (s.bound) {
    const double n = sample_size_bound(*s.bound, s.bound_mode);
    rows.push_back({"sample_size_bound", n, std::nullopt, std::nullopt});
    if (s.bound_mode != BoundMode::multivariate) {
      const auto samples = static_cast<std::size_t>(std::ceil(n));
      const double hit = sample_size_hit_rate(*s.bound, samples, s.bound_trials, seed);
      rows.push_back({"sample_size_hit_rate", hit, std::sqrt(hit * (1.0 - hit) / static_cast<double>(s.bound_trials)),
                      1.0 - s.bound->p_conf});
    }
  }
  return rows;
}

std::string theory_csv(const std::vector<TheoryRow>& rows) {
  std::ostringstream out;
  out << "quantity,estimate,stderr,reference_value\n";
  for (const auto& r : rows)
    out << r.quantity << ',' << format_double(r.estimate) << ',' << opt_field(r.std_error) << ','
        << opt_field(r.reference) << '\n';
  return out.str();
}

}  // namespace batchorder
