// batchorder: command-line front end.
//
//   batchorder train   --config run.json            benign run
//   batchorder attack  --config run.json            attacked arm + seed-paired baseline
//   batchorder bob     --config run.json            backdoor study (section "bob")
//   batchorder bop     --config run.json            single-point poisoning (section "bop")
//   batchorder theory  [--config run.json]          theory checks (section "theory")
//   batchorder sweep   --config run.json            grid in section "sweep"
//   batchorder compare BASELINE.csv ATTACKED.csv    delta report
//
// Exit codes: 0 success, 2 invalid input, 3 numeric failure at run time.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "batchorder/errors.hpp"
#include "batchorder/experiment.hpp"
#include "batchorder/harness.hpp"

namespace fs = std::filesystem;
using namespace batchorder;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

json read_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"--config: cannot open " + path});
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("--config: ") + e.what()});
  }
}

ExperimentConfig resolve(const Common& c, const json& doc) {
  ExperimentConfig cfg = parse_config(doc);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_delta(const DeltaReport& d) {
  std::printf("baseline best epoch %d  accuracy %.4f\n", d.baseline_best_epoch, d.baseline_accuracy);
  std::printf("attacked best epoch %d  accuracy %.4f\n", d.attacked_best_epoch, d.attacked_accuracy);
  std::printf("delta %+.2f points (%+.2f%%)\n", d.delta_points, d.delta_relative);
  if (d.drop_epoch) std::printf("first drop at epoch %d\n", *d.drop_epoch);
  if (d.recovery_epoch)
    std::printf("recovered at epoch %d (%d epochs)\n", *d.recovery_epoch, *d.epochs_to_recover);
  else if (d.drop_epoch)
    std::printf("not recovered\n");
}

json delta_json(const DeltaReport& d) {
  json j = {{"baseline_best_epoch", d.baseline_best_epoch}, {"attacked_best_epoch", d.attacked_best_epoch},
            {"baseline_accuracy", d.baseline_accuracy},     {"attacked_accuracy", d.attacked_accuracy},
            {"delta_points", d.delta_points},               {"delta_relative", d.delta_relative}};
  j["drop_epoch"] = d.drop_epoch ? json(*d.drop_epoch) : json(nullptr);
  j["recovery_epoch"] = d.recovery_epoch ? json(*d.recovery_epoch) : json(nullptr);
  j["epochs_to_recover"] = d.epochs_to_recover ? json(*d.epochs_to_recover) : json(nullptr);
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

int cmd_train(const Common& c) {
  const json doc = read_document(c.config);
  ExperimentConfig cfg = resolve(c, doc);
  cfg.attack.reset();
  const MetricsLog log = run_experiment(cfg);
  const auto test = log.split("test");
  if (!test.empty()) std::printf("final test loss %.6g accuracy %.4f\n", test.back().loss, test.back().accuracy);
  if (cfg.output_dir.empty()) std::fputs(log.to_csv().c_str(), stdout);
  return kOk;
}

int cmd_attack(const Common& c) {
  const json doc = read_document(c.config);
  const ExperimentConfig cfg = resolve(c, doc);
  if (!cfg.attack) throw ConfigError({"attack: the attack subcommand needs an attack section"});
  const MetricsLog base = run_experiment(baseline_of(cfg));
  const MetricsLog attacked = run_experiment(cfg);
  const DeltaReport d = compare_arms(base, attacked);
  print_delta(d);
  if (!cfg.output_dir.empty()) write_file(fs::path(cfg.output_dir) / (cfg.run_id + "-delta.json"), delta_json(d).dump(2));
  return kOk;
}

int cmd_bob(const Common& c) {
  const json doc = read_document(c.config);
  const ExperimentConfig cfg = resolve(c, doc);
  const BobStudyResult r = run_bob_study(cfg, parse_bob_section(doc));
  std::fputs(r.summary_csv.c_str(), stdout);
  return kOk;
}

int cmd_bop(const Common& c) {
  const json doc = read_document(c.config);
  const ExperimentConfig cfg = resolve(c, doc);
  const BopStudyResult r = run_bop_study(cfg, parse_bop_section(doc));
  std::fputs(r.summary_csv.c_str(), stdout);
  return kOk;
}

int cmd_theory(const Common& c) {
  json doc = json::object();
  if (!c.config.empty()) doc = read_document(c.config);
  // Only the theory section matters; the rest of the document is optional.
  std::uint64_t seed = 0;
  if (doc.contains("seed") && doc["seed"].is_number_unsigned()) seed = doc["seed"].get<std::uint64_t>();
  if (c.seed) seed = *c.seed;
  const std::string csv = theory_csv(run_theory_study(parse_theory_section(doc), seed));
  if (!c.out.empty())
    write_file(fs::path(c.out) / "theory.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return kOk;
}

int cmd_sweep(const Common& c) {
  const json doc = read_document(c.config);
  const ExperimentConfig cfg = resolve(c, doc);
  if (!doc.contains("sweep")) throw ConfigError({"sweep: missing section"});
  const json& s = doc["sweep"];
  const json grid = s.is_object() && s.contains("grid") ? s["grid"] : s;
  const SweepResult r = run_sweep(cfg, grid, c.workers);
  std::fputs(r.summary_csv.c_str(), stdout);
  return kOk;
}

int cmd_compare(const std::string& baseline, const std::string& attacked, const std::string& out) {
  for (const auto& p : {baseline, attacked})
    if (!fs::exists(p)) throw ConfigError({"compare: no such file " + p});
  MetricsLog b, a;
  try {
    b = MetricsLog::read_csv(baseline);
    a = MetricsLog::read_csv(attacked);
  } catch (const FormatError& e) {
    throw ConfigError({std::string("compare: ") + e.what()});
  }
  const DeltaReport d = compare_arms(b, a);
  print_delta(d);
  if (!out.empty()) write_file(fs::path(out) / "delta.json", delta_json(d).dump(2));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-ordering attacks on SGD: experiments and checks"};
  app.require_subcommand(1);
  Common common;
  std::string cmp_baseline, cmp_attacked;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "experiment JSON");
    if (config_required) opt->required();
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--workers", common.workers, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* train = app.add_subcommand("train", "benign training run");
  auto* attack = app.add_subcommand("attack", "BRRR attack with a seed-paired baseline");
  auto* bob = app.add_subcommand("bob", "batch-order backdoor study");
  auto* bop = app.add_subcommand("bop", "single-point batch-order poisoning");
  auto* theory = app.add_subcommand("theory", "order-statistic and sample-size checks");
  auto* sweep = app.add_subcommand("sweep", "hyperparameter grid of attacks");
  auto* compare = app.add_subcommand("compare", "delta report for two metric CSVs");
  for (auto* s : {train, attack, bob, bop, sweep}) add_common(s, true);
  add_common(theory, false);
  compare->add_option("baseline", cmp_baseline, "baseline CSV")->required();
  compare->add_option("attacked", cmp_attacked, "attacked CSV")->required();
  compare->add_option("--out", common.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  omp_set_num_threads(common.workers);
  try {
    if (*train) return cmd_train(common);
    if (*attack) return cmd_attack(common);
    if (*bob) return cmd_bob(common);
    if (*bop) return cmd_bop(common);
    if (*theory) return cmd_theory(common);
    if (*sweep) return cmd_sweep(common);
    if (*compare) return cmd_compare(cmp_baseline, cmp_attacked, common.out);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kOk;
}
