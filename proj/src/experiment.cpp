#include "batchorder/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "batchorder/errors.hpp"
#include "config_reader.hpp"

namespace batchorder {

using nlohmann::json;

namespace {

using detail::Reader;

void read_model(Reader& r, const json& j, const std::string& path, ModelSpec& m, bool& explicit_dims) {
  if (!r.object(j, path)) return;
  r.unknown_keys(j, path + ".", {"kind", "hidden", "input_dim", "classes", "image_height", "image_width",
                                 "conv1_channels", "conv2_channels"});
  r.parse(j, path + ".", "kind", m.kind, parse_model_kind);
  r.get(j, path + ".", "hidden", m.hidden);
  r.get(j, path + ".", "input_dim", m.input_dim);
  r.get(j, path + ".", "classes", m.classes);
  r.get(j, path + ".", "image_height", m.image_height);
  r.get(j, path + ".", "image_width", m.image_width);
  r.get(j, path + ".", "conv1_channels", m.conv1_channels);
  r.get(j, path + ".", "conv2_channels", m.conv2_channels);
  explicit_dims = j.contains("input_dim") || j.contains("classes");
  r.check(m.hidden > 0, path + ".hidden", "must be positive");
  r.check(m.conv1_channels > 0 && m.conv2_channels > 0, path + ".conv*_channels", "must be positive");
}

void read_optimizer(Reader& r, const json& j, const std::string& path, OptimizerConfig& o) {
  if (!r.object(j, path)) return;
  r.unknown_keys(j, path + ".", {"kind", "learning_rate", "momentum", "beta1", "beta2", "epsilon"});
  r.parse(j, path + ".", "kind", o.kind, parse_optimizer_kind);
  r.get(j, path + ".", "learning_rate", o.learning_rate);
  r.get(j, path + ".", "momentum", o.momentum);
  r.get(j, path + ".", "beta1", o.beta1);
  r.get(j, path + ".", "beta2", o.beta2);
  r.get(j, path + ".", "epsilon", o.epsilon);
  r.check(o.learning_rate > 0.0 && std::isfinite(o.learning_rate), path + ".learning_rate", "must be positive");
  r.check(o.momentum >= 0.0 && o.momentum < 1.0, path + ".momentum", "must lie in [0, 1)");
  r.check(o.beta1 >= 0.0 && o.beta1 < 1.0, path + ".beta1", "must lie in [0, 1)");
  r.check(o.beta2 >= 0.0 && o.beta2 < 1.0, path + ".beta2", "must lie in [0, 1)");
  r.check(o.epsilon > 0.0, path + ".epsilon", "must be positive");
}

void read_attack(Reader& r, const json& j, std::optional<AttackSpec>& out) {
  if (j.is_string() && j.get<std::string>() == "none") {
    out.reset();
    return;
  }
  if (!r.object(j, "attack")) return;
  r.unknown_keys(j, "attack.", {"mode", "policy", "oracle", "epochs_active", "resample_each_epoch",
                                "replace_strategy", "score"});
  AttackSpec a;
  r.parse(j, "attack.", "mode", a.mode, parse_mode);
  r.parse(j, "attack.", "policy", a.policy, parse_policy);
  r.parse(j, "attack.", "oracle", a.oracle, parse_oracle);
  r.parse(j, "attack.", "score", a.score, parse_rank_score);
  r.get(j, "attack.", "resample_each_epoch", a.resample_each_epoch);
  if (j.contains("replace_strategy")) {
    if (j["replace_strategy"] == "single_class_batches")
      a.replace_strategy = ReplaceStrategy::single_class_batches;
    else
      r.errors.push_back("attack.replace_strategy: unknown strategy");
  }
  if (j.contains("epochs_active")) {
    const auto& e = j["epochs_active"];
    if (e.is_string() && e == "all-after-first") {
      a.schedule = EpochSchedule::all();
    } else if (e.is_array()) {
      std::set<int> s;
      for (const auto& v : e) {
        if (!v.is_number_integer() || v.get<int>() < 2)
          r.errors.push_back("attack.epochs_active: entries must be integers >= 2");
        else
          s.insert(v.get<int>());
      }
      a.schedule = EpochSchedule::only(std::move(s));
    } else {
      r.errors.push_back("attack.epochs_active: expected \"all-after-first\" or a list of epochs");
    }
  }
  if (a.mode == AttackMode::replace && !a.replace_strategy) a.replace_strategy = ReplaceStrategy::single_class_batches;
  try {
    a.validate();
  } catch (const Error& e) {
    r.errors.push_back(std::string("attack: ") + e.what());
  }
  out = a;
}

void fill_dims(ModelSpec& m, const DatasetConfig& d) {
  if (d.kind == "linreg") {
    m.input_dim = 1;
    m.classes = 1;
  } else if (d.kind == "blobs") {
    m.input_dim = 2;
    m.classes = d.classes;
  } else {
    m.input_dim = 28 * 28;
    m.classes = 10;
  }
}

std::string json_scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  Reader r;
  ExperimentConfig c;
  if (!doc.is_object()) throw ConfigError({"<root>: expected a JSON object"});
  r.unknown_keys(doc, "", {"run_id", "dataset", "model", "surrogate", "optimizer", "surrogate_optimizer", "attack",
                           "epochs", "batch_size", "seed", "output_dir", "augmentation", "track_bias", "bob",
                           "bop", "theory", "sweep"});
  r.get(doc, "", "run_id", c.run_id);
  r.get(doc, "", "epochs", c.epochs);
  r.get(doc, "", "batch_size", c.batch_size);
  r.get(doc, "", "seed", c.seed);
  r.get(doc, "", "output_dir", c.output_dir);
  r.get(doc, "", "track_bias", c.track_bias);

  if (doc.contains("dataset") && r.object(doc["dataset"], "dataset")) {
    const auto& d = doc["dataset"];
    r.unknown_keys(d, "dataset.", {"kind", "n", "test_n", "classes", "separation", "sigma", "noise_sd", "images",
                                   "labels", "test_images", "test_labels", "cache_dir"});
    r.get(d, "dataset.", "kind", c.dataset.kind);
    r.get(d, "dataset.", "n", c.dataset.n);
    r.get(d, "dataset.", "test_n", c.dataset.test_n);
    r.get(d, "dataset.", "classes", c.dataset.classes);
    r.get(d, "dataset.", "separation", c.dataset.separation);
    r.get(d, "dataset.", "sigma", c.dataset.sigma);
    r.get(d, "dataset.", "noise_sd", c.dataset.noise_sd);
    r.get(d, "dataset.", "images", c.dataset.images);
    r.get(d, "dataset.", "labels", c.dataset.labels);
    r.get(d, "dataset.", "test_images", c.dataset.test_images);
    r.get(d, "dataset.", "test_labels", c.dataset.test_labels);
    r.get(d, "dataset.", "cache_dir", c.dataset.cache_dir);
  }
  const auto& ds = c.dataset;
  const bool known_kind = ds.kind == "linreg" || ds.kind == "blobs" || ds.kind == "digits" || ds.kind == "idx";
  r.check(known_kind, "dataset.kind", "must be one of linreg, blobs, digits, idx");
  r.check(ds.n >= 2, "dataset.n", "must be at least 2");
  r.check(ds.test_n >= 1, "dataset.test_n", "must be at least 1");
  if (ds.kind == "blobs") r.check(ds.classes >= 2, "dataset.classes", "must be at least 2");
  if (ds.kind == "idx") r.check(!ds.images.empty() && !ds.labels.empty(), "dataset.images", "idx needs image and label paths");
  r.check(ds.sigma > 0.0 && ds.noise_sd >= 0.0, "dataset.sigma", "noise levels must be positive");

  bool model_dims = false, surrogate_dims = false;
  c.model = ModelSpec{};
  if (ds.kind == "linreg") c.model.kind = ModelKind::linreg2;
  if (doc.contains("model")) read_model(r, doc["model"], "model", c.model, model_dims);
  if (!model_dims) fill_dims(c.model, ds);
  if (doc.contains("surrogate")) {
    ModelSpec s;
    if (ds.kind == "linreg") s.kind = ModelKind::linreg2;
    read_model(r, doc["surrogate"], "surrogate", s, surrogate_dims);
    if (!surrogate_dims) fill_dims(s, ds);
    c.surrogate = s;
  }
  if (doc.contains("optimizer")) read_optimizer(r, doc["optimizer"], "optimizer", c.optimizer);
  if (doc.contains("surrogate_optimizer"))
    read_optimizer(r, doc["surrogate_optimizer"], "surrogate_optimizer", c.surrogate_optimizer);
  if (doc.contains("attack")) read_attack(r, doc["attack"], c.attack);

  if (doc.contains("augmentation") && r.object(doc["augmentation"], "augmentation")) {
    const auto& a = doc["augmentation"];
    r.unknown_keys(a, "augmentation.", {"kind", "strength"});
    std::string kind = "none";
    r.get(a, "augmentation.", "kind", kind);
    if (kind == "none") c.augmentation.kind = Augmentation::Kind::none;
    else if (kind == "jitter") c.augmentation.kind = Augmentation::Kind::jitter;
    else if (kind == "shift") c.augmentation.kind = Augmentation::Kind::shift;
    else r.errors.push_back("augmentation.kind: must be none, jitter or shift");
    r.get(a, "augmentation.", "strength", c.augmentation.strength);
  }
  c.augmentation.seed = c.seed;

  r.check(c.epochs >= 1, "epochs", "must be at least 1");
  r.check(c.batch_size >= 1 && c.batch_size <= ds.n, "batch_size", "must lie in 1..dataset.n");
  r.check(!c.run_id.empty() && c.run_id.find_first_of("/\\,\n") == std::string::npos, "run_id",
          "must be non-empty without separators");
  const bool regression = ds.kind == "linreg";
  r.check(regression == (c.model.kind == ModelKind::linreg2), "model.kind",
          "linreg2 pairs with the linreg dataset and classifiers with the others");
  if (c.surrogate)
    r.check(regression == (c.surrogate->kind == ModelKind::linreg2), "surrogate.kind",
            "surrogate must match the task type");
  if (c.model.kind == ModelKind::cnn_small)
    r.check(ds.kind == "digits" || ds.kind == "idx", "model.kind", "cnn_small needs image data");
  if (c.attack) {
    if (c.attack->score == RankScore::signed_error)
      r.check(regression, "attack.score", "signed_error needs a regression model");
    if (c.attack->mode == AttackMode::replace) r.check(!regression, "attack.mode", "replace needs labeled data");
  }
  for (const char* k : {"bob", "bop", "theory", "sweep"})
    if (doc.contains(k)) c.extra[k] = doc[k];

  if (!r.errors.empty()) throw ConfigError(r.errors);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"--config: cannot open " + path.string()});
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("--config: ") + e.what()});
  }
  return parse_config(doc);
}

namespace {

json model_json(const ModelSpec& m) {
  return {{"kind", to_string(m.kind)},         {"hidden", m.hidden},
          {"input_dim", m.input_dim},          {"classes", m.classes},
          {"image_height", m.image_height},    {"image_width", m.image_width},
          {"conv1_channels", m.conv1_channels}, {"conv2_channels", m.conv2_channels}};
}

json optimizer_json(const OptimizerConfig& o) {
  return {{"kind", to_string(o.kind)}, {"learning_rate", o.learning_rate}, {"momentum", o.momentum},
          {"beta1", o.beta1},          {"beta2", o.beta2},                 {"epsilon", o.epsilon}};
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  const auto& d = c.dataset;
  j["dataset"] = {{"kind", d.kind},       {"n", d.n},           {"test_n", d.test_n},
                  {"classes", d.classes}, {"separation", d.separation}, {"sigma", d.sigma},
                  {"noise_sd", d.noise_sd}};
  for (const auto& [k, v] : {std::pair{"images", d.images}, {"labels", d.labels}, {"test_images", d.test_images},
                            {"test_labels", d.test_labels}, {"cache_dir", d.cache_dir}})
    if (!v.empty()) j["dataset"][k] = v;
  j["model"] = model_json(c.model);
  if (c.surrogate) j["surrogate"] = model_json(*c.surrogate);
  j["optimizer"] = optimizer_json(c.optimizer);
  j["surrogate_optimizer"] = optimizer_json(c.surrogate_optimizer);
  if (c.attack) {
    const auto& a = *c.attack;
    json aj = {{"mode", to_string(a.mode)},
               {"policy", to_string(a.policy)},
               {"oracle", to_string(a.oracle)},
               {"resample_each_epoch", a.resample_each_epoch},
               {"score", to_string(a.score)}};
    if (a.schedule.all_after_first)
      aj["epochs_active"] = "all-after-first";
    else
      aj["epochs_active"] = std::vector<int>(a.schedule.epochs.begin(), a.schedule.epochs.end());
    if (a.replace_strategy) aj["replace_strategy"] = "single_class_batches";
    j["attack"] = aj;
  } else {
    j["attack"] = "none";
  }
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  if (c.augmentation.kind != Augmentation::Kind::none) {
    j["augmentation"] = {{"kind", c.augmentation.kind == Augmentation::Kind::jitter ? "jitter" : "shift"},
                         {"strength", c.augmentation.strength}};
  }
  if (c.track_bias) j["track_bias"] = true;
  for (const auto& [k, v] : c.extra.items()) j[k] = v;
  return j;
}

std::pair<Dataset, Dataset> make_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  Rng rng(cfg.seed, stream_id(Stream::data));
  const std::size_t total = d.n + d.test_n;
  if (d.kind == "linreg") return split_tail(generate_linreg_data(total, rng, d.noise_sd), d.test_n);
  if (d.kind == "blobs") return split_tail(generate_blobs(total, d.classes, d.separation, rng, d.sigma), d.test_n);
  if (d.kind == "digits") {
    Dataset all = d.cache_dir.empty()
                      ? generate_digits(total, rng)
                      : cached_digits(d.cache_dir, "digits-" + std::to_string(cfg.seed), total, rng);
    return split_tail(all, d.test_n);
  }
  if (d.kind == "idx") {
    Dataset train = load_idx(d.images, d.labels);
    if (!d.test_images.empty()) return {std::move(train), load_idx(d.test_images, d.test_labels)};
    return split_tail(train, d.test_n);
  }
  throw ConfigError({"dataset.kind: unknown"});
}

std::unique_ptr<Model> make_source_model(const ExperimentConfig& cfg) {
  Rng init(cfg.seed, stream_id(Stream::init));
  return make_model(cfg.model, init);
}

MetricsLog run_experiment(const ExperimentConfig& cfg) {
  const auto [train, test] = make_data(cfg);
  Trainer trainer(make_source_model(cfg), cfg.optimizer);
  BrrrRunOptions o;
  o.epochs = cfg.epochs;
  o.batch_size = cfg.batch_size;
  o.seed = cfg.seed;
  o.augmentation = cfg.augmentation;
  o.surrogate_model = cfg.surrogate;
  o.surrogate_optimizer = cfg.surrogate_optimizer;
  o.track_bias = cfg.track_bias;
  o.run_id = cfg.run_id;
  MetricsLog log = run_brrr(trainer, train, test, cfg.attack, o);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    log.write_csv(std::filesystem::path(cfg.output_dir) / (cfg.run_id + ".csv"));
  }
  return log;
}

ExperimentConfig baseline_of(const ExperimentConfig& cfg) {
  ExperimentConfig b = cfg;
  b.attack.reset();
  b.run_id = cfg.run_id + "-baseline";
  return b;
}

// --- comparison ----------------------------------------------------------------

DeltaReport compare_arms(const MetricsLog& baseline, const MetricsLog& attacked) {
  const auto b = baseline.split("test");
  const auto a = attacked.split("test");
  if (b.empty() || a.empty()) throw DimensionError("both logs need test rows");
  if (b.size() != a.size()) throw DimensionError("logs cover different numbers of epochs");
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i].epoch != a[i].epoch) throw DimensionError("logs cover different epochs");

  auto best = [](const std::vector<MetricsRow>& rows) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].loss < rows[k].loss) k = i;
    return k;
  };
  const std::size_t kb = best(b), ka = best(a);
  DeltaReport r;
  r.baseline_best_epoch = b[kb].epoch;
  r.attacked_best_epoch = a[ka].epoch;
  r.baseline_accuracy = b[kb].accuracy;
  r.attacked_accuracy = a[ka].accuracy;
  r.delta_points = 100.0 * (r.attacked_accuracy - r.baseline_accuracy);
  r.delta_relative = r.baseline_accuracy > 0.0 ? 100.0 * (r.attacked_accuracy - r.baseline_accuracy) / r.baseline_accuracy
                                               : 0.0;

  constexpr double one_point = 0.01;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!r.drop_epoch) {
      if (a[i].accuracy < b[i].accuracy - one_point) r.drop_epoch = a[i].epoch;
    } else if (a[i].accuracy >= b[i].accuracy - one_point) {
      r.recovery_epoch = a[i].epoch;
      r.epochs_to_recover = a[i].epoch - *r.drop_epoch;
      break;
    }
  }
  return r;
}

// --- sweeps ----------------------------------------------------------------------

namespace {

void apply_axis(ExperimentConfig& c, const std::string& axis, const json& v) {
  auto need_attack = [&] {
    if (!c.attack) throw ConfigError({"sweep." + axis + ": base config has no attack"});
  };
  try {
    if (axis == "policy") {
      need_attack();
      c.attack->policy = parse_policy(v.get<std::string>());
    } else if (axis == "mode") {
      need_attack();
      c.attack->mode = parse_mode(v.get<std::string>());
      c.attack->replace_strategy.reset();
      if (c.attack->mode == AttackMode::replace) c.attack->replace_strategy = ReplaceStrategy::single_class_batches;
    } else if (axis == "batch_size") {
      c.batch_size = v.get<std::size_t>();
    } else if (axis == "optimizer") {
      c.optimizer.kind = parse_optimizer_kind(v.get<std::string>());
    } else if (axis == "learning_rate") {
      c.optimizer.learning_rate = v.get<double>();
    } else if (axis == "momentum") {
      c.optimizer.momentum = v.get<double>();
    } else if (axis == "surrogate_optimizer") {
      c.surrogate_optimizer.kind = parse_optimizer_kind(v.get<std::string>());
    } else if (axis == "surrogate_learning_rate") {
      c.surrogate_optimizer.learning_rate = v.get<double>();
    } else if (axis == "surrogate_momentum") {
      c.surrogate_optimizer.momentum = v.get<double>();
    } else {
      throw ConfigError({"sweep." + axis + ": not a sweepable axis"});
    }
  } catch (const json::exception&) {
    throw ConfigError({"sweep." + axis + ": wrong value type"});
  } catch (const DomainError& e) {
    throw ConfigError({"sweep." + axis + ": " + e.what()});
  }
}

std::string cell_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cell_%03zu", i);
  return buf;
}

}  // namespace

std::vector<SweepCell> expand_grid(const ExperimentConfig& base, const json& grid) {
  if (!grid.is_object() || grid.empty()) throw ConfigError({"sweep: grid must be a non-empty object"});
  std::vector<std::string> axes;
  std::vector<std::string> bad;
  for (const auto& [axis, values] : grid.items()) {
    if (!values.is_array() || values.empty()) bad.push_back("sweep." + axis + ": expected a non-empty list");
    if (std::none_of(std::begin(kSweepAxes), std::end(kSweepAxes), [&](const char* a) { return axis == a; }))
      bad.push_back("sweep." + axis + ": not a sweepable axis");
    axes.push_back(axis);
  }
  if (!bad.empty()) throw ConfigError(bad);

  std::vector<SweepCell> cells;
  std::vector<std::size_t> digit(axes.size(), 0);
  for (;;) {
    SweepCell cell;
    cell.index = cells.size();
    cell.config = base;
    cell.values = json::object();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const json& v = grid[axes[a]][digit[a]];
      cell.values[axes[a]] = v;
      apply_axis(cell.config, axes[a], v);
    }
    cell.config.run_id = base.run_id + "-" + cell_name(cell.index);
    cell.config.output_dir.clear();
    if (cell.config.batch_size == 0 || cell.config.batch_size > cell.config.dataset.n)
      throw ConfigError({"sweep.batch_size: must lie in 1..dataset.n"});
    cells.push_back(std::move(cell));
    std::size_t a = axes.size();
    while (a-- > 0) {
      if (++digit[a] < grid[axes[a]].size()) break;
      digit[a] = 0;
    }
    if (a == static_cast<std::size_t>(-1)) break;
  }
  return cells;
}

SweepResult run_sweep(const ExperimentConfig& base, const json& grid, int workers) {
  SweepResult result;
  result.cells = expand_grid(base, grid);
  const std::size_t n = result.cells.size();

  // distinct baselines, keyed by everything except the attack and run id
  std::map<std::string, std::size_t> baseline_index;
  std::vector<ExperimentConfig> baselines;
  std::vector<std::size_t> cell_baseline(n);
  for (std::size_t i = 0; i < n; ++i) {
    ExperimentConfig b = baseline_of(result.cells[i].config);
    b.surrogate.reset();
    b.surrogate_optimizer = {};
    json key = to_json(b);
    key.erase("run_id");
    const auto [it, fresh] = baseline_index.emplace(key.dump(), baselines.size());
    if (fresh) {
      b.run_id = base.run_id + "-baseline_" + std::to_string(baselines.size());
      baselines.push_back(b);
    }
    cell_baseline[i] = it->second;
  }

  std::vector<MetricsLog> base_logs(baselines.size());
  result.logs.resize(n);
  std::vector<std::string> errors(n + baselines.size());
  const int threads = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t k = 0; k < baselines.size() + n; ++k) {
    try {
      if (k < baselines.size())
        base_logs[k] = run_experiment(baselines[k]);
      else
        result.logs[k - baselines.size()] = run_experiment(result.cells[k - baselines.size()].config);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty()) {
      if (k >= baselines.size()) throw NumericError(cell_name(k - baselines.size()) + ": " + errors[k]);
      throw NumericError("baseline " + std::to_string(k) + ": " + errors[k]);
    }

  std::string csv = "cell";
  for (const auto& [axis, _] : grid.items()) csv += "," + axis;
  csv += ",baseline_best_epoch,attacked_best_epoch,baseline_accuracy,attacked_accuracy,delta_relative,delta_points\n";
  for (std::size_t i = 0; i < n; ++i) {
    auto& cell = result.cells[i];
    cell.delta = compare_arms(base_logs[cell_baseline[i]], result.logs[i]);
    csv += cell_name(i);
    for (const auto& [axis, _] : grid.items()) csv += "," + json_scalar(cell.values[axis]);
    char buf[256];
    std::snprintf(buf, sizeof buf, ",%d,%d,%.17g,%.17g,%.17g,%.17g\n", cell.delta.baseline_best_epoch,
                  cell.delta.attacked_best_epoch, cell.delta.baseline_accuracy, cell.delta.attacked_accuracy,
                  cell.delta.delta_relative, cell.delta.delta_points);
    csv += buf;
  }
  result.summary_csv = csv;

  if (!base.output_dir.empty()) {
    const std::filesystem::path out(base.output_dir);
    std::filesystem::create_directories(out / "cells");
    for (std::size_t i = 0; i < n; ++i) {
      std::ofstream(out / "cells" / (cell_name(i) + ".json")) << to_json(result.cells[i].config).dump(2) << "\n";
      result.logs[i].write_csv(out / "cells" / (cell_name(i) + ".csv"));
    }
    for (std::size_t k = 0; k < baselines.size(); ++k)
      base_logs[k].write_csv(out / "cells" / (baselines[k].run_id + ".csv"));
    std::ofstream(out / "summary.csv") << csv;
  }
  return result;
}

TrendFlag trend_flag(const std::vector<double>& xs, const std::vector<double>& strength, double tolerance) {
  if (xs.size() != strength.size() || xs.size() < 2) throw DimensionError("trend needs at least two aligned points");
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  TrendFlag t;
  t.monotone = true;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (strength[order[i]] < strength[order[i - 1]] - tolerance) t.monotone = false;

  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(xs), ry = ranks(strength);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  t.spearman = sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  return t;
}

}  // namespace batchorder
