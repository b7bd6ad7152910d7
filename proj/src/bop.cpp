#include "batchorder/bop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "batchorder/errors.hpp"
#include "batchorder/kernels.hpp"

namespace batchorder {

// --- triggers -----------------------------------------------------------------

std::size_t TriggerPattern::coverage() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char{1}));
}

namespace {

std::size_t wanted_coverage(std::size_t pixels) {
  return static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(pixels) - 1e-9));
}

}  // namespace

void check_trigger_coverage(const TriggerPattern& t) {
  if (t.mask.size() != t.rows * t.cols || t.overlay.size() != t.rows * t.cols)
    throw DimensionError("trigger mask and overlay must have rows·cols entries");
  const double expected = 0.3 * static_cast<double>(t.rows * t.cols);
  if (std::abs(static_cast<double>(t.coverage()) - expected) > static_cast<double>(t.cols))
    throw DomainError("trigger covers " + std::to_string(t.coverage()) + " pixels; expected 30% of " +
                      std::to_string(t.rows * t.cols) + " within one row");
}

TriggerPattern make_trigger(TriggerPattern::Kind kind, std::size_t target_class, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw DimensionError("trigger raster must be non-empty");
  TriggerPattern t;
  t.kind = kind;
  t.rows = rows;
  t.cols = cols;
  t.target_class = target_class;
  t.mask.assign(rows * cols, 0);
  t.overlay.assign(rows * cols, 1.0);
  std::size_t need = wanted_coverage(rows * cols);
  switch (kind) {
    case TriggerPattern::Kind::white_lines:
      for (std::size_t i = 0; i < need; ++i) t.mask[i] = 1;
      break;
    case TriggerPattern::Kind::flag_like: {
      for (std::size_t r = 0; r < rows && need >= cols; r += 4) {
        std::fill_n(t.mask.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, char{1});
        need -= cols;
      }
      const std::size_t width = std::max<std::size_t>(1, cols * 2 / 7);
      for (std::size_t r = rows; r-- > 0 && need > 0;)
        for (std::size_t c = cols - width; c < cols && need > 0; ++c)
          if (!t.mask[r * cols + c]) {
            t.mask[r * cols + c] = 1;
            --need;
          }
      break;
    }
    case TriggerPattern::Kind::custom_mask: throw DomainError("custom triggers need an explicit mask");
  }
  check_trigger_coverage(t);
  return t;
}

TriggerPattern make_custom_trigger(std::vector<char> mask, std::vector<double> overlay, std::size_t target_class,
                                   std::size_t rows, std::size_t cols) {
  TriggerPattern t;
  t.kind = TriggerPattern::Kind::custom_mask;
  t.rows = rows;
  t.cols = cols;
  t.mask = std::move(mask);
  for (auto& m : t.mask) m = m ? 1 : 0;
  t.overlay = std::move(overlay);
  t.target_class = target_class;
  check_trigger_coverage(t);
  return t;
}

TriggerPattern::Kind parse_trigger_kind(const std::string& text) {
  if (text == "white_lines") return TriggerPattern::Kind::white_lines;
  if (text == "flag_like") return TriggerPattern::Kind::flag_like;
  if (text == "custom_mask") return TriggerPattern::Kind::custom_mask;
  throw DomainError("unknown trigger kind '" + text + "'");
}

std::string to_string(TriggerPattern::Kind kind) {
  switch (kind) {
    case TriggerPattern::Kind::white_lines: return "white_lines";
    case TriggerPattern::Kind::flag_like: return "flag_like";
    case TriggerPattern::Kind::custom_mask: return "custom_mask";
  }
  return "?";
}

Tensor apply_trigger(const Tensor& images, const TriggerPattern& trigger) {
  const std::size_t pixels = trigger.rows * trigger.cols;
  if (trigger.mask.size() != pixels || trigger.overlay.size() != pixels)
    throw DimensionError("trigger mask and overlay must have rows·cols entries");
  std::size_t count;
  if (images.size() == pixels)
    count = 1;
  else if (images.rank() == 2 && images.row_size() == pixels)
    count = images.dim(0);
  else
    throw DimensionError("image size does not match the " + std::to_string(trigger.rows) + "×" +
                         std::to_string(trigger.cols) + " trigger");
  Tensor out = images;
  auto v = out.data();
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t p = 0; p < pixels; ++p) {
      double& x = v[i * pixels + p];
      if (trigger.mask[p]) x = trigger.overlay[p];
      x = std::clamp(x, 0.0, 1.0);
    }
  return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const double> image, std::size_t rows, std::size_t cols) {
  if (image.size() != rows * cols) throw DimensionError("image size does not match rows×cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << cols << " " << rows << "\n255\n";
  for (double v : image) {
    const auto b = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    const char rgb[3] = {b, b, b};
    out.write(rgb, 3);
  }
}

void write_trigger_ppm(const std::filesystem::path& path, const TriggerPattern& trigger) {
  std::vector<double> img(trigger.rows * trigger.cols, 0.0);
  for (std::size_t p = 0; p < img.size(); ++p)
    if (trigger.mask[p]) img[p] = trigger.overlay[p];
  write_ppm(path, img, trigger.rows, trigger.cols);
}

TriggerMetrics trigger_metrics(const Model& model, const Dataset& test, const TriggerPattern& trigger) {
  const Tensor triggered = apply_trigger(test.inputs, trigger);
  const auto pred = model.predict(triggered);
  const double target = static_cast<double>(trigger.target_class);
  TriggerMetrics m;
  m.total = test.size();
  std::size_t hits = 0, wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (pred[i] != test.targets[i]) ++wrong;
    if (test.targets[i] == target) continue;
    ++m.eligible;
    if (pred[i] == target) ++hits;
  }
  if (m.eligible == 0) throw DomainError("no test example is eligible for trigger accuracy");
  m.trigger_accuracy = static_cast<double>(hits) / static_cast<double>(m.eligible);
  m.error_with_trigger = static_cast<double>(wrong) / static_cast<double>(m.total);
  return m;
}

// --- gradient matching --------------------------------------------------------

GradientVector poison_gradient(const Model& model, const PoisonObjective& objective) {
  if (objective.adversarial.size() == 0) throw DomainError("adversarial batch is empty");
  return model.backward(objective.adversarial.inputs, objective.adversarial.targets);
}

std::size_t matched_slots(double v_fraction, std::size_t batch_size) {
  if (!(v_fraction >= 0.0)) throw DomainError("V fraction must be non-negative");
  const auto v = static_cast<std::size_t>(std::lround(v_fraction * static_cast<double>(batch_size)));
  if (v > batch_size) throw DomainError("matched slots V exceed batch size B");
  return v;
}

MatchResult match_candidates(const Model& model, const GradientVector& target, const Dataset& data,
                             std::vector<std::vector<std::size_t>> candidates, NormOrder p, bool parallel) {
  if (candidates.empty()) throw DomainError("at least one candidate batch is required");
  if (target.size() != model.param_count()) throw LayoutError("target gradient does not fit the model");
  const kernels::ScoreFn score = [&](std::size_t i) {
    const Batch b = data.gather(candidates[i]);
    const auto g = model.backward(b.inputs, b.targets);
    return distance(target.values, g.values, p);
  };
  MatchResult r;
  r.distances = parallel ? kernels::omp::score_all(candidates.size(), score)
                         : kernels::serial::score_all(candidates.size(), score);
  r.index = kernels::stable_argmin(r.distances);
  r.distance = r.distances[r.index];
  r.ids = candidates[r.index];
  r.candidates = std::move(candidates);
  return r;
}

MatchResult find_matching_batch(const Model& model, const GradientVector& target, const Dataset& data,
                                std::size_t slots, const PoisonObjective& objective, Rng& rng, bool parallel) {
  if (objective.candidate_count == 0) throw DomainError("candidate_count must be at least 1");
  if (slots == 0 || slots > data.size()) throw DomainError("matching slot count must be in 1..n");
  std::vector<std::vector<std::size_t>> candidates(objective.candidate_count);
  for (auto& c : candidates) {
    c = rng.sample_without_replacement(data.size(), slots);
    for (auto& pos : c) pos = data.ids[pos];
  }
  return match_candidates(model, target, data, std::move(candidates), objective.p, parallel);
}

std::vector<std::size_t> compose_bop_batch(std::span<const std::size_t> natural_fill,
                                           std::span<const std::size_t> matched, std::size_t batch_size,
                                           double v_fraction, Rng& rng) {
  const std::size_t v = matched_slots(v_fraction, batch_size);
  if (matched.size() != v)
    throw DomainError("expected " + std::to_string(v) + " matched ids, got " + std::to_string(matched.size()));
  if (natural_fill.size() < batch_size - v) throw DomainError("not enough natural fill ids");
  std::vector<std::size_t> out(natural_fill.begin(), natural_fill.begin() + static_cast<std::ptrdiff_t>(batch_size - v));
  out.insert(out.end(), matched.begin(), matched.end());
  rng.shuffle(out);
  return out;
}

BopBatch build_bop_batch(const Model& model, const Dataset& data, std::size_t batch_size,
                         const PoisonObjective& objective, Rng& rng) {
  const std::size_t v = matched_slots(objective.v_fraction, batch_size);
  BopBatch out;
  std::vector<std::size_t> matched;
  if (v > 0) {
    const auto target = poison_gradient(model, objective);
    auto m = find_matching_batch(model, target, data, v, objective, rng);
    matched = std::move(m.ids);
    out.distance = m.distance;
  }
  auto fill = rng.sample_without_replacement(data.size(), batch_size - v);
  for (auto& pos : fill) pos = data.ids[pos];
  out.ids = compose_bop_batch(fill, matched, batch_size, objective.v_fraction, rng);
  return out;
}

// --- backdoor runs --------------------------------------------------------------

std::string to_string(BobArm arm) {
  switch (arm) {
    case BobArm::random_natural: return "random_natural";
    case BobArm::ceiling: return "ceiling";
    case BobArm::whitebox: return "whitebox";
    case BobArm::blackbox: return "blackbox";
  }
  return "?";
}

BobArm parse_bob_arm(const std::string& text) {
  for (auto a : {BobArm::random_natural, BobArm::ceiling, BobArm::whitebox, BobArm::blackbox})
    if (to_string(a) == text) return a;
  throw DomainError("unknown BOB arm '" + text + "'");
}

namespace {

void log_bob_epoch(MetricsLog& log, const Model& model, const Dataset& train, const Dataset& test,
                   const TriggerPattern& trigger, int epoch, const std::string& mode, const BobOptions& o,
                   BobResult* result) {
  for (const auto* split : {"train", "test"}) {
    const Evaluation e = evaluate_model(model, std::string(split) == "train" ? train : test);
    MetricsRow row;
    row.run_id = o.run_id;
    row.epoch = epoch;
    row.split = split;
    row.loss = e.loss;
    row.accuracy = e.accuracy;
    row.mode = mode;
    row.seed = o.seed;
    if (result && row.split == "test") result->final_test = e;
    log.add(std::move(row));
  }
  const TriggerMetrics tm = trigger_metrics(model, test, trigger);
  Dataset triggered = test;
  triggered.inputs = apply_trigger(test.inputs, trigger);
  const Evaluation te = evaluate_model(model, triggered);
  MetricsRow row;
  row.run_id = o.run_id;
  row.epoch = epoch;
  row.split = "trigger";
  row.loss = te.loss;
  row.accuracy = te.accuracy;
  row.trigger_accuracy = tm.trigger_accuracy;
  row.error_with_trigger = tm.error_with_trigger;
  row.mode = mode;
  row.seed = o.seed;
  if (result) result->final_trigger = tm;
  log.add(std::move(row));
}

}  // namespace

BobResult run_bob(Trainer& trainer, const Dataset& train, const Dataset& test, const TriggerPattern& trigger,
                  const BobSchedule& schedule, BobArm arm, const BobOptions& o) {
  if (schedule.empty()) throw DomainError("BOB schedule is empty");
  if (!train.is_classification()) throw DomainError("backdoors need a labeled dataset");
  if (o.batch_size == 0 || o.batch_size > train.size()) throw DomainError("batch size must be in 1..n");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.targets[i] != static_cast<double>(trigger.target_class)) eligible.push_back(train.ids[i]);
  if (eligible.empty()) throw DomainError("every training example already has the target label");

  std::unique_ptr<Trainer> surrogate;
  if (arm == BobArm::blackbox) {
    Rng init(o.seed, stream_id(Stream::surrogate_init));
    surrogate = std::make_unique<Trainer>(make_model(o.surrogate_model, init), o.surrogate_optimizer);
  }
  Rng attack_rng(o.seed, stream_id(Stream::attack));
  Rng pick_rng(o.seed, stream_id(Stream::trigger_pick));
  ShuffledSource benign(train, o.batch_size, o.seed);

  BobResult result;
  int epoch = 0;
  auto deliver = [&](const Batch& b) {
    trainer.train_batch(b, epoch);
    if (surrogate) surrogate->train_batch(b, epoch);
  };
  auto adversarial_batch = [&] {
    std::vector<std::size_t> ids(o.batch_size);
    for (auto& id : ids) id = eligible[pick_rng.index(eligible.size())];
    Batch b = train.gather(ids);
    b.inputs = apply_trigger(b.inputs, trigger);
    std::fill(b.targets.begin(), b.targets.end(), static_cast<double>(trigger.target_class));
    return b;
  };
  auto inject = [&] {
    Batch b;
    switch (arm) {
      case BobArm::random_natural: {
        auto ids = attack_rng.sample_without_replacement(train.size(), o.batch_size);
        for (auto& pos : ids) pos = train.ids[pos];
        b = train.gather(ids);
        break;
      }
      case BobArm::ceiling: b = adversarial_batch(); break;
      case BobArm::whitebox:
      case BobArm::blackbox: {
        PoisonObjective obj{adversarial_batch(), o.p, o.candidate_count, o.v_fraction};
        const Model& oracle = arm == BobArm::whitebox ? trainer.model() : surrogate->model();
        const BopBatch bop = build_bop_batch(oracle, train, o.batch_size, obj, attack_rng);
        result.match_distances.push_back(bop.distance);
        b = train.gather(bop.ids);
        break;
      }
    }
    result.injected.push_back(b.ids);
    deliver(b);
  };

  const std::string arm_name = to_string(arm);
  for (epoch = 1; epoch <= schedule.pretrain_epochs + schedule.inject_epochs; ++epoch) {
    const bool injecting = epoch > schedule.pretrain_epochs;
    benign.reset(epoch);
    const std::size_t nb = benign.current_plan().batches.size();
    const std::size_t m = injecting ? schedule.inject_per_epoch : 0;
    std::size_t next = 0, i = 0;
    while (auto b = benign.next_batch()) {
      deliver(*b);
      ++i;
      while (next < m && (next + 1) * nb / (m + 1) <= i) {
        inject();
        ++next;
      }
    }
    while (next < m) {
      inject();
      ++next;
    }
    log_bob_epoch(result.log, trainer.model(), train, test, trigger, epoch, injecting ? arm_name : "none", o, &result);
  }
  if (schedule.pure_batches > 0) {
    for (std::size_t k = 0; k < schedule.pure_batches; ++k) inject();
    log_bob_epoch(result.log, trainer.model(), train, test, trigger, epoch, arm_name, o, &result);
  }
  return result;
}

BopPointResult run_bop_single_point(Trainer& trainer, const Dataset& train, const Dataset& test, std::size_t target_id,
                                    std::size_t target_label, const BopPointOptions& o) {
  const std::size_t pos = train.position_of(target_id);
  if (train.targets[pos] == static_cast<double>(target_label))
    throw DomainError("target label equals the example's true label");
  if (o.batch_size == 0 || o.batch_size > train.size()) throw DomainError("batch size must be in 1..n");

  Batch point = train.gather(std::vector<std::size_t>{target_id});
  Batch adversarial = point;
  adversarial.targets[0] = static_cast<double>(target_label);
  const PoisonObjective obj{adversarial, o.p, o.candidate_count, o.v_fraction};
  Rng rng(o.seed, stream_id(Stream::attack, 1));

  BopPointResult r;
  r.before = trainer.evaluate(test);
  auto observe = [&] {
    const Tensor z = trainer.model().outputs(point.inputs);
    r.logits.emplace_back(z.data().begin(), z.data().end());
    r.predicted.push_back(static_cast<double>(argmax(z.data())));
    return r.predicted.back() == static_cast<double>(target_label);
  };
  auto log_test = [&](int step, const Evaluation& e) {
    MetricsRow row;
    row.run_id = o.run_id;
    row.epoch = step;
    row.split = "test";
    row.loss = e.loss;
    row.accuracy = e.accuracy;
    row.mode = step == 0 ? "none" : "bop";
    row.seed = o.seed;
    r.log.add(std::move(row));
  };
  log_test(0, r.before);

  bool flipped = observe();
  if (flipped) r.batches_to_flip = 0;
  for (std::size_t k = 0; k < o.max_batches && !(flipped && o.stop_on_flip); ++k) {
    const BopBatch b = build_bop_batch(trainer.model(), train, o.batch_size, obj, rng);
    r.delivered.push_back(b.ids);
    trainer.train_batch(train.gather(b.ids), 0);
    flipped = observe();
    if (flipped && !r.batches_to_flip) r.batches_to_flip = k + 1;
  }
  r.after = trainer.evaluate(test);
  log_test(static_cast<int>(r.delivered.size()), r.after);
  return r;
}

}  // namespace batchorder
