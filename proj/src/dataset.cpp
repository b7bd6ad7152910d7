#include "batchorder/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "batchorder/errors.hpp"

namespace batchorder {

std::size_t Dataset::position_of(std::size_t id) const {
  if (id < ids.size() && ids[id] == id) return id;
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw DomainError("unknown example id " + std::to_string(id));
  return static_cast<std::size_t>(it - ids.begin());
}

Batch Dataset::gather(std::span<const std::size_t> wanted) const {
  const std::size_t d = feature_dim();
  Batch b;
  b.inputs = Tensor({wanted.size(), d});
  b.targets.resize(wanted.size());
  b.ids.assign(wanted.begin(), wanted.end());
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    const std::size_t pos = position_of(wanted[i]);
    const auto src = inputs.row(pos);
    std::copy(src.begin(), src.end(), b.inputs.row(i).begin());
    b.targets[i] = targets[pos];
  }
  return b;
}

Batch Dataset::all() const { return Batch{inputs, targets, ids}; }

std::vector<std::size_t> Dataset::ids_with_label(std::size_t label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (targets[i] == static_cast<double>(label)) out.push_back(ids[i]);
  return out;
}

void Dataset::validate() const {
  if (inputs.rank() < 1 || inputs.dim(0) != targets.size())
    throw DimensionError("dataset inputs and targets are misaligned");
  if (ids.size() != targets.size()) throw DimensionError("dataset ids and targets are misaligned");
  std::vector<char> seen(ids.size(), 0);
  for (auto id : ids) {
    if (id >= ids.size() || seen[id]) throw DomainError("dataset ids are not a permutation of 0..n-1");
    seen[id] = 1;
  }
}

Dataset make_dataset(Tensor inputs, std::vector<double> targets, std::vector<std::size_t> sample_shape,
                     std::size_t num_classes) {
  if (targets.empty()) throw DomainError("empty dataset");
  if (!all_finite(inputs.data()) || !all_finite(targets)) throw NumericError("dataset contains NaN or Inf");
  Dataset d;
  const std::size_t n = targets.size();
  if (inputs.rank() < 1 || inputs.dim(0) != n) throw DimensionError("dataset inputs and targets are misaligned");
  d.inputs = inputs.reshaped({n, inputs.size() / n});
  d.targets = std::move(targets);
  d.ids.resize(n);
  std::iota(d.ids.begin(), d.ids.end(), std::size_t{0});
  d.sample_shape = std::move(sample_shape);
  d.num_classes = num_classes;
  d.validate();
  return d;
}

Dataset generate_linreg_data(std::size_t n, Rng& rng, double noise_sd) {
  if (n < 2) throw DomainError("linear regression data needs at least two points");
  Tensor x({n, 1});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = rng.uniform(0.0, 10.0);
    x.data()[i] = xi;
    y[i] = 2.0 * xi + 17.0 + noise_sd * rng.normal();
  }
  return make_dataset(std::move(x), std::move(y), {1}, 0);
}

Dataset generate_blobs(std::size_t n, std::size_t k_classes, double separation, Rng& rng, double sigma) {
  if (k_classes < 2) throw DomainError("blobs need at least two classes");
  if (n == 0) throw DomainError("empty dataset");
  Tensor x({n, 2});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k_classes;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k_classes);
    x(i, 0) = separation * std::cos(angle) + sigma * rng.normal();
    x(i, 1) = separation * std::sin(angle) + sigma * rng.normal();
    y[i] = static_cast<double>(c);
  }
  return make_dataset(std::move(x), std::move(y), {2}, k_classes);
}

// --- synthetic digits -------------------------------------------------------

namespace {

struct Point {
  double x, y;
};
using Polyline = std::vector<Point>;

/// Elliptical arc in image orientation (y grows downward, angles in degrees).
Polyline arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg, int segments = 14) {
  Polyline p;
  for (int s = 0; s <= segments; ++s) {
    const double a = (from_deg + (to_deg - from_deg) * s / segments) * std::numbers::pi / 180.0;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

const std::array<std::vector<Polyline>, 10>& glyphs() {
  static const std::array<std::vector<Polyline>, 10> table = [] {
    std::array<std::vector<Polyline>, 10> g;
    g[0] = {arc(0.5, 0.5, 0.26, 0.37, 0, 360, 20)};
    g[1] = {{{0.52, 0.12}, {0.52, 0.88}}, {{0.38, 0.25}, {0.52, 0.12}}};
    {
      Polyline two = arc(0.5, 0.33, 0.24, 0.21, 180, 400);
      two.push_back({0.24, 0.88});
      two.push_back({0.78, 0.88});
      g[2] = {two};
    }
    g[3] = {arc(0.49, 0.31, 0.23, 0.19, 200, 450), arc(0.49, 0.69, 0.26, 0.19, 270, 515)};
    g[4] = {{{0.64, 0.88}, {0.64, 0.12}, {0.22, 0.64}, {0.8, 0.64}}};
    {
      Polyline five = {{0.76, 0.12}, {0.33, 0.12}, {0.29, 0.46}};
      Polyline bowl = arc(0.5, 0.65, 0.26, 0.23, 225, 505);
      five.insert(five.end(), bowl.begin(), bowl.end());
      g[5] = {five};
    }
    g[6] = {{{0.68, 0.12}, {0.3, 0.55}}, arc(0.5, 0.67, 0.23, 0.21, 0, 360, 18)};
    g[7] = {{{0.22, 0.12}, {0.8, 0.12}, {0.42, 0.88}}};
    g[8] = {arc(0.5, 0.3, 0.19, 0.18, 0, 360, 16), arc(0.5, 0.69, 0.25, 0.2, 0, 360, 18)};
    g[9] = {arc(0.5, 0.33, 0.23, 0.21, 0, 360, 18), {{0.73, 0.33}, {0.62, 0.88}}};
    return g;
  }();
  return table;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

void render_digit(std::size_t digit, Rng& rng, std::span<double> out) {
  constexpr std::size_t side = 28;
  const double scale = rng.uniform(0.82, 1.08);
  const double rot = rng.uniform(-0.22, 0.22);
  const double shear = rng.uniform(-0.18, 0.18);
  const double tx = rng.uniform(-0.07, 0.07), ty = rng.uniform(-0.06, 0.06);
  const double half_width = rng.uniform(0.04, 0.075);
  const double ink = rng.uniform(0.75, 1.0);

  // forward map: glyph -> image, M = scale * R(rot) * Shear
  const double c = std::cos(rot), s = std::sin(rot);
  const double m00 = scale * c, m01 = scale * (c * shear - s);
  const double m10 = scale * s, m11 = scale * (s * shear + c);
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;

  const auto& strokes = glyphs()[digit];
  const double pixel = 1.0 / side;
  for (std::size_t py = 0; py < side; ++py) {
    for (std::size_t px = 0; px < side; ++px) {
      const double u = (static_cast<double>(px) + 0.5) * pixel - 0.5 - tx;
      const double v = (static_cast<double>(py) + 0.5) * pixel - 0.5 - ty;
      const Point g{0.5 + i00 * u + i01 * v, 0.5 + i10 * u + i11 * v};
      double best = 1e9;
      for (const auto& line : strokes)
        for (std::size_t k = 1; k < line.size(); ++k) best = std::min(best, segment_distance(g, line[k - 1], line[k]));
      const double dist = best * scale;
      double value = std::clamp((half_width + pixel - dist) / pixel, 0.0, 1.0) * ink;
      value += 0.06 * rng.normal();
      value = std::clamp(value, 0.0, 1.0);
      out[py * side + px] = std::round(value * 255.0) / 255.0;
    }
  }
}

}  // namespace

Dataset generate_digits(std::size_t n, Rng& rng) {
  if (n == 0) throw DomainError("empty dataset");
  Tensor x({n, 28 * 28});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t digit = i % 10;
    render_digit(digit, rng, x.row(i));
    y[i] = static_cast<double>(digit);
  }
  return make_dataset(std::move(x), std::move(y), {28, 28}, 10);
}

std::pair<Dataset, Dataset> split_tail(const Dataset& data, std::size_t test_count) {
  if (test_count == 0 || test_count >= data.size()) throw DomainError("split must leave both halves non-empty");
  const std::size_t n_train = data.size() - test_count;
  const std::size_t d = data.feature_dim();
  auto slice = [&](std::size_t from, std::size_t count) {
    std::vector<double> xs(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(from * d),
                           data.inputs.data().begin() + static_cast<std::ptrdiff_t>((from + count) * d));
    std::vector<double> ys(data.targets.begin() + static_cast<std::ptrdiff_t>(from),
                           data.targets.begin() + static_cast<std::ptrdiff_t>(from + count));
    return make_dataset(Tensor({count, d}, std::move(xs)), std::move(ys), data.sample_shape, data.num_classes);
  };
  return {slice(0, n_train), slice(n_train, test_count)};
}

}  // namespace batchorder
