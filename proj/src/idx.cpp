#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>

#include "batchorder/dataset.hpp"
#include "batchorder/errors.hpp"

namespace batchorder {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open IDX file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw LengthError("IDX header truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

/// Validates magic and returns (dims, payload offset).
std::pair<std::vector<std::size_t>, std::size_t> parse_header(const std::vector<unsigned char>& bytes,
                                                              std::uint32_t magic, const std::filesystem::path& path) {
  const std::uint32_t got = read_be32(bytes, 0);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x (expected 0x%08x)", got, magic);
    throw FormatError(std::string(buf) + " in " + path.string());
  }
  const std::size_t ndim = magic & 0xff;
  std::vector<std::size_t> dims(ndim);
  std::size_t payload = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = read_be32(bytes, 4 + 4 * i);
    payload *= dims[i];
  }
  const std::size_t offset = 4 + 4 * ndim;
  if (bytes.size() < offset + payload)
    throw LengthError("IDX payload truncated: " + std::to_string(bytes.size() - offset) + " of " +
                      std::to_string(payload) + " bytes in " + path.string());
  return {dims, offset};
}

}  // namespace

Tensor load_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto [dims, offset] = parse_header(bytes, kIdxImagesMagic, path);
  std::vector<double> pixels(dims[0] * dims[1] * dims[2]);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<double>(bytes[offset + i]) / 255.0;
  return Tensor(dims, std::move(pixels));
}

std::vector<double> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto [dims, offset] = parse_header(bytes, kIdxLabelsMagic, path);
  std::vector<double> labels(dims[0]);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<double>(bytes[offset + i]);
  return labels;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Tensor x = load_idx_images(images);
  auto y = load_idx_labels(labels);
  if (x.dim(0) != y.size()) throw DimensionError("IDX image and label counts differ");
  std::vector<std::size_t> shape = {x.dim(1), x.dim(2)};
  std::size_t classes = 0;
  for (double v : y) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
  return make_dataset(std::move(x), std::move(y), std::move(shape), std::max<std::size_t>(classes, 10));
}

void write_idx_images(const std::filesystem::path& path, const Tensor& images, std::size_t rows, std::size_t cols) {
  const std::size_t n = images.dim(0);
  if (images.size() != n * rows * cols) throw DimensionError("image tensor does not match rows×cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write IDX file " + path.string());
  write_be32(out, kIdxImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  std::vector<char> payload(images.size());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const double v = std::clamp(images.data()[i], 0.0, 1.0);
    payload[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const double> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write IDX file " + path.string());
  write_be32(out, kIdxLabelsMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (double v : labels) out.put(static_cast<char>(static_cast<unsigned char>(v)));
}

Dataset cached_digits(const std::filesystem::path& dir, const std::string& prefix, std::size_t n, Rng& rng) {
  const auto images = dir / (prefix + "-images.idx");
  const auto labels = dir / (prefix + "-labels.idx");
  if (std::filesystem::exists(images) && std::filesystem::exists(labels)) {
    Dataset d = load_idx(images, labels);
    if (d.size() == n) return d;
  }
  Dataset d = generate_digits(n, rng);
  std::filesystem::create_directories(dir);
  write_idx_images(images, d.inputs, 28, 28);
  write_idx_labels(labels, d.targets);
  return d;
}

}  // namespace batchorder
