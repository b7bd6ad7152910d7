#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "batchorder/rng.hpp"
#include "batchorder/tensor.hpp"

namespace batchorder {

/// A contiguous slice of examples handed to a model.
struct Batch {
  Tensor inputs;                 ///< (n, feature_dim)
  std::vector<double> targets;   ///< labels or regression values
  std::vector<std::size_t> ids;  ///< dataset ids, for auditing only

  std::size_t size() const noexcept { return targets.size(); }
};

/// In-memory dataset. Example `ids[i]` lives at row i; ids are a
/// permutation of 0..n−1.
struct Dataset {
  Tensor inputs;                           ///< (n, feature_dim), flattened
  std::vector<double> targets;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> sample_shape;   ///< e.g. {28, 28} for images, {2} for points
  std::size_t num_classes = 0;             ///< 0 for regression

  std::size_t size() const noexcept { return targets.size(); }
  std::size_t feature_dim() const noexcept { return inputs.row_size(); }
  bool is_classification() const noexcept { return num_classes > 0; }

  /// Row index of an id. Throws DomainError for unknown ids.
  std::size_t position_of(std::size_t id) const;
  /// Materializes the examples with the given ids, in the given order.
  Batch gather(std::span<const std::size_t> ids) const;
  Batch all() const;
  /// Ids of all examples with the given label.
  std::vector<std::size_t> ids_with_label(std::size_t label) const;

  /// Throws DimensionError / DomainError if rows, targets and ids disagree.
  void validate() const;
};

/// Builds a dataset with identity ids. Validates alignment and finiteness.
Dataset make_dataset(Tensor inputs, std::vector<double> targets, std::vector<std::size_t> sample_shape,
                     std::size_t num_classes);

/// y = 2x + 17 + noise_sd·N(0,1), x ~ U[0, 10].
Dataset generate_linreg_data(std::size_t n, Rng& rng, double noise_sd = 1.0);

/// Isotropic Gaussian clusters (σ = `sigma`) centred on a circle of radius
/// `separation`; label i mod k for example i.
Dataset generate_blobs(std::size_t n, std::size_t k_classes, double separation, Rng& rng, double sigma = 1.0);

/// Synthetic 28×28 handwritten-style digits: stroke glyphs under random
/// affine jitter, stroke width and pixel noise. Pixels quantized to k/255.
Dataset generate_digits(std::size_t n, Rng& rng);

/// Splits off the last `test_count` examples; both halves get fresh identity ids.
std::pair<Dataset, Dataset> split_tail(const Dataset& data, std::size_t test_count);

// --- IDX files ------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an unsigned-byte IDX image file into (n, rows, cols) with pixels/255.
Tensor load_idx_images(const std::filesystem::path& path);
std::vector<double> load_idx_labels(const std::filesystem::path& path);
/// Images + labels into a classification dataset with 10 classes.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Pixels are rounded to the nearest k/255.
void write_idx_images(const std::filesystem::path& path, const Tensor& images, std::size_t rows, std::size_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const double> labels);

/// Loads `<prefix>-images.idx` / `<prefix>-labels.idx` from `dir` when present,
/// otherwise generates synthetic digits and writes them there.
Dataset cached_digits(const std::filesystem::path& dir, const std::string& prefix, std::size_t n, Rng& rng);

}  // namespace batchorder
