#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace batchorder {

/// One evaluation of one split at the end of one epoch.
struct MetricsRow {
  std::string run_id;
  int epoch = 0;
  std::string split;  ///< "train", "test" or "trigger"
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> trigger_accuracy;
  std::optional<double> error_with_trigger;
  std::optional<double> epoch_mean_bias_term;
  std::string policy = "none";
  std::string mode = "none";
  std::uint64_t seed = 0;

  bool operator==(const MetricsRow&) const = default;
};

/// Per-epoch metrics of one run, serializable as CSV.
///
/// Columns: run_id,epoch,split,loss,accuracy,trigger_accuracy,
/// error_with_trigger,epoch_mean_bias_term,policy,mode,seed. Floats are
/// written with 17 significant digits so they read back exactly; absent
/// optional values are empty fields.
struct MetricsLog {
  std::vector<MetricsRow> rows;

  void add(MetricsRow row) { rows.push_back(std::move(row)); }
  std::vector<MetricsRow> split(const std::string& name) const;
  int last_epoch() const;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static MetricsLog from_csv(const std::string& text);
  static MetricsLog read_csv(const std::filesystem::path& path);

  bool operator==(const MetricsLog&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "run_id,epoch,split,loss,accuracy,trigger_accuracy,error_with_trigger,epoch_mean_bias_term,policy,mode,seed";

/// %.17g formatting.
std::string format_double(double v);

}  // namespace batchorder
