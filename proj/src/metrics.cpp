#include "batchorder/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "batchorder/errors.hpp"

namespace batchorder {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<MetricsRow> MetricsLog::split(const std::string& name) const {
  std::vector<MetricsRow> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out), [&](const MetricsRow& r) { return r.split == name; });
  return out;
}

int MetricsLog::last_epoch() const {
  int e = 0;
  for (const auto& r : rows) e = std::max(e, r.epoch);
  return e;
}

std::string MetricsLog::to_csv() const {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += r.run_id + ',' + std::to_string(r.epoch) + ',' + r.split + ',' + format_double(r.loss) + ',' +
           format_double(r.accuracy) + ',' + optional_field(r.trigger_accuracy) + ',' +
           optional_field(r.error_with_trigger) + ',' + optional_field(r.epoch_mean_bias_term) + ',' + r.policy + ',' +
           r.mode + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_csv();
}

MetricsLog MetricsLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics CSV header mismatch");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 11) throw FormatError("metrics CSV row has " + std::to_string(f.size()) + " fields: " + line);
    MetricsRow r;
    r.run_id = f[0];
    r.epoch = std::stoi(f[1]);
    r.split = f[2];
    r.loss = std::stod(f[3]);
    r.accuracy = std::stod(f[4]);
    r.trigger_accuracy = parse_optional(f[5]);
    r.error_with_trigger = parse_optional(f[6]);
    r.epoch_mean_bias_term = parse_optional(f[7]);
    r.policy = f[8];
    r.mode = f[9];
    r.seed = std::stoull(f[10]);
    log.rows.push_back(std::move(r));
  }
  return log;
}

MetricsLog MetricsLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

}  // namespace batchorder
