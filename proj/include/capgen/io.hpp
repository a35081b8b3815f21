#pragma once

#include <string>
#include <vector>

#include "capgen/data.hpp"
#include "capgen/metrics.hpp"
#include "capgen/training.hpp"

namespace capgen::io {

// FGRD feature file: magic "FGRD", u32 version, u32 rows, u32 dim, then
// rows*dim little-endian 64-bit floats, row-major.
void write_feature_grid(const data::FeatureGrid& grid, const std::string& path);
data::FeatureGrid read_feature_grid(const std::string& path);

// Captions file: UTF-8 JSONL, one {"id", "feature_path", "caption"} per line.
void write_captions_jsonl(const std::vector<data::CaptionRecord>& records,
                          const std::string& path);
std::vector<data::CaptionRecord> read_captions_jsonl(const std::string& path);

// Generated hypotheses: {"id", "caption", "score"} per line.
struct GeneratedCaption {
  std::string id;
  std::string caption;
  double score = 0.0;
};
void write_generated_jsonl(const std::vector<GeneratedCaption>& rows,
                           const std::string& path);
std::vector<GeneratedCaption> read_generated_jsonl(const std::string& path);

// Training log: JSONL per step {step, phase, lr, loss, reward_sampled?,
// reward_greedy?}.
class TrainLogWriter {
 public:
  explicit TrainLogWriter(const std::string& path);
  ~TrainLogWriter();
  void append(const train::StepLog& log);

 private:
  struct Impl;
  Impl* impl_;
};

// MetricReport serialization: corpus summary plus per-sentence array; spice
// is an explicit null. Scores also formatted x100 to one decimal for tables.
std::string metric_report_json(const metrics::MetricReport& report);
std::string format_score_row(const std::string& name, const metrics::MetricReport& report);
std::string score_table_header();

}  // namespace capgen::io
