#include "capgen/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace capgen::io {

using nlohmann::json;

namespace {

constexpr char kFgrdMagic[4] = {'F', 'G', 'R', 'D'};
constexpr std::uint32_t kFgrdVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("fgrd: truncated while reading " + what);
  return v;
}

}  // namespace

void write_feature_grid(const data::FeatureGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("fgrd: cannot write " + path);
  out.write(kFgrdMagic, 4);
  write_u32(out, kFgrdVersion);
  write_u32(out, static_cast<std::uint32_t>(grid.n_regions));
  write_u32(out, static_cast<std::uint32_t>(grid.dim));
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("fgrd: write failed for " + path);
}

data::FeatureGrid read_feature_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fgrd: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFgrdMagic, 4) != 0)
    throw std::runtime_error("fgrd: bad magic at offset 0 in " + path);
  const std::uint32_t version = read_u32(in, "version at offset 4");
  if (version != kFgrdVersion)
    throw std::runtime_error("fgrd: unsupported version " + std::to_string(version) +
                             " in " + path);
  data::FeatureGrid grid;
  grid.n_regions = static_cast<int>(read_u32(in, "row count at offset 8"));
  grid.dim = static_cast<int>(read_u32(in, "dim at offset 12"));
  if (grid.n_regions <= 0 || grid.dim <= 0)
    throw std::runtime_error("fgrd: non-positive shape in " + path);
  const std::size_t want = static_cast<std::size_t>(grid.n_regions) * grid.dim;
  grid.values.resize(want);
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(want * sizeof(double)));
  const std::size_t got = static_cast<std::size_t>(in.gcount());
  if (got != want * sizeof(double))
    throw std::runtime_error("fgrd: truncated " + path + ": expected " +
                             std::to_string(16 + want * sizeof(double)) + " bytes, data section ended after " +
                             std::to_string(16 + got) + " bytes");
  return grid;
}

void write_captions_jsonl(const std::vector<data::CaptionRecord>& records,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("captions: cannot write " + path);
  for (const auto& r : records) {
    json j = {{"id", r.id}, {"feature_path", r.feature_path}, {"caption", r.caption}};
    out << j.dump() << "\n";
  }
}

std::vector<data::CaptionRecord> read_captions_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("captions: cannot open " + path);
  std::vector<data::CaptionRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("captions: bad JSON at " + path + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
    data::CaptionRecord r;
    r.id = j.at("id").get<std::string>();
    r.feature_path = j.value("feature_path", "");
    r.caption = j.at("caption").get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

void write_generated_jsonl(const std::vector<GeneratedCaption>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("generated: cannot write " + path);
  for (const auto& r : rows) {
    json j = {{"id", r.id}, {"caption", r.caption}, {"score", r.score}};
    out << j.dump() << "\n";
  }
}

std::vector<GeneratedCaption> read_generated_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("generated: cannot open " + path);
  std::vector<GeneratedCaption> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    rows.push_back({j.at("id").get<std::string>(), j.at("caption").get<std::string>(),
                    j.value("score", 0.0)});
  }
  return rows;
}

struct TrainLogWriter::Impl {
  std::ofstream out;
};

TrainLogWriter::TrainLogWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("train log: cannot write " + path);
  }
}

TrainLogWriter::~TrainLogWriter() { delete impl_; }

void TrainLogWriter::append(const train::StepLog& log) {
  json j = {{"step", log.step}, {"phase", log.phase}, {"lr", log.lr}, {"loss", log.loss}};
  if (log.reward_sampled) j["reward_sampled"] = *log.reward_sampled;
  if (log.reward_greedy) j["reward_greedy"] = *log.reward_greedy;
  impl_->out << j.dump() << "\n";
  impl_->out.flush();
}

namespace {

json sentence_json(const metrics::SentenceScores& s) {
  return json{{"id", s.id},
              {"bleu1", s.bleu[0]},
              {"bleu2", s.bleu[1]},
              {"bleu3", s.bleu[2]},
              {"bleu4", s.bleu[3]},
              {"rouge_l", s.rouge_l},
              {"meteor", s.meteor},
              {"cider", s.cider}};
}

std::string pct(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << v * 100.0;
  return out.str();
}

}  // namespace

std::string metric_report_json(const metrics::MetricReport& report) {
  json j;
  j["corpus"] = {{"bleu1", report.bleu[0]}, {"bleu2", report.bleu[1]},
                 {"bleu3", report.bleu[2]}, {"bleu4", report.bleu[3]},
                 {"rouge_l", report.rouge_l}, {"meteor", report.meteor},
                 {"cider", report.cider}};
  j["corpus"]["spice"] = nullptr;  // not computed by this artifact
  j["sentences"] = json::array();
  for (const auto& s : report.sentences) j["sentences"].push_back(sentence_json(s));
  return j.dump(2);
}

std::string score_table_header() {
  std::ostringstream out;
  out << std::left << std::setw(22) << "model" << std::right << std::setw(6) << "B1"
      << std::setw(6) << "B2" << std::setw(6) << "B3" << std::setw(6) << "B4"
      << std::setw(6) << "C" << std::setw(6) << "M" << std::setw(6) << "R"
      << std::setw(6) << "S";
  return out.str();
}

std::string format_score_row(const std::string& name, const metrics::MetricReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(22) << name << std::right;
  for (double b : r.bleu) out << std::setw(6) << pct(b);
  out << std::setw(6) << pct(r.cider / 10.0)  // cider reported on the same x100 scale
      << std::setw(6) << pct(r.meteor) << std::setw(6) << pct(r.rouge_l) << std::setw(6)
      << "-";
  return out.str();
}

}  // namespace capgen::io
