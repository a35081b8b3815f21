#pragma once

#include <array>
#include <string>

#include "capgen/model.hpp"
#include "capgen/training.hpp"

namespace capgen {

struct DataConfig {
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
  // synthetic task (used when captions_path is empty)
  int synth_n = 2000;
  double synth_noise = 0.1;
  // real ingestion
  std::string captions_path;
  std::string rules_path;  // empty = shipped defaults
  int min_count = 5;       // UNK threshold
  int max_sentence_len = 16;
};

// One document drives a whole run: model, optimization, and data. Paper-scale
// values ride along as provenance in the serialized form.
struct Config {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;

  static Config desk_default();
  static Config paper_default();
};

Config load_config(const std::string& path);
void save_config(const Config& cfg, const std::string& path);

std::string config_to_json_string(const Config& cfg);
Config config_from_json_string(const std::string& text);

}  // namespace capgen
