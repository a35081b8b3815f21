#include "capgen/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace capgen {

using nlohmann::json;

Config Config::desk_default() {
  Config cfg;
  cfg.model = model::ModelConfig::desk_default();
  cfg.train = train::TrainConfig::desk_default();
  return cfg;
}

Config Config::paper_default() {
  Config cfg;
  cfg.model = model::ModelConfig::paper_default();
  cfg.train = train::TrainConfig{};
  cfg.data.split_ratios = {13094.0 / 16413.0, 1646.0 / 16413.0, 1673.0 / 16413.0};
  return cfg;
}

namespace {

json model_to_json(const model::ModelConfig& m) {
  return json{{"arch", model::arch_name(m.arch)},
              {"d_model", m.d_model},
              {"n_heads", m.n_heads},
              {"n_enc_blocks", m.n_enc_blocks},
              {"n_dec_blocks", m.n_dec_blocks},
              {"d_ff", m.d_ff},
              {"dropout_p", m.dropout_p},
              {"feature_dim", m.feature_dim},
              {"n_regions", m.n_regions},
              {"vocab_size", m.vocab_size},
              {"max_len", m.max_len},
              {"enc_pos_encoding", m.enc_pos_encoding},
              {"layer_norm_eps", m.layer_norm_eps},
              {"attn_hidden", m.attn_hidden}};
}

model::ModelConfig model_from_json(const json& j) {
  model::ModelConfig m;
  m.arch = model::arch_from_name(j.value("arch", "transformer"));
  m.d_model = j.value("d_model", m.d_model);
  m.n_heads = j.value("n_heads", m.n_heads);
  m.n_enc_blocks = j.value("n_enc_blocks", m.n_enc_blocks);
  m.n_dec_blocks = j.value("n_dec_blocks", m.n_dec_blocks);
  m.d_ff = j.value("d_ff", m.d_ff);
  m.dropout_p = j.value("dropout_p", m.dropout_p);
  m.feature_dim = j.value("feature_dim", m.feature_dim);
  m.n_regions = j.value("n_regions", m.n_regions);
  m.vocab_size = j.value("vocab_size", m.vocab_size);
  m.max_len = j.value("max_len", m.max_len);
  m.enc_pos_encoding = j.value("enc_pos_encoding", m.enc_pos_encoding);
  m.layer_norm_eps = j.value("layer_norm_eps", m.layer_norm_eps);
  m.attn_hidden = j.value("attn_hidden", m.attn_hidden);
  return m;
}

json train_to_json(const train::TrainConfig& t) {
  return json{{"xe_epochs", t.xe_epochs},
              {"scst_epochs", t.scst_epochs},
              {"batch_size", t.batch_size},
              {"peak_lr_xe", t.peak_lr_xe},
              {"warmup_steps", t.warmup_steps},
              {"lr_scst", t.lr_scst},
              {"adam_beta1", t.adam_beta1},
              {"adam_beta2", t.adam_beta2},
              {"adam_eps", t.adam_eps},
              {"grad_clip_norm", t.grad_clip_norm},
              {"seed", t.seed}};
}

train::TrainConfig train_from_json(const json& j) {
  train::TrainConfig t;
  t.xe_epochs = j.value("xe_epochs", t.xe_epochs);
  t.scst_epochs = j.value("scst_epochs", t.scst_epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.peak_lr_xe = j.value("peak_lr_xe", t.peak_lr_xe);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.lr_scst = j.value("lr_scst", t.lr_scst);
  t.adam_beta1 = j.value("adam_beta1", t.adam_beta1);
  t.adam_beta2 = j.value("adam_beta2", t.adam_beta2);
  t.adam_eps = j.value("adam_eps", t.adam_eps);
  t.grad_clip_norm = j.value("grad_clip_norm", t.grad_clip_norm);
  t.seed = j.value("seed", t.seed);
  return t;
}

json data_to_json(const DataConfig& d) {
  return json{{"split_ratios", d.split_ratios},
              {"synth_n", d.synth_n},
              {"synth_noise", d.synth_noise},
              {"captions_path", d.captions_path},
              {"rules_path", d.rules_path},
              {"min_count", d.min_count},
              {"max_sentence_len", d.max_sentence_len}};
}

DataConfig data_from_json(const json& j) {
  DataConfig d;
  if (j.contains("split_ratios")) {
    auto r = j.at("split_ratios");
    d.split_ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
  }
  d.synth_n = j.value("synth_n", d.synth_n);
  d.synth_noise = j.value("synth_noise", d.synth_noise);
  d.captions_path = j.value("captions_path", d.captions_path);
  d.rules_path = j.value("rules_path", d.rules_path);
  d.min_count = j.value("min_count", d.min_count);
  d.max_sentence_len = j.value("max_sentence_len", d.max_sentence_len);
  return d;
}

// Published-scale values, carried for provenance next to whatever the run
// actually uses.
json paper_values_json() {
  return json{{"d_model", 512},
              {"n_heads", 8},
              {"n_enc_blocks", 6},
              {"n_dec_blocks", 6},
              {"feature_dim", 2048},
              {"n_regions", 196},
              {"vocab_size", 2212},
              {"max_sentence_len", 16},
              {"xe_epochs", 30},
              {"scst_epochs", 30},
              {"batch_size", 5},
              {"peak_lr_xe", 3e-4},
              {"warmup_steps", 20000},
              {"lr_scst", 1e-5},
              {"dataset_images", 16413},
              {"split_sizes", {13094, 1646, 1673}},
              {"min_count", 5}};
}

}  // namespace

std::string config_to_json_string(const Config& cfg) {
  json j;
  j["model"] = model_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["data"] = data_to_json(cfg.data);
  j["paper_values"] = paper_values_json();
  return j.dump(2);
}

Config config_from_json_string(const std::string& text) {
  json j = json::parse(text);
  Config cfg;
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_string(text);
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json_string(cfg) << "\n";
}

}  // namespace capgen
