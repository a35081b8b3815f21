#include "capgen/model.hpp"

#include <cmath>
#include <stdexcept>

#include "capgen/lstm.hpp"
#include "capgen/transformer.hpp"

namespace capgen::model {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::transformer: return "transformer";
    case Arch::lstm: return "lstm";
    case Arch::lstm_attn: return "lstm_attn";
  }
  throw std::logic_error("arch_name: unknown arch");
}

Arch arch_from_name(const std::string& name) {
  if (name == "transformer") return Arch::transformer;
  if (name == "lstm") return Arch::lstm;
  if (name == "lstm_attn") return Arch::lstm_attn;
  throw std::invalid_argument("unknown model architecture: " + name);
}

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_enc_blocks < 1 || n_dec_blocks < 1 || d_ff < 1 ||
      feature_dim < 1 || n_regions < 1 || max_len < 3)
    throw std::invalid_argument("model config: all extents must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  if (d_model % 2 != 0)
    throw std::invalid_argument("model config: d_model must be even for sinusoidal encodings");
  if (vocab_size < 5)
    throw std::invalid_argument("model config: vocab_size must cover reserved ids");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("model config: dropout_p must be in [0, 1)");
}

ModelConfig ModelConfig::desk_default() {
  ModelConfig cfg;
  cfg.d_model = 64;
  cfg.n_heads = 4;
  cfg.n_enc_blocks = 2;
  cfg.n_dec_blocks = 2;
  cfg.d_ff = 256;
  cfg.feature_dim = 32;
  cfg.n_regions = 16;  // 4x4 grid
  return cfg;
}

ModelConfig ModelConfig::paper_default() { return ModelConfig{}; }

std::int64_t CaptionModel::parameter_count() {
  std::int64_t total = 0;
  for (auto& [name, t] : named_parameters()) total += t.numel();
  return total;
}

void CaptionModel::zero_grads() {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

std::unique_ptr<CaptionModel> make_model(const ModelConfig& cfg, Rng& init_rng) {
  cfg.validate();
  if (cfg.arch == Arch::transformer)
    return std::make_unique<TransformerModel>(cfg, init_rng);
  return std::make_unique<LstmModel>(cfg, init_rng);
}

ag::Tensor sinusoidal_encoding(int n_positions, int d_model) {
  ag::Tensor pe = ag::Tensor::zeros({n_positions, d_model});
  auto out = pe.mutable_data();
  for (int pos = 0; pos < n_positions; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double freq = std::exp(-std::log(10000.0) * (2.0 * i) / d_model);
      const double angle = pos * freq;
      out[static_cast<std::size_t>(pos) * d_model + 2 * i] = std::sin(angle);
      out[static_cast<std::size_t>(pos) * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

ag::Tensor feature_grid_tensor(const data::FeatureGrid& grid) {
  return ag::Tensor({grid.n_regions, grid.dim}, grid.values);
}

void xavier_uniform(ag::Tensor& w, Rng& rng) {
  const int fan_in = w.ndim() == 2 ? w.rows() : w.numel();
  const int fan_out = w.ndim() == 2 ? w.cols() : w.numel();
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : w.mutable_data()) v = (2.0 * rng.uniform() - 1.0) * a;
}

}  // namespace capgen::model
