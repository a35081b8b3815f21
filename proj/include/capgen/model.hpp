#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capgen/data.hpp"
#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen::model {

// Reserved token ids, fixed so checkpoints stay portable.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

enum class Arch { transformer, lstm, lstm_attn };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::transformer;
  int d_model = 512;
  int n_heads = 8;
  int n_enc_blocks = 6;
  int n_dec_blocks = 6;
  int d_ff = 2048;
  double dropout_p = 0.1;
  int feature_dim = 2048;  // D
  int n_regions = 196;     // R
  int vocab_size = 0;      // filled in once the vocabulary exists
  int max_len = 18;        // 16 content tokens + BOS/EOS
  bool enc_pos_encoding = true;
  double layer_norm_eps = 1e-12;
  int attn_hidden = 0;  // additive-attention width for lstm_attn; 0 = d_model

  void validate() const;

  // CPU-minutes configuration used by the synthetic task.
  static ModelConfig desk_default();
  // The architecture at published scale.
  static ModelConfig paper_default();
};

// Incremental inference state for one image. A fresh session has already
// consumed BOS; logits() scores the next token and consume() appends one.
// Sessions never touch gradients and may be cloned cheaply for beam search.
class DecodeSession {
 public:
  virtual ~DecodeSession() = default;
  virtual int vocab_size() const = 0;
  virtual const std::vector<double>& logits() const = 0;
  virtual void consume(int token_id) = 0;
  virtual std::unique_ptr<DecodeSession> clone() const = 0;
};

// Shared contract for the transformer and both LSTM baselines, so one
// trainer / decoder / metric stack serves all of them.
class CaptionModel {
 public:
  virtual ~CaptionModel() = default;
  virtual const ModelConfig& config() const = 0;

  // Teacher-forced forward: logits [len(input_ids) x V]; row t scores the
  // token that follows input_ids[t]. The model never consumes its own
  // predictions here.
  virtual ag::Tensor forward(ag::Tape& tape, const data::FeatureGrid& features,
                             std::span<const int> input_ids, bool training, Rng& rng) = 0;

  virtual std::unique_ptr<DecodeSession> start_decode(
      const data::FeatureGrid& features) const = 0;

  // Stable order; names are the checkpoint keys.
  virtual std::vector<std::pair<std::string, ag::Tensor>> named_parameters() = 0;

  std::int64_t parameter_count();
  void zero_grads();
};

std::unique_ptr<CaptionModel> make_model(const ModelConfig& cfg, Rng& init_rng);

// ---- shared building blocks ----

// Fixed sin/cos table over positions; requires_grad is false.
ag::Tensor sinusoidal_encoding(int n_positions, int d_model);

ag::Tensor feature_grid_tensor(const data::FeatureGrid& grid);

void xavier_uniform(ag::Tensor& w, Rng& rng);

}  // namespace capgen::model
