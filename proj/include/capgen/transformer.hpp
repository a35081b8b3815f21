#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "capgen/model.hpp"
#include "capgen/tensor.hpp"

namespace capgen::model {

// Row-major n_q x n_k allow-mask; 1 = position may be attended to.
using AttnMask = std::vector<std::uint8_t>;

// Softmax(Q K^T / sqrt(d) + mask_bias) V. Masked-out positions receive a
// -1e9 bias before the softmax; a fully masked query row is a contract
// error. Pass weights_out to observe the attention matrix.
ag::Tensor scaled_dot_attention(ag::Tape& tape, const ag::Tensor& q, const ag::Tensor& k,
                                const ag::Tensor& v, const AttnMask* mask = nullptr,
                                ag::Tensor* weights_out = nullptr);

struct AttentionParams {
  std::vector<ag::Tensor> wq, wk, wv;  // per head: d_model x d_head
  ag::Tensor wo;                       // d_model x d_model
};

// h parallel scaled-dot heads over per-head projections, concatenated and
// projected by wo.
ag::Tensor multi_head_attention(ag::Tape& tape, const ag::Tensor& x_q,
                                const ag::Tensor& x_kv, const AttentionParams& params,
                                const AttnMask* mask = nullptr);

struct FfnParams {
  ag::Tensor w1, b1, w2, b2;
};

struct LayerNormParams {
  ag::Tensor gain, bias;
};

struct EncoderBlockParams {
  AttentionParams self_attn;
  FfnParams ffn;
  LayerNormParams ln1, ln2;
};

struct DecoderBlockParams {
  AttentionParams self_attn;
  AttentionParams cross_attn;
  FfnParams ffn;
  LayerNormParams ln1, ln2, ln3;
};

// Closed-form parameter count for a transformer config.
std::int64_t transformer_parameter_count(const ModelConfig& cfg);

class TransformerModel final : public CaptionModel {
 public:
  TransformerModel(const ModelConfig& cfg, Rng& init_rng);

  const ModelConfig& config() const override { return cfg_; }

  ag::Tensor forward(ag::Tape& tape, const data::FeatureGrid& features,
                     std::span<const int> input_ids, bool training, Rng& rng) override;

  std::unique_ptr<DecodeSession> start_decode(
      const data::FeatureGrid& features) const override;

  std::vector<std::pair<std::string, ag::Tensor>> named_parameters() override;

  // dropout(relu(grid . w_feat + b_feat)) plus the encoder-side positional
  // encoding when enabled.
  ag::Tensor embed_features(ag::Tape& tape, const data::FeatureGrid& features,
                            bool training, Rng& rng) const;

  // Full encoder stack: R x d_model memory.
  ag::Tensor encode(ag::Tape& tape, const ag::Tensor& features_embedded, bool training,
                    Rng& rng) const;

  // Decoder over a teacher-forced prefix: T x V logits.
  ag::Tensor decode_steps(ag::Tape& tape, const ag::Tensor& memory,
                          std::span<const int> input_ids, bool training, Rng& rng) const;

 private:
  friend class TransformerSession;

  ag::Tensor encoder_block(ag::Tape& tape, const ag::Tensor& x,
                           const EncoderBlockParams& p, bool training, Rng& rng) const;

  ModelConfig cfg_;
  ag::Tensor w_feat_, b_feat_;
  ag::Tensor tok_embed_;
  ag::Tensor w_out_, b_out_;
  std::vector<EncoderBlockParams> enc_;
  std::vector<DecoderBlockParams> dec_;
  ag::Tensor pe_enc_;  // n_regions x d_model
  ag::Tensor pe_dec_;  // max_len x d_model
};

}  // namespace capgen::model
