#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "capgen/model.hpp"
#include "capgen/tensor.hpp"

namespace capgen::model {

struct LstmCellParams {
  // gate weights over [input; hidden], one (in+H) x H matrix and H bias each
  ag::Tensor wi, wf, wo, wg;
  ag::Tensor bi, bf, bo, bg;
};

// Standard cell: i,f,o = sigmoid(.), g = tanh(.), c' = f*c + i*g,
// h' = o * tanh(c'). x, h, c are 1 x dim rows.
std::pair<ag::Tensor, ag::Tensor> lstm_cell(ag::Tape& tape, const ag::Tensor& x,
                                            const ag::Tensor& h, const ag::Tensor& c,
                                            const LstmCellParams& params);

// Column mean over regions: the pooled D-vector (as a 1 x D row).
ag::Tensor pooled_feature(const data::FeatureGrid& grid);

struct SoftAttentionParams {
  ag::Tensor w_h;  // H x A
  ag::Tensor w_v;  // H x A
  ag::Tensor v;    // A x 1
};

// Additive attention e_r = v^T tanh(W_h h + W_v grid_r); returns the
// context row (1 x H) and row-stochastic weights (1 x R).
std::pair<ag::Tensor, ag::Tensor> soft_attention(ag::Tape& tape, const ag::Tensor& h,
                                                 const ag::Tensor& grid_embedded,
                                                 const SoftAttentionParams& params);

// Plain LSTM captioner over the pooled feature, or LSTM with per-step soft
// attention over the embedded grid (Arch::lstm / Arch::lstm_attn).
class LstmModel final : public CaptionModel {
 public:
  LstmModel(const ModelConfig& cfg, Rng& init_rng);

  const ModelConfig& config() const override { return cfg_; }

  ag::Tensor forward(ag::Tape& tape, const data::FeatureGrid& features,
                     std::span<const int> input_ids, bool training, Rng& rng) override;

  std::unique_ptr<DecodeSession> start_decode(
      const data::FeatureGrid& features) const override;

  std::vector<std::pair<std::string, ag::Tensor>> named_parameters() override;

 private:
  friend class LstmSession;
  bool attentive() const { return cfg_.arch == Arch::lstm_attn; }
  int attn_width() const { return cfg_.attn_hidden > 0 ? cfg_.attn_hidden : cfg_.d_model; }

  // One step given the embedded input row; shared by training and decoding.
  std::pair<ag::Tensor, ag::Tensor> step(ag::Tape& tape, const ag::Tensor& x,
                                         const ag::Tensor& h, const ag::Tensor& c) const;
  ag::Tensor step_input(ag::Tape& tape, int token_id, const ag::Tensor& h,
                        const ag::Tensor& grid_embedded, bool training, Rng& rng) const;
  ag::Tensor output_row(ag::Tape& tape, const ag::Tensor& h) const;

  ModelConfig cfg_;
  ag::Tensor img_embed_;   // D x H
  ag::Tensor word_embed_;  // V x H
  ag::Tensor w_out_, b_out_;
  LstmCellParams cell_;
  SoftAttentionParams attn_;  // lstm_attn only
};

}  // namespace capgen::model
