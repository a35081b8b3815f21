#include "capgen/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace capgen::model {

namespace {

constexpr double kMaskBias = -1e9;

ag::Tensor mask_bias_tensor(const AttnMask& mask, int n_q, int n_k) {
  if (static_cast<int>(mask.size()) != n_q * n_k)
    throw std::invalid_argument("attention: mask size does not match n_q x n_k");
  ag::Tensor bias = ag::Tensor::zeros({n_q, n_k});
  auto out = bias.mutable_data();
  for (int i = 0; i < n_q; ++i) {
    bool any = false;
    for (int j = 0; j < n_k; ++j) {
      if (mask[static_cast<std::size_t>(i) * n_k + j]) {
        any = true;
      } else {
        out[static_cast<std::size_t>(i) * n_k + j] = kMaskBias;
      }
    }
    if (!any)
      throw std::invalid_argument("attention: query row " + std::to_string(i) +
                                  " is fully masked");
  }
  return bias;
}

AttnMask causal_mask(int t) {
  AttnMask mask(static_cast<std::size_t>(t) * t, 0);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j <= i; ++j) mask[static_cast<std::size_t>(i) * t + j] = 1;
  return mask;
}

ag::Tensor rows_of(const ag::Tensor& table, int n_rows) {
  ag::Tensor out = ag::Tensor::zeros({n_rows, table.cols()});
  std::copy_n(table.data().data(), static_cast<std::size_t>(n_rows) * table.cols(),
              out.mutable_data().data());
  return out;
}

}  // namespace

ag::Tensor scaled_dot_attention(ag::Tape& tape, const ag::Tensor& q, const ag::Tensor& k,
                                const ag::Tensor& v, const AttnMask* mask,
                                ag::Tensor* weights_out) {
  if (q.cols() != k.cols())
    throw std::invalid_argument("attention: query/key dimensions disagree");
  if (k.rows() != v.rows())
    throw std::invalid_argument("attention: key/value row counts disagree");
  ag::Tensor scores = ag::scale(tape, ag::matmul(tape, q, transpose(tape, k)),
                                1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mask != nullptr)
    scores = ag::add(tape, scores, mask_bias_tensor(*mask, q.rows(), k.rows()));
  ag::Tensor weights = ag::softmax_rows(tape, scores);
  if (weights_out != nullptr) *weights_out = weights;
  return ag::matmul(tape, weights, v);
}

ag::Tensor multi_head_attention(ag::Tape& tape, const ag::Tensor& x_q,
                                const ag::Tensor& x_kv, const AttentionParams& params,
                                const AttnMask* mask) {
  std::vector<ag::Tensor> heads;
  heads.reserve(params.wq.size());
  for (std::size_t h = 0; h < params.wq.size(); ++h) {
    ag::Tensor q = ag::matmul(tape, x_q, params.wq[h]);
    ag::Tensor k = ag::matmul(tape, x_kv, params.wk[h]);
    ag::Tensor v = ag::matmul(tape, x_kv, params.wv[h]);
    heads.push_back(scaled_dot_attention(tape, q, k, v, mask));
  }
  return ag::matmul(tape, ag::concat_cols(tape, heads), params.wo);
}

std::int64_t transformer_parameter_count(const ModelConfig& cfg) {
  const std::int64_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;
  const std::int64_t attn = 3 * d * d + d * d;          // per-head projections + wo
  const std::int64_t ffn = d * f + f + f * d + d;
  const std::int64_t ln = 2 * d;
  const std::int64_t enc_block = attn + ffn + 2 * ln;
  const std::int64_t dec_block = 2 * attn + ffn + 3 * ln;
  return cfg.feature_dim * d + d                        // feature embedding
         + cfg.n_enc_blocks * enc_block
         + cfg.n_dec_blocks * dec_block
         + v * d                                        // token embedding
         + d * v + v;                                   // output projection
}

namespace {

AttentionParams make_attention(const ModelConfig& cfg, Rng& rng) {
  AttentionParams p;
  const int dh = cfg.d_model / cfg.n_heads;
  for (int h = 0; h < cfg.n_heads; ++h) {
    p.wq.push_back(ag::Tensor::zeros({cfg.d_model, dh}, true));
    p.wk.push_back(ag::Tensor::zeros({cfg.d_model, dh}, true));
    p.wv.push_back(ag::Tensor::zeros({cfg.d_model, dh}, true));
    xavier_uniform(p.wq.back(), rng);
    xavier_uniform(p.wk.back(), rng);
    xavier_uniform(p.wv.back(), rng);
  }
  p.wo = ag::Tensor::zeros({cfg.d_model, cfg.d_model}, true);
  xavier_uniform(p.wo, rng);
  return p;
}

FfnParams make_ffn(const ModelConfig& cfg, Rng& rng) {
  FfnParams p;
  p.w1 = ag::Tensor::zeros({cfg.d_model, cfg.d_ff}, true);
  p.b1 = ag::Tensor::zeros({cfg.d_ff}, true);
  p.w2 = ag::Tensor::zeros({cfg.d_ff, cfg.d_model}, true);
  p.b2 = ag::Tensor::zeros({cfg.d_model}, true);
  xavier_uniform(p.w1, rng);
  xavier_uniform(p.w2, rng);
  return p;
}

LayerNormParams make_ln(const ModelConfig& cfg) {
  return {ag::Tensor::full({cfg.d_model}, 1.0, true), ag::Tensor::zeros({cfg.d_model}, true)};
}

void collect_attention(std::vector<std::pair<std::string, ag::Tensor>>& out,
                       const std::string& prefix, const AttentionParams& p) {
  for (std::size_t h = 0; h < p.wq.size(); ++h) {
    out.emplace_back(prefix + ".wq." + std::to_string(h), p.wq[h]);
    out.emplace_back(prefix + ".wk." + std::to_string(h), p.wk[h]);
    out.emplace_back(prefix + ".wv." + std::to_string(h), p.wv[h]);
  }
  out.emplace_back(prefix + ".wo", p.wo);
}

void collect_ffn(std::vector<std::pair<std::string, ag::Tensor>>& out,
                 const std::string& prefix, const FfnParams& p) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

void collect_ln(std::vector<std::pair<std::string, ag::Tensor>>& out,
                const std::string& prefix, const LayerNormParams& p) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

}  // namespace

TransformerModel::TransformerModel(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  w_feat_ = ag::Tensor::zeros({cfg_.feature_dim, cfg_.d_model}, true);
  b_feat_ = ag::Tensor::zeros({cfg_.d_model}, true);
  xavier_uniform(w_feat_, init_rng);
  tok_embed_ = ag::Tensor::zeros({cfg_.vocab_size, cfg_.d_model}, true);
  xavier_uniform(tok_embed_, init_rng);
  for (int b = 0; b < cfg_.n_enc_blocks; ++b)
    enc_.push_back({make_attention(cfg_, init_rng), make_ffn(cfg_, init_rng),
                    make_ln(cfg_), make_ln(cfg_)});
  for (int b = 0; b < cfg_.n_dec_blocks; ++b)
    dec_.push_back({make_attention(cfg_, init_rng), make_attention(cfg_, init_rng),
                    make_ffn(cfg_, init_rng), make_ln(cfg_), make_ln(cfg_),
                    make_ln(cfg_)});
  w_out_ = ag::Tensor::zeros({cfg_.d_model, cfg_.vocab_size}, true);
  b_out_ = ag::Tensor::zeros({cfg_.vocab_size}, true);
  xavier_uniform(w_out_, init_rng);
  pe_enc_ = sinusoidal_encoding(cfg_.n_regions, cfg_.d_model);
  pe_dec_ = sinusoidal_encoding(cfg_.max_len, cfg_.d_model);
}

ag::Tensor TransformerModel::embed_features(ag::Tape& tape,
                                            const data::FeatureGrid& features,
                                            bool training, Rng& rng) const {
  if (features.n_regions != cfg_.n_regions || features.dim != cfg_.feature_dim)
    throw std::invalid_argument("transformer: feature grid shape does not match config");
  ag::Tensor grid = feature_grid_tensor(features);
  ag::Tensor x = ag::relu(tape, ag::add(tape, ag::matmul(tape, grid, w_feat_), b_feat_));
  x = ag::dropout(tape, x, cfg_.dropout_p, training, rng);
  if (cfg_.enc_pos_encoding) x = ag::add(tape, x, pe_enc_);
  return x;
}

ag::Tensor TransformerModel::encoder_block(ag::Tape& tape, const ag::Tensor& x,
                                           const EncoderBlockParams& p, bool training,
                                           Rng& rng) const {
  ag::Tensor attn = multi_head_attention(tape, x, x, p.self_attn);
  attn = ag::dropout(tape, attn, cfg_.dropout_p, training, rng);
  ag::Tensor h = ag::layer_norm(tape, ag::add(tape, x, attn), p.ln1.gain, p.ln1.bias,
                                cfg_.layer_norm_eps);
  ag::Tensor ff = ag::matmul(
      tape, ag::relu(tape, ag::add(tape, ag::matmul(tape, h, p.ffn.w1), p.ffn.b1)),
      p.ffn.w2);
  ff = ag::add(tape, ff, p.ffn.b2);
  ff = ag::dropout(tape, ff, cfg_.dropout_p, training, rng);
  return ag::layer_norm(tape, ag::add(tape, h, ff), p.ln2.gain, p.ln2.bias,
                        cfg_.layer_norm_eps);
}

ag::Tensor TransformerModel::encode(ag::Tape& tape, const ag::Tensor& features_embedded,
                                    bool training, Rng& rng) const {
  ag::Tensor x = features_embedded;
  for (const EncoderBlockParams& p : enc_) x = encoder_block(tape, x, p, training, rng);
  return x;
}

ag::Tensor TransformerModel::decode_steps(ag::Tape& tape, const ag::Tensor& memory,
                                          std::span<const int> input_ids, bool training,
                                          Rng& rng) const {
  const int t = static_cast<int>(input_ids.size());
  if (t < 1 || t > cfg_.max_len)
    throw std::invalid_argument("transformer: decoder length " + std::to_string(t) +
                                " outside 1.." + std::to_string(cfg_.max_len));
  ag::Tensor x = ag::scale(tape, ag::embedding_lookup(tape, tok_embed_, input_ids),
                           std::sqrt(static_cast<double>(cfg_.d_model)));
  x = ag::add(tape, x, rows_of(pe_dec_, t));
  x = ag::dropout(tape, x, cfg_.dropout_p, training, rng);

  const AttnMask mask = causal_mask(t);
  for (const DecoderBlockParams& p : dec_) {
    ag::Tensor attn = multi_head_attention(tape, x, x, p.self_attn, &mask);
    attn = ag::dropout(tape, attn, cfg_.dropout_p, training, rng);
    x = ag::layer_norm(tape, ag::add(tape, x, attn), p.ln1.gain, p.ln1.bias,
                       cfg_.layer_norm_eps);

    ag::Tensor cross = multi_head_attention(tape, x, memory, p.cross_attn);
    cross = ag::dropout(tape, cross, cfg_.dropout_p, training, rng);
    x = ag::layer_norm(tape, ag::add(tape, x, cross), p.ln2.gain, p.ln2.bias,
                       cfg_.layer_norm_eps);

    ag::Tensor ff = ag::matmul(
        tape, ag::relu(tape, ag::add(tape, ag::matmul(tape, x, p.ffn.w1), p.ffn.b1)),
        p.ffn.w2);
    ff = ag::add(tape, ff, p.ffn.b2);
    ff = ag::dropout(tape, ff, cfg_.dropout_p, training, rng);
    x = ag::layer_norm(tape, ag::add(tape, x, ff), p.ln3.gain, p.ln3.bias,
                       cfg_.layer_norm_eps);
  }
  return ag::add(tape, ag::matmul(tape, x, w_out_), b_out_);
}

ag::Tensor TransformerModel::forward(ag::Tape& tape, const data::FeatureGrid& features,
                                     std::span<const int> input_ids, bool training,
                                     Rng& rng) {
  ag::Tensor embedded = embed_features(tape, features, training, rng);
  ag::Tensor memory = encode(tape, embedded, training, rng);
  return decode_steps(tape, memory, input_ids, training, rng);
}

std::vector<std::pair<std::string, ag::Tensor>> TransformerModel::named_parameters() {
  std::vector<std::pair<std::string, ag::Tensor>> out;
  out.emplace_back("feat.w", w_feat_);
  out.emplace_back("feat.b", b_feat_);
  out.emplace_back("tok_embed", tok_embed_);
  for (std::size_t b = 0; b < enc_.size(); ++b) {
    const std::string prefix = "enc." + std::to_string(b);
    collect_attention(out, prefix + ".attn", enc_[b].self_attn);
    collect_ffn(out, prefix + ".ffn", enc_[b].ffn);
    collect_ln(out, prefix + ".ln1", enc_[b].ln1);
    collect_ln(out, prefix + ".ln2", enc_[b].ln2);
  }
  for (std::size_t b = 0; b < dec_.size(); ++b) {
    const std::string prefix = "dec." + std::to_string(b);
    collect_attention(out, prefix + ".self_attn", dec_[b].self_attn);
    collect_attention(out, prefix + ".cross_attn", dec_[b].cross_attn);
    collect_ffn(out, prefix + ".ffn", dec_[b].ffn);
    collect_ln(out, prefix + ".ln1", dec_[b].ln1);
    collect_ln(out, prefix + ".ln2", dec_[b].ln2);
    collect_ln(out, prefix + ".ln3", dec_[b].ln3);
  }
  out.emplace_back("out.w", w_out_);
  out.emplace_back("out.b", b_out_);
  return out;
}

// Incremental decoding: one decoder row per consumed token, with cached
// self-attention keys/values per block and encoder projections computed once.
// Every step runs the same tape-disabled ops the teacher-forced path uses,
// so logits agree with forward() on the matching prefix.
class TransformerSession final : public DecodeSession {
 public:
  TransformerSession(const TransformerModel& m, const data::FeatureGrid& features)
      : model_(m) {
    ag::Tape off = ag::Tape::disabled();
    Rng dummy(0);
    ag::Tensor memory =
        model_.encode(off, model_.embed_features(off, features, false, dummy), false, dummy);
    const auto& dec = model_.dec_;
    cross_k_.resize(dec.size());
    cross_v_.resize(dec.size());
    self_k_.resize(dec.size());
    self_v_.resize(dec.size());
    for (std::size_t b = 0; b < dec.size(); ++b) {
      for (std::size_t h = 0; h < dec[b].cross_attn.wq.size(); ++h) {
        cross_k_[b].push_back(ag::matmul(off, memory, dec[b].cross_attn.wk[h]));
        cross_v_[b].push_back(ag::matmul(off, memory, dec[b].cross_attn.wv[h]));
      }
      self_k_[b].resize(dec[b].self_attn.wq.size());
      self_v_[b].resize(dec[b].self_attn.wq.size());
    }
    consume(kBosId);
  }

  int vocab_size() const override { return model_.cfg_.vocab_size; }
  const std::vector<double>& logits() const override { return logits_; }

  void consume(int tok) override {
    if (pos_ >= model_.cfg_.max_len)
      throw std::invalid_argument("decode session: sequence exceeds max_len");
    ag::Tape off = ag::Tape::disabled();
    const ModelConfig& cfg = model_.cfg_;

    std::vector<int> ids = {tok};
    ag::Tensor x = ag::scale(off, ag::embedding_lookup(off, model_.tok_embed_, ids),
                             std::sqrt(static_cast<double>(cfg.d_model)));
    ag::Tensor pe_row = ag::Tensor::zeros({1, cfg.d_model});
    std::copy_n(model_.pe_dec_.data().data() + static_cast<std::size_t>(pos_) * cfg.d_model,
                cfg.d_model, pe_row.mutable_data().data());
    x = ag::add(off, x, pe_row);

    for (std::size_t b = 0; b < model_.dec_.size(); ++b) {
      const DecoderBlockParams& p = model_.dec_[b];
      // masked self-attention over the cached prefix plus this row
      std::vector<ag::Tensor> heads;
      for (std::size_t h = 0; h < p.self_attn.wq.size(); ++h) {
        ag::Tensor q = ag::matmul(off, x, p.self_attn.wq[h]);
        self_k_[b][h].push_back(ag::matmul(off, x, p.self_attn.wk[h]));
        self_v_[b][h].push_back(ag::matmul(off, x, p.self_attn.wv[h]));
        ag::Tensor k = ag::concat_rows(off, self_k_[b][h]);
        ag::Tensor v = ag::concat_rows(off, self_v_[b][h]);
        heads.push_back(scaled_dot_attention(off, q, k, v));
      }
      ag::Tensor attn = ag::matmul(off, ag::concat_cols(off, heads), p.self_attn.wo);
      x = ag::layer_norm(off, ag::add(off, x, attn), p.ln1.gain, p.ln1.bias,
                         cfg.layer_norm_eps);

      heads.clear();
      for (std::size_t h = 0; h < p.cross_attn.wq.size(); ++h) {
        ag::Tensor q = ag::matmul(off, x, p.cross_attn.wq[h]);
        heads.push_back(scaled_dot_attention(off, q, cross_k_[b][h], cross_v_[b][h]));
      }
      ag::Tensor cross = ag::matmul(off, ag::concat_cols(off, heads), p.cross_attn.wo);
      x = ag::layer_norm(off, ag::add(off, x, cross), p.ln2.gain, p.ln2.bias,
                         cfg.layer_norm_eps);

      ag::Tensor ff = ag::matmul(
          off, ag::relu(off, ag::add(off, ag::matmul(off, x, p.ffn.w1), p.ffn.b1)),
          p.ffn.w2);
      ff = ag::add(off, ff, p.ffn.b2);
      x = ag::layer_norm(off, ag::add(off, x, ff), p.ln3.gain, p.ln3.bias,
                         cfg.layer_norm_eps);
    }
    ag::Tensor row = ag::add(off, ag::matmul(off, x, model_.w_out_), model_.b_out_);
    logits_.assign(row.data().begin(), row.data().end());
    ++pos_;
  }

  std::unique_ptr<DecodeSession> clone() const override {
    return std::make_unique<TransformerSession>(*this);
  }

 private:
  const TransformerModel& model_;
  std::vector<std::vector<ag::Tensor>> cross_k_, cross_v_;          // [block][head]
  std::vector<std::vector<std::vector<ag::Tensor>>> self_k_, self_v_;  // [block][head][step]
  std::vector<double> logits_;
  int pos_ = 0;
};

std::unique_ptr<DecodeSession> TransformerModel::start_decode(
    const data::FeatureGrid& features) const {
  return std::make_unique<TransformerSession>(*this, features);
}

}  // namespace capgen::model
