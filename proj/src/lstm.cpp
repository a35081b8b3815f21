#include "capgen/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace capgen::model {

std::pair<ag::Tensor, ag::Tensor> lstm_cell(ag::Tape& tape, const ag::Tensor& x,
                                            const ag::Tensor& h, const ag::Tensor& c,
                                            const LstmCellParams& params) {
  std::vector<ag::Tensor> zs = {x, h};
  ag::Tensor z = ag::concat_cols(tape, zs);
  ag::Tensor i = ag::sigmoid(tape, ag::add(tape, ag::matmul(tape, z, params.wi), params.bi));
  ag::Tensor f = ag::sigmoid(tape, ag::add(tape, ag::matmul(tape, z, params.wf), params.bf));
  ag::Tensor o = ag::sigmoid(tape, ag::add(tape, ag::matmul(tape, z, params.wo), params.bo));
  ag::Tensor g = ag::tanh_op(tape, ag::add(tape, ag::matmul(tape, z, params.wg), params.bg));
  ag::Tensor c_next = ag::add(tape, ag::mul(tape, f, c), ag::mul(tape, i, g));
  ag::Tensor h_next = ag::mul(tape, o, ag::tanh_op(tape, c_next));
  return {h_next, c_next};
}

ag::Tensor pooled_feature(const data::FeatureGrid& grid) {
  if (grid.n_regions < 1) throw std::invalid_argument("pooled_feature: empty grid");
  ag::Tensor out = ag::Tensor::zeros({1, grid.dim});
  auto dst = out.mutable_data();
  for (int r = 0; r < grid.n_regions; ++r)
    for (int c = 0; c < grid.dim; ++c) dst[c] += grid.at(r, c);
  for (int c = 0; c < grid.dim; ++c) dst[c] /= grid.n_regions;
  return out;
}

std::pair<ag::Tensor, ag::Tensor> soft_attention(ag::Tape& tape, const ag::Tensor& h,
                                                 const ag::Tensor& grid_embedded,
                                                 const SoftAttentionParams& params) {
  ag::Tensor query = ag::matmul(tape, h, params.w_h);  // 1 x A
  ag::Tensor keys = ag::add(tape, ag::matmul(tape, grid_embedded, params.w_v), query);
  ag::Tensor scores = ag::matmul(tape, ag::tanh_op(tape, keys), params.v);  // R x 1
  ag::Tensor weights = ag::softmax_rows(tape, ag::transpose(tape, scores));  // 1 x R
  ag::Tensor context = ag::matmul(tape, weights, grid_embedded);             // 1 x H
  return {context, weights};
}

LstmModel::LstmModel(const ModelConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.arch == Arch::transformer)
    throw std::invalid_argument("LstmModel: config names the transformer arch");
  const int h = cfg_.d_model;
  const int in = attentive() ? 2 * h : h;
  img_embed_ = ag::Tensor::zeros({cfg_.feature_dim, h}, true);
  word_embed_ = ag::Tensor::zeros({cfg_.vocab_size, h}, true);
  xavier_uniform(img_embed_, init_rng);
  xavier_uniform(word_embed_, init_rng);
  for (ag::Tensor* w : {&cell_.wi, &cell_.wf, &cell_.wo, &cell_.wg}) {
    *w = ag::Tensor::zeros({in + h, h}, true);
    xavier_uniform(*w, init_rng);
  }
  for (ag::Tensor* b : {&cell_.bi, &cell_.bf, &cell_.bo, &cell_.bg})
    *b = ag::Tensor::zeros({h}, true);
  w_out_ = ag::Tensor::zeros({h, cfg_.vocab_size}, true);
  b_out_ = ag::Tensor::zeros({cfg_.vocab_size}, true);
  xavier_uniform(w_out_, init_rng);
  if (attentive()) {
    const int a = attn_width();
    attn_.w_h = ag::Tensor::zeros({h, a}, true);
    attn_.w_v = ag::Tensor::zeros({h, a}, true);
    attn_.v = ag::Tensor::zeros({a, 1}, true);
    xavier_uniform(attn_.w_h, init_rng);
    xavier_uniform(attn_.w_v, init_rng);
    xavier_uniform(attn_.v, init_rng);
  }
}

std::pair<ag::Tensor, ag::Tensor> LstmModel::step(ag::Tape& tape, const ag::Tensor& x,
                                                  const ag::Tensor& h,
                                                  const ag::Tensor& c) const {
  return lstm_cell(tape, x, h, c, cell_);
}

ag::Tensor LstmModel::step_input(ag::Tape& tape, int token_id, const ag::Tensor& h,
                                 const ag::Tensor& grid_embedded, bool training,
                                 Rng& rng) const {
  std::vector<int> ids = {token_id};
  ag::Tensor e = ag::embedding_lookup(tape, word_embed_, ids);
  e = ag::dropout(tape, e, cfg_.dropout_p, training, rng);
  if (!attentive()) return e;
  auto [context, weights] = soft_attention(tape, h, grid_embedded, attn_);
  std::vector<ag::Tensor> parts = {e, context};
  return ag::concat_cols(tape, parts);
}

ag::Tensor LstmModel::output_row(ag::Tape& tape, const ag::Tensor& h) const {
  return ag::add(tape, ag::matmul(tape, h, w_out_), b_out_);
}

ag::Tensor LstmModel::forward(ag::Tape& tape, const data::FeatureGrid& features,
                              std::span<const int> input_ids, bool training, Rng& rng) {
  if (features.n_regions != cfg_.n_regions || features.dim != cfg_.feature_dim)
    throw std::invalid_argument("lstm: feature grid shape does not match config");
  const int t_len = static_cast<int>(input_ids.size());
  if (t_len < 1 || t_len > cfg_.max_len)
    throw std::invalid_argument("lstm: sequence length outside 1..max_len");

  const int hdim = cfg_.d_model;
  ag::Tensor h = ag::Tensor::zeros({1, hdim});
  ag::Tensor c = ag::Tensor::zeros({1, hdim});
  ag::Tensor grid_embedded;
  if (attentive()) {
    grid_embedded = ag::matmul(tape, feature_grid_tensor(features), img_embed_);
  } else {
    // pooled image embedding is the step-0 input, before BOS
    ag::Tensor x0 = ag::matmul(tape, pooled_feature(features), img_embed_);
    std::tie(h, c) = step(tape, x0, h, c);
  }

  std::vector<ag::Tensor> rows;
  rows.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    ag::Tensor x = step_input(tape, input_ids[static_cast<std::size_t>(t)], h,
                              grid_embedded, training, rng);
    std::tie(h, c) = step(tape, x, h, c);
    rows.push_back(output_row(tape, h));
  }
  return ag::concat_rows(tape, rows);
}

std::vector<std::pair<std::string, ag::Tensor>> LstmModel::named_parameters() {
  std::vector<std::pair<std::string, ag::Tensor>> out;
  out.emplace_back("img_embed", img_embed_);
  out.emplace_back("word_embed", word_embed_);
  out.emplace_back("cell.wi", cell_.wi);
  out.emplace_back("cell.wf", cell_.wf);
  out.emplace_back("cell.wo", cell_.wo);
  out.emplace_back("cell.wg", cell_.wg);
  out.emplace_back("cell.bi", cell_.bi);
  out.emplace_back("cell.bf", cell_.bf);
  out.emplace_back("cell.bo", cell_.bo);
  out.emplace_back("cell.bg", cell_.bg);
  out.emplace_back("out.w", w_out_);
  out.emplace_back("out.b", b_out_);
  if (attentive()) {
    out.emplace_back("attn.w_h", attn_.w_h);
    out.emplace_back("attn.w_v", attn_.w_v);
    out.emplace_back("attn.v", attn_.v);
  }
  return out;
}

class LstmSession final : public DecodeSession {
 public:
  LstmSession(const LstmModel& m, const data::FeatureGrid& features) : model_(m) {
    ag::Tape off = ag::Tape::disabled();
    const int hdim = model_.cfg_.d_model;
    h_ = ag::Tensor::zeros({1, hdim});
    c_ = ag::Tensor::zeros({1, hdim});
    if (model_.attentive()) {
      grid_embedded_ = ag::matmul(off, feature_grid_tensor(features), model_.img_embed_);
    } else {
      ag::Tensor x0 = ag::matmul(off, pooled_feature(features), model_.img_embed_);
      std::tie(h_, c_) = model_.step(off, x0, h_, c_);
    }
    consume(kBosId);
  }

  int vocab_size() const override { return model_.cfg_.vocab_size; }
  const std::vector<double>& logits() const override { return logits_; }

  void consume(int token_id) override {
    ag::Tape off = ag::Tape::disabled();
    Rng dummy(0);
    ag::Tensor x = model_.step_input(off, token_id, h_, grid_embedded_, false, dummy);
    std::tie(h_, c_) = model_.step(off, x, h_, c_);
    ag::Tensor row = model_.output_row(off, h_);
    logits_.assign(row.data().begin(), row.data().end());
  }

  std::unique_ptr<DecodeSession> clone() const override {
    return std::make_unique<LstmSession>(*this);
  }

 private:
  const LstmModel& model_;
  ag::Tensor h_, c_, grid_embedded_;
  std::vector<double> logits_;
};

std::unique_ptr<DecodeSession> LstmModel::start_decode(
    const data::FeatureGrid& features) const {
  return std::make_unique<LstmSession>(*this, features);
}

}  // namespace capgen::model
