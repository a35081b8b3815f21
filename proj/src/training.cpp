#include "capgen/training.hpp"

#include <cmath>
#include <stdexcept>

#include "capgen/decoding.hpp"

namespace capgen::train {

void TrainConfig::validate() const {
  if (xe_epochs < 0 || scst_epochs < 0) throw std::invalid_argument("train config: negative epochs");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (peak_lr_xe <= 0.0 || lr_scst < 0.0) throw std::invalid_argument("train config: bad learning rate");
  if (warmup_steps < 1) throw std::invalid_argument("train config: warmup must be >= 1");
  if (grad_clip_norm <= 0.0) throw std::invalid_argument("train config: bad clip norm");
}

TrainConfig TrainConfig::desk_default() {
  TrainConfig cfg;
  cfg.xe_epochs = 10;
  cfg.scst_epochs = 10;
  cfg.warmup_steps = 160;
  return cfg;
}

double lr_schedule(std::int64_t step, double peak_lr, int warmup_steps) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step counts from 1");
  if (step <= warmup_steps)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  return peak_lr * std::sqrt(static_cast<double>(warmup_steps) / static_cast<double>(step));
}

AdamState::AdamState(const std::vector<std::pair<std::string, ag::Tensor>>& params,
                     double beta1, double beta2, double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(name, ag::Tensor::zeros(p.shape()));
    v_.emplace_back(name, ag::Tensor::zeros(p.shape()));
  }
}

void AdamState::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    auto grads = p.grad();
    auto m = m_[i].second.mutable_data();
    auto v = v_[i].second.mutable_data();
    auto vals = p.mutable_data();
    for (int j = 0; j < p.numel(); ++j) {
      const double g = grads[static_cast<std::size_t>(j)];
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient in parameter " +
                                 params_[i].first);
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      vals[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

double clip_global_norm(const std::vector<std::pair<std::string, ag::Tensor>>& params,
                        double max_norm) {
  double total = 0.0;
  for (const auto& [name, p] : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g))
        throw std::runtime_error("clip: non-finite gradient in parameter " + name);
      total += g * g;
    }
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, p] : params)
      for (double& g : p.grad_mut()) g *= scale;
  }
  return norm;
}

Trainer::Trainer(model::CaptionModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      params_(model.named_parameters()),
      adam_(params_, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      rng_(cfg.seed) {
  cfg_.validate();
}

double Trainer::xe_batch(std::span<const PreparedSample> batch) {
  if (batch.empty()) throw std::invalid_argument("xe_batch: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const PreparedSample& s : batch) {
    ag::Tape tape;
    ag::Tensor logits = model_.forward(tape, *s.features, s.input_ids, true, rng_);
    ag::Tensor loss = ag::cross_entropy(tape, logits, s.targets);
    tape.backward(ag::scale(tape, loss, inv));
    total += loss.item() * inv;
  }
  return total;
}

namespace {

// Constant bias masking PAD and BOS columns, so the surrogate softmax is the
// distribution the decoder actually sampled from.
ag::Tensor pad_bos_bias(int t, int v) {
  ag::Tensor bias = ag::Tensor::zeros({t, v});
  auto out = bias.mutable_data();
  for (int i = 0; i < t; ++i) {
    out[static_cast<std::size_t>(i) * v + model::kPadId] = -1e9;
    out[static_cast<std::size_t>(i) * v + model::kBosId] = -1e9;
  }
  return bias;
}

}  // namespace

Trainer::ScstBatchStats Trainer::scst_batch(std::span<const PreparedSample> batch,
                                            const RewardFn& reward) {
  if (batch.empty()) throw std::invalid_argument("scst_batch: empty batch");
  const int max_content = model_.config().max_len - 2;
  const double inv = 1.0 / static_cast<double>(batch.size());
  ScstBatchStats stats;
  for (const PreparedSample& s : batch) {
    auto greedy_session = model_.start_decode(*s.features);
    const decode::DecodeResult baseline = decode::greedy_decode(*greedy_session, max_content);
    auto sample_session = model_.start_decode(*s.features);
    const decode::DecodeResult sampled =
        decode::sample_decode(*sample_session, max_content, rng_);

    double r_sampled = 0.0, r_greedy = 0.0;
    try {
      r_sampled = reward(sampled.ids, s);
      r_greedy = reward(baseline.ids, s);
    } catch (const std::exception& e) {
      throw std::runtime_error("scst: reward failed for sample " + s.id + ": " + e.what());
    }
    stats.reward_sampled += r_sampled * inv;
    stats.reward_greedy += r_greedy * inv;
    const double advantage = r_sampled - r_greedy;

    // teacher-force the sampled tokens; a natural EOS is a scored choice,
    // a forced stop at the cap is not
    std::vector<int> scored = sampled.ids;
    if (sampled.ended_with_eos) scored.push_back(model::kEosId);
    std::vector<int> input = {model::kBosId};
    input.insert(input.end(), scored.begin(), scored.end() - 1);

    ag::Tape tape;
    ag::Tensor logits = model_.forward(tape, *s.features, input, false, rng_);
    logits = ag::add(tape, logits, pad_bos_bias(static_cast<int>(scored.size()),
                                                model_.config().vocab_size));
    ag::Tensor ce = ag::cross_entropy(tape, logits, scored);
    // -A * sum(log p) == A * n * CE
    ag::Tensor loss =
        ag::scale(tape, ce, advantage * static_cast<double>(scored.size()) * inv);
    tape.backward(loss);
    stats.loss += loss.item();
  }
  return stats;
}

void Trainer::train_xe(std::span<const PreparedSample> train_set,
                       std::span<const PreparedSample> val_set, int epochs,
                       const LogSink& sink) {
  if (train_set.empty()) throw std::invalid_argument("train_xe: empty dataset");
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int e = 0; e < epochs; ++e) {
    rng_.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      std::vector<PreparedSample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg_.batch_size); ++i)
        batch.push_back(train_set[static_cast<std::size_t>(order[i])]);
      model_.zero_grads();
      const double loss = xe_batch(batch);
      clip_global_norm(params_, cfg_.grad_clip_norm);
      ++step_;
      const double lr = lr_schedule(step_, cfg_.peak_lr_xe, cfg_.warmup_steps);
      adam_.step(lr);
      if (sink) sink({step_, "xe", lr, loss, std::nullopt, std::nullopt});
    }
    ++epoch_;
    if (sink && !val_set.empty())
      sink({step_, "xe_val", 0.0, validation_loss(val_set), std::nullopt, std::nullopt});
    if (on_epoch_end) on_epoch_end(epoch_, "xe");
  }
}

void Trainer::train_scst(std::span<const PreparedSample> train_set,
                         std::span<const PreparedSample> val_set,
                         const metrics::CiderIdf& idf, int epochs, const LogSink& sink) {
  if (train_set.empty()) throw std::invalid_argument("train_scst: empty dataset");
  RewardFn reward = [&idf](const std::vector<int>& hyp, const PreparedSample& s) {
    return metrics::cider_d(hyp, {s.ref_tokens}, idf);
  };
  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int e = 0; e < epochs; ++e) {
    rng_.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      std::vector<PreparedSample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg_.batch_size); ++i)
        batch.push_back(train_set[static_cast<std::size_t>(order[i])]);
      model_.zero_grads();
      const ScstBatchStats stats = scst_batch(batch, reward);
      clip_global_norm(params_, cfg_.grad_clip_norm);
      ++step_;
      adam_.step(cfg_.lr_scst);
      if (sink)
        sink({step_, "scst", cfg_.lr_scst, stats.loss, stats.reward_sampled,
              stats.reward_greedy});
    }
    ++epoch_;
    if (sink && !val_set.empty())
      sink({step_, "scst_val", 0.0, validation_cider(model_, val_set, idf), std::nullopt,
            std::nullopt});
    if (on_epoch_end) on_epoch_end(epoch_, "scst");
  }
}

double Trainer::validation_loss(std::span<const PreparedSample> val_set) {
  if (val_set.empty()) throw std::invalid_argument("validation_loss: empty set");
  double total = 0.0;
  Rng unused(0);
  for (const PreparedSample& s : val_set) {
    ag::Tape tape = ag::Tape::disabled();
    ag::Tensor logits = model_.forward(tape, *s.features, s.input_ids, false, unused);
    total += ag::cross_entropy(tape, logits, s.targets).item();
  }
  return total / static_cast<double>(val_set.size());
}

double validation_cider(model::CaptionModel& model,
                        std::span<const PreparedSample> samples,
                        const metrics::CiderIdf& idf) {
  if (samples.empty()) throw std::invalid_argument("validation_cider: empty set");
  const int max_content = model.config().max_len - 2;
  double total = 0.0;
  for (const PreparedSample& s : samples) {
    auto session = model.start_decode(*s.features);
    const auto res = decode::greedy_decode(*session, max_content);
    total += metrics::cider_d(res.ids, {s.ref_tokens}, idf);
  }
  return total / static_cast<double>(samples.size());
}

double validation_bleu(model::CaptionModel& model,
                       std::span<const PreparedSample> samples, int max_n) {
  if (samples.empty()) throw std::invalid_argument("validation_bleu: empty set");
  const int max_content = model.config().max_len - 2;
  std::vector<metrics::Sent> hyps;
  std::vector<std::vector<metrics::Sent>> refs;
  for (const PreparedSample& s : samples) {
    auto session = model.start_decode(*s.features);
    hyps.push_back(decode::greedy_decode(*session, max_content).ids);
    refs.push_back({s.ref_tokens});
  }
  return metrics::bleu(hyps, refs, max_n);
}

metrics::CiderIdf idf_from_samples(std::span<const PreparedSample> samples) {
  std::vector<std::vector<metrics::Sent>> refs;
  for (const PreparedSample& s : samples) refs.push_back({s.ref_tokens});
  return metrics::build_cider_idf(refs);
}

}  // namespace capgen::train
