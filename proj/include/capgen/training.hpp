#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capgen/data.hpp"
#include "capgen/metrics.hpp"
#include "capgen/model.hpp"
#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen::train {

struct TrainConfig {
  int xe_epochs = 30;
  int scst_epochs = 30;
  int batch_size = 5;
  double peak_lr_xe = 3e-4;
  int warmup_steps = 20000;
  double lr_scst = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
  // warmup scaled to roughly 5% of the desk run's total steps
  static TrainConfig desk_default();
};

// Linear warmup from 0 to peak over warmup_steps, then inverse-sqrt decay
// peak * sqrt(warmup / step). step counts from 1.
double lr_schedule(std::int64_t step, double peak_lr, int warmup_steps);

// Bias-corrected Adam over a fixed parameter list; moments are addressable
// by parameter name for checkpointing.
class AdamState {
 public:
  explicit AdamState(const std::vector<std::pair<std::string, ag::Tensor>>& params,
                     double beta1, double beta2, double eps);

  // One update from the parameters' current grads. Throws on non-finite
  // gradients, naming the offending parameter.
  void step(double lr);

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  std::vector<std::pair<std::string, ag::Tensor>>& moments1() { return m_; }
  std::vector<std::pair<std::string, ag::Tensor>>& moments2() { return v_; }

 private:
  std::vector<std::pair<std::string, ag::Tensor>> params_;
  std::vector<std::pair<std::string, ag::Tensor>> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// Scales all grads so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(const std::vector<std::pair<std::string, ag::Tensor>>& params,
                        double max_norm);

// One sample ready for the trainer: unpadded teacher-forcing pair plus the
// reference tokens the reward compares against.
struct PreparedSample {
  std::string id;
  const data::FeatureGrid* features = nullptr;
  std::vector<int> input_ids;      // BOS + content
  std::vector<int> targets;        // content + EOS
  std::vector<int> ref_tokens;     // content only
};

struct StepLog {
  std::int64_t step = 0;
  std::string phase;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> reward_sampled;
  std::optional<double> reward_greedy;
};

using LogSink = std::function<void(const StepLog&)>;

// Reward for one decoded hypothesis against one sample's reference.
using RewardFn = std::function<double(const std::vector<int>& hyp,
                                      const PreparedSample& sample)>;

// Owns the optimizer and RNG for one model; both training phases share it so
// a checkpoint can resume either phase bit-exactly.
class Trainer {
 public:
  Trainer(model::CaptionModel& model, const TrainConfig& cfg);

  // Teacher-forced cross-entropy over one batch (gradients accumulate);
  // returns the mean loss. Exposed for tests.
  double xe_batch(std::span<const PreparedSample> batch);

  struct ScstBatchStats {
    double loss = 0.0;
    double reward_sampled = 0.0;  // batch means
    double reward_greedy = 0.0;
  };

  // Self-critical step over one batch: sample vs greedy baseline, advantage-
  // weighted surrogate loss -A * sum(log p). Gradients accumulate.
  ScstBatchStats scst_batch(std::span<const PreparedSample> batch, const RewardFn& reward);

  void train_xe(std::span<const PreparedSample> train_set,
                std::span<const PreparedSample> val_set, int epochs,
                const LogSink& sink = nullptr);
  void train_scst(std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> val_set, const metrics::CiderIdf& idf,
                  int epochs, const LogSink& sink = nullptr);

  double validation_loss(std::span<const PreparedSample> val_set);

  const TrainConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  int epoch() const { return epoch_; }
  Rng& rng() { return rng_; }
  AdamState& adam() { return adam_; }
  void set_progress(std::int64_t step, int epoch) {
    step_ = step;
    epoch_ = epoch;
  }

  // Epoch-end snapshot hook (checkpointing lives in the harness).
  std::function<void(int epoch, const std::string& phase)> on_epoch_end;

 private:
  model::CaptionModel& model_;
  TrainConfig cfg_;
  std::vector<std::pair<std::string, ag::Tensor>> params_;
  AdamState adam_;
  Rng rng_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
};

// Per-sentence CIDEr-D of greedy decodes over a sample set, against a frozen
// IDF table: the validation metric SCST is judged by.
double validation_cider(model::CaptionModel& model,
                        std::span<const PreparedSample> samples,
                        const metrics::CiderIdf& idf);

// Greedy-decode BLEU-n over a sample set.
double validation_bleu(model::CaptionModel& model,
                       std::span<const PreparedSample> samples, int max_n);

metrics::CiderIdf idf_from_samples(std::span<const PreparedSample> samples);

}  // namespace capgen::train
