#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capgen/config.hpp"
#include "capgen/model.hpp"
#include "capgen/training.hpp"

namespace capgen::ckpt {

// Versioned binary checkpoint: magic "CPGN", format version, config JSON
// blob, named parameter tensors (little-endian 64-bit floats), optional
// optimizer moments, RNG state, and phase/epoch/step metadata.
// load(save(x)) round-trips bitwise.
struct OptimizerState {
  std::int64_t step_count = 0;
  std::vector<std::pair<std::string, ag::Tensor>> m;
  std::vector<std::pair<std::string, ag::Tensor>> v;
};

struct Checkpoint {
  Config config;
  std::vector<std::pair<std::string, ag::Tensor>> params;
  std::optional<OptimizerState> optimizer;
  std::uint64_t rng_state = 0;
  std::string phase;  // "init", "xe", "scst"
  int epoch = 0;
  std::int64_t step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Convenience: snapshot a live model/trainer and restore into one.
Checkpoint snapshot(model::CaptionModel& model, train::Trainer* trainer,
                    const Config& config, const std::string& phase);
void restore_model(const Checkpoint& ckpt, model::CaptionModel& model);
void restore_trainer(const Checkpoint& ckpt, train::Trainer& trainer);

}  // namespace capgen::ckpt
