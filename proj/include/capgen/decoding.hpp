#pragma once

#include <vector>

#include "capgen/model.hpp"
#include "capgen/rng.hpp"

namespace capgen::decode {

// Output of one decoded caption. ids holds content tokens only: decoders
// never emit PAD or BOS, and EOS terminates the sequence without appearing
// in ids. logprobs covers every scored choice, including a naturally
// sampled/selected EOS; a forced stop at the length cap scores nothing.
struct DecodeResult {
  std::vector<int> ids;
  bool ended_with_eos = false;
  double score = 0.0;  // sum of logprobs
  std::vector<double> logprobs;
};

// Log-softmax over logits with PAD and BOS masked out (-1e9 bias). This is
// the distribution every decoder, and the SCST surrogate loss, works with.
std::vector<double> masked_log_softmax(const std::vector<double>& logits);

// Iterative argmax with ties broken toward the lowest token id.
DecodeResult greedy_decode(model::DecodeSession& session, int max_content);

// Multinomial draw per step at temperature 1; returns the exact
// log-probabilities of the drawn tokens.
DecodeResult sample_decode(model::DecodeSession& session, int max_content, Rng& rng);

// Beam search over log-prob sums with length normalization
// (sum log p) / T^alpha; hypotheses retire at EOS; ties break on score,
// then token id. beam = 1 reproduces greedy_decode exactly.
DecodeResult beam_decode(const model::DecodeSession& root, int beam, int max_content,
                         double length_norm_alpha);

}  // namespace capgen::decode
