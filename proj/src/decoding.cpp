#include "capgen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace capgen::decode {

using model::kBosId;
using model::kEosId;
using model::kPadId;

namespace {

constexpr double kMaskBias = -1e9;

}  // namespace

std::vector<double> masked_log_softmax(const std::vector<double>& logits) {
  std::vector<double> out = logits;
  out[kPadId] += kMaskBias;
  out[kBosId] += kMaskBias;
  double mx = out[0];
  for (double v : out) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : out) z += std::exp(v - mx);
  const double lse = std::log(z) + mx;
  for (double& v : out) v -= lse;
  return out;
}

DecodeResult greedy_decode(model::DecodeSession& session, int max_content) {
  DecodeResult res;
  while (static_cast<int>(res.ids.size()) < max_content) {
    const std::vector<double> lp = masked_log_softmax(session.logits());
    int pick = 0;
    for (int j = 1; j < static_cast<int>(lp.size()); ++j)
      if (lp[static_cast<std::size_t>(j)] > lp[static_cast<std::size_t>(pick)]) pick = j;
    res.logprobs.push_back(lp[static_cast<std::size_t>(pick)]);
    res.score += lp[static_cast<std::size_t>(pick)];
    if (pick == kEosId) {
      res.ended_with_eos = true;
      return res;
    }
    res.ids.push_back(pick);
    session.consume(pick);
  }
  return res;  // length-capped
}

DecodeResult sample_decode(model::DecodeSession& session, int max_content, Rng& rng) {
  DecodeResult res;
  while (static_cast<int>(res.ids.size()) < max_content) {
    const std::vector<double> lp = masked_log_softmax(session.logits());
    std::vector<double> probs(lp.size());
    for (std::size_t j = 0; j < lp.size(); ++j) probs[j] = std::exp(lp[j]);
    const int pick = rng.categorical(probs);
    res.logprobs.push_back(lp[static_cast<std::size_t>(pick)]);
    res.score += lp[static_cast<std::size_t>(pick)];
    if (pick == kEosId) {
      res.ended_with_eos = true;
      return res;
    }
    res.ids.push_back(pick);
    session.consume(pick);
  }
  return res;
}

namespace {

struct Hypothesis {
  std::unique_ptr<model::DecodeSession> session;  // null once retired
  std::vector<int> ids;
  std::vector<double> logprobs;
  double score = 0.0;
  bool ended_with_eos = false;
};

double normalized_score(const Hypothesis& h, double alpha) {
  const std::size_t scored = h.logprobs.size();
  if (scored == 0) return h.score;
  return h.score / std::pow(static_cast<double>(scored), alpha);
}

}  // namespace

DecodeResult beam_decode(const model::DecodeSession& root, int beam, int max_content,
                         double alpha) {
  if (beam < 1) throw std::invalid_argument("beam_decode: beam must be >= 1");

  std::vector<Hypothesis> active;
  {
    Hypothesis h;
    h.session = root.clone();
    active.push_back(std::move(h));
  }
  std::vector<Hypothesis> retired;

  for (int step = 0; step < max_content && !active.empty(); ++step) {
    // candidate = (parent index, token, new score)
    struct Candidate {
      double score;
      int token;
      std::size_t parent;
      double logprob;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < active.size(); ++p) {
      const std::vector<double> lp = masked_log_softmax(active[p].session->logits());
      for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
        if (tok == kPadId || tok == kBosId) continue;
        candidates.push_back({active[p].score + lp[static_cast<std::size_t>(tok)], tok, p,
                              lp[static_cast<std::size_t>(tok)]});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });
    if (static_cast<int>(candidates.size()) > beam) candidates.resize(static_cast<std::size_t>(beam));

    std::vector<Hypothesis> next;
    for (const Candidate& c : candidates) {
      Hypothesis h;
      h.ids = active[c.parent].ids;
      h.logprobs = active[c.parent].logprobs;
      h.logprobs.push_back(c.logprob);
      h.score = c.score;
      if (c.token == kEosId) {
        h.ended_with_eos = true;
        retired.push_back(std::move(h));
        continue;
      }
      h.ids.push_back(c.token);
      if (static_cast<int>(h.ids.size()) >= max_content) {
        retired.push_back(std::move(h));  // length-capped
        continue;
      }
      h.session = active[c.parent].session->clone();
      h.session->consume(c.token);
      next.push_back(std::move(h));
    }
    active = std::move(next);
  }
  for (Hypothesis& h : active) {
    h.session.reset();
    retired.push_back(std::move(h));
  }

  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  for (const Hypothesis& h : retired) {
    const double s = normalized_score(h, alpha);
    if (best == nullptr || s > best_score ||
        (s == best_score && h.ids < best->ids)) {
      best = &h;
      best_score = s;
    }
  }

  DecodeResult res;
  res.ids = best->ids;
  res.logprobs = best->logprobs;
  res.score = best->score;
  res.ended_with_eos = best->ended_with_eos;
  return res;
}

}  // namespace capgen::decode
