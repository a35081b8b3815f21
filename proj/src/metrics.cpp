#include "capgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>

namespace capgen::metrics {

namespace {

constexpr int kMaxOrder = 4;

std::map<Sent, int> ngram_counts(const Sent& s, int n) {
  std::map<Sent, int> counts;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i)
    counts[Sent(s.begin() + i, s.begin() + i + n)] += 1;
  return counts;
}

int lcs_length(const Sent& a, const Sent& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// ---- METEOR alignment ----
//
// Maximum matches is forced by multiset intersection; minimizing chunks among
// maximum-match alignments is a minimum-common-partition problem, so we run a
// depth-first branch-and-bound (continue-the-current-chunk moves first) with
// a node budget. If the budget is ever exhausted we fall back to a greedy
// left-to-right alignment that still attains maximum matches.
struct AlignResult {
  int matches = 0;
  int chunks = 0;
};

class ChunkMinimizer {
 public:
  ChunkMinimizer(const Sent& hyp, const Sent& ref) : hyp_(hyp), ref_(ref) {
    std::map<int, int> hc, rc;
    for (int t : hyp) hc[t] += 1;
    for (int t : ref) rc[t] += 1;
    for (auto& [tok, c] : hc) target_ += std::min(c, rc.count(tok) ? rc[tok] : 0);
    matchable_suffix_.assign(hyp.size() + 1, 0);
    for (int i = static_cast<int>(hyp.size()) - 1; i >= 0; --i)
      matchable_suffix_[i] = matchable_suffix_[i + 1] +
                             (rc.count(hyp[static_cast<std::size_t>(i)]) ? 1 : 0);
  }

  AlignResult run() {
    if (target_ == 0) return {0, 0};
    best_chunks_ = target_ + 1;
    if (ref_.size() <= 64) {
      used_ = 0;
      search(0, 0, 0, -2);
    }
    if (best_chunks_ > target_) return greedy();  // budget exhausted or ref too long
    return {target_, best_chunks_};
  }

 private:
  void search(std::size_t i, int matches, int chunks, int prev_ref) {
    if (chunks >= best_chunks_) return;
    if (budget_ == 0) return;
    --budget_;
    if (matches + matchable_suffix_[i] < target_) return;
    if (i == hyp_.size()) {
      if (matches == target_ && chunks < best_chunks_) best_chunks_ = chunks;
      return;
    }
    const int tok = hyp_[i];
    // extend the current chunk first: strongest pull toward few chunks
    const int cont = prev_ref + 1;
    if (prev_ref >= -1 && cont < static_cast<int>(ref_.size()) && ref_[cont] == tok &&
        !(used_ >> cont & 1)) {
      used_ |= std::uint64_t{1} << cont;
      search(i + 1, matches + 1, chunks == 0 ? 1 : chunks, cont);
      used_ &= ~(std::uint64_t{1} << cont);
    }
    for (int j = 0; j < static_cast<int>(ref_.size()); ++j) {
      if (ref_[j] != tok || (used_ >> j & 1) || j == cont) continue;
      used_ |= std::uint64_t{1} << j;
      search(i + 1, matches + 1, chunks + 1, j);
      used_ &= ~(std::uint64_t{1} << j);
    }
    search(i + 1, matches, chunks, -2);  // leave position unmatched
  }

  AlignResult greedy() const {
    std::map<int, int> remaining;
    for (int t : ref_) remaining[t] += 1;
    std::vector<int> assign(hyp_.size(), -1);
    std::vector<bool> used(ref_.size(), false);
    int matches = 0;
    for (std::size_t i = 0; i < hyp_.size(); ++i) {
      auto it = remaining.find(hyp_[i]);
      if (it == remaining.end() || it->second == 0) continue;
      int pick = -1;
      if (i > 0 && assign[i - 1] >= 0) {
        const int cont = assign[i - 1] + 1;
        if (cont < static_cast<int>(ref_.size()) && !used[cont] && ref_[cont] == hyp_[i])
          pick = cont;
      }
      if (pick < 0)
        for (int j = 0; j < static_cast<int>(ref_.size()); ++j)
          if (!used[j] && ref_[j] == hyp_[i]) {
            pick = j;
            break;
          }
      assign[i] = pick;
      used[static_cast<std::size_t>(pick)] = true;
      it->second -= 1;
      ++matches;
    }
    int chunks = 0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (assign[i] < 0) continue;
      if (i == 0 || assign[i - 1] < 0 || assign[i] != assign[i - 1] + 1) ++chunks;
    }
    return {matches, chunks};
  }

  const Sent& hyp_;
  const Sent& ref_;
  int target_ = 0;
  int best_chunks_ = 0;
  std::uint64_t used_ = 0;
  std::uint64_t budget_ = 2'000'000;
  std::vector<int> matchable_suffix_;
};

}  // namespace

int TokenInterner::intern(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(ids_.size()));
  return it->second;
}

Sent TokenInterner::intern_all(const std::vector<std::string>& tokens) {
  Sent out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(intern(t));
  return out;
}

double bleu(const std::vector<Sent>& hyps, const std::vector<std::vector<Sent>>& refs,
            int max_n) {
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: hypothesis/reference count mismatch");
  if (max_n < 1 || max_n > kMaxOrder) throw std::invalid_argument("bleu: order must be 1..4");

  std::int64_t hyp_len = 0, ref_len = 0;
  std::vector<std::int64_t> matched(static_cast<std::size_t>(max_n), 0);
  std::vector<std::int64_t> total(static_cast<std::size_t>(max_n), 0);

  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Sent& hyp = hyps[s];
    if (refs[s].empty()) throw std::invalid_argument("bleu: sentence without references");
    hyp_len += static_cast<std::int64_t>(hyp.size());
    // best-match reference length: closest, ties toward the shorter
    std::int64_t best = static_cast<std::int64_t>(refs[s][0].size());
    for (const Sent& r : refs[s]) {
      const auto len = static_cast<std::int64_t>(r.size());
      const auto d = std::abs(len - static_cast<std::int64_t>(hyp.size()));
      const auto bd = std::abs(best - static_cast<std::int64_t>(hyp.size()));
      if (d < bd || (d == bd && len < best)) best = len;
    }
    ref_len += best;

    for (int n = 1; n <= max_n; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      std::map<Sent, int> clip;
      for (const Sent& r : refs[s])
        for (const auto& [g, c] : ngram_counts(r, n)) clip[g] = std::max(clip[g], c);
      for (const auto& [g, c] : hyp_counts) {
        total[static_cast<std::size_t>(n - 1)] += c;
        auto it = clip.find(g);
        if (it != clip.end())
          matched[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }

  double log_precision = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (matched[static_cast<std::size_t>(n)] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[static_cast<std::size_t>(n)]) /
                              static_cast<double>(total[static_cast<std::size_t>(n)]));
  }
  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) /
                                             static_cast<double>(hyp_len));
  return bp * std::exp(log_precision / max_n);
}

double rouge_l(const Sent& hyp, const Sent& ref) {
  if (ref.empty()) throw std::invalid_argument("rouge_l: empty reference");
  if (hyp.empty()) return 0.0;
  const int lcs = lcs_length(hyp, ref);
  if (lcs == 0) return 0.0;
  constexpr double beta = 1.2;
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return (1.0 + beta * beta) * p * r / (r + beta * beta * p);
}

double rouge_l_multi(const Sent& hyp, const std::vector<Sent>& refs) {
  double best = 0.0;
  for (const Sent& r : refs) best = std::max(best, rouge_l(hyp, r));
  return best;
}

double meteor_lite(const Sent& hyp, const Sent& ref) {
  if (ref.empty()) throw std::invalid_argument("meteor_lite: empty reference");
  if (hyp.empty()) return 0.0;
  const AlignResult a = ChunkMinimizer(hyp, ref).run();
  if (a.matches == 0) return 0.0;
  const double m = a.matches;
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

double meteor_lite_multi(const Sent& hyp, const std::vector<Sent>& refs) {
  double best = 0.0;
  for (const Sent& r : refs) best = std::max(best, meteor_lite(hyp, r));
  return best;
}

CiderIdf build_cider_idf(const std::vector<std::vector<Sent>>& refs_per_image) {
  if (refs_per_image.empty()) throw std::invalid_argument("cider: empty reference corpus");
  CiderIdf idf;
  idf.n_images = static_cast<int>(refs_per_image.size());
  for (const auto& refs : refs_per_image) {
    std::set<Sent> grams;
    for (const Sent& r : refs)
      for (int n = 1; n <= kMaxOrder; ++n)
        for (const auto& [g, c] : ngram_counts(r, n)) grams.insert(g);
    for (const Sent& g : grams) idf.doc_freq[g] += 1;
  }
  return idf;
}

namespace {

struct TfIdfVec {
  std::map<Sent, double> w[kMaxOrder];
  double norm[kMaxOrder] = {0, 0, 0, 0};
};

TfIdfVec tfidf(const Sent& s, const CiderIdf& idf) {
  TfIdfVec v;
  const double log_n = std::log(static_cast<double>(idf.n_images));
  for (int n = 1; n <= kMaxOrder; ++n) {
    for (const auto& [g, c] : ngram_counts(s, n)) {
      auto it = idf.doc_freq.find(g);
      const double df = it == idf.doc_freq.end() ? 1.0 : std::max(1, it->second);
      const double w = c * (log_n - std::log(df));
      v.w[n - 1][g] = w;
      v.norm[n - 1] += w * w;
    }
    v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
  }
  return v;
}

}  // namespace

double cider_d(const Sent& hyp, const std::vector<Sent>& refs, const CiderIdf& idf,
               double sigma) {
  if (refs.empty()) throw std::invalid_argument("cider_d: no references");
  if (idf.n_images < 1) throw std::invalid_argument("cider_d: empty IDF table");
  if (hyp.empty()) return 0.0;

  const TfIdfVec hv = tfidf(hyp, idf);
  double total = 0.0;
  for (const Sent& ref : refs) {
    const TfIdfVec rv = tfidf(ref, idf);
    const double delta = static_cast<double>(hyp.size()) - static_cast<double>(ref.size());
    const double length_penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
    double sim = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
      if (hv.norm[n] == 0.0 || rv.norm[n] == 0.0) continue;  // empty vectors: 0
      double dot = 0.0;
      for (const auto& [g, w] : hv.w[n]) {
        auto it = rv.w[n].find(g);
        if (it != rv.w[n].end()) dot += std::min(w, it->second) * it->second;
      }
      sim += dot / (hv.norm[n] * rv.norm[n]);
    }
    total += 10.0 * length_penalty * sim / kMaxOrder;
  }
  return total / static_cast<double>(refs.size());
}

MetricReport evaluate(const std::vector<Sent>& hyps,
                      const std::vector<std::vector<Sent>>& refs,
                      const std::vector<std::string>& ids) {
  if (hyps.empty()) throw std::invalid_argument("evaluate: empty corpus");
  if (hyps.size() != refs.size())
    throw std::invalid_argument("evaluate: hypothesis/reference count mismatch");

  MetricReport report;
  const CiderIdf idf = build_cider_idf(refs);

  for (int n = 1; n <= kMaxOrder; ++n) report.bleu[n - 1] = bleu(hyps, refs, n);

  for (std::size_t i = 0; i < hyps.size(); ++i) {
    SentenceScores s;
    s.id = i < ids.size() ? ids[i] : std::to_string(i);
    for (int n = 1; n <= kMaxOrder; ++n)
      s.bleu[n - 1] = bleu({hyps[i]}, {refs[i]}, n);
    s.rouge_l = rouge_l_multi(hyps[i], refs[i]);
    s.meteor = meteor_lite_multi(hyps[i], refs[i]);
    s.cider = cider_d(hyps[i], refs[i], idf);
    report.rouge_l += s.rouge_l;
    report.meteor += s.meteor;
    report.cider += s.cider;
    report.sentences.push_back(std::move(s));
  }
  const double n = static_cast<double>(hyps.size());
  report.rouge_l /= n;
  report.meteor /= n;
  report.cider /= n;
  return report;
}

}  // namespace capgen::metrics
