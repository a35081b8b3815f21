#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace capgen::metrics {

// Metrics operate on interned token sequences so the evaluator and the RL
// reward share one engine regardless of whether tokens came from a model
// vocabulary or from raw text.
using Sent = std::vector<int>;

class TokenInterner {
 public:
  int intern(const std::string& token);
  Sent intern_all(const std::vector<std::string>& tokens);

 private:
  std::map<std::string, int> ids_;
};

// Corpus-level BLEU with clipped modified precision over orders 1..max_n,
// geometric mean, and brevity penalty. Zero matches at any order give 0;
// there is no smoothing.
double bleu(const std::vector<Sent>& hyps, const std::vector<std::vector<Sent>>& refs,
            int max_n);

// LCS F-measure with beta = 1.2. Sentence level; corpus score is the mean.
double rouge_l(const Sent& hyp, const Sent& ref);
double rouge_l_multi(const Sent& hyp, const std::vector<Sent>& refs);  // max over refs

// Exact-match unigram alignment maximizing matches then minimizing chunks;
// F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3.
double meteor_lite(const Sent& hyp, const Sent& ref);
double meteor_lite_multi(const Sent& hyp, const std::vector<Sent>& refs);

// Document frequencies per n-gram (n = 1..4), counted once per image over
// that image's reference set. Built once from training references and frozen
// so RL rewards stay stationary.
struct CiderIdf {
  std::map<Sent, int> doc_freq;
  int n_images = 0;
};

CiderIdf build_cider_idf(const std::vector<std::vector<Sent>>& refs_per_image);

// CIDEr-D for one hypothesis: clipped TF-IDF cosine per order, Gaussian
// length penalty (sigma = 6), scaled by 10 and averaged over orders and refs.
double cider_d(const Sent& hyp, const std::vector<Sent>& refs, const CiderIdf& idf,
               double sigma = 6.0);

struct SentenceScores {
  std::string id;
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0;
  double meteor = 0;
  double cider = 0;
};

struct MetricReport {
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0;
  double meteor = 0;
  double cider = 0;
  std::optional<double> spice;  // never computed here; reported as absent
  std::vector<SentenceScores> sentences;
};

// Full corpus evaluation; ids label the per-sentence breakdown.
MetricReport evaluate(const std::vector<Sent>& hyps,
                      const std::vector<std::vector<Sent>>& refs,
                      const std::vector<std::string>& ids = {});

}  // namespace capgen::metrics
