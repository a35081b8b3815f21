#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace capgen::text {

// Token-level rewrite maps applied before punctuation stripping. Shipped
// defaults cover common medical abbreviations and English contractions;
// both maps are editable via a JSON config file.
struct CleaningRules {
  std::map<std::string, std::string> abbreviations;  // "a." -> "artery"
  std::map<std::string, std::string> contractions;   // "i've" -> "i have"
  int max_len = 16;

  static CleaningRules defaults();
  static CleaningRules load_json(const std::string& path);
  void save_json(const std::string& path) const;
};

// Lowercase, expand abbreviations/contractions, drop digits and punctuation,
// tokenize on whitespace. An empty result marks a droppable sample.
std::vector<std::string> clean_text(const std::string& raw, const CleaningRules& rules);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  // Tokens with training-split count >= min_count keep their own id;
  // everything else encodes to UNK. Ids are assigned by descending count,
  // ties broken lexicographically, starting at kReserved.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int min_count = 5);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  std::int64_t count(const std::string& token) const;  // 0 if unseen

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;  // includes the 4 reserved entries
  std::map<std::string, std::int64_t> counts_;
};

// BOS + ids (truncated to max_len content tokens) + EOS, padded with PAD to
// exactly max_len + 2.
std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int max_len = 16);

// Strips reserved tokens and stops at the first EOS.
std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Deterministic per-record partition under the seed: disjoint and exhaustive.
SplitIndices split_indices(int n_records, const std::array<double, 3>& ratios,
                           std::uint64_t seed);

}  // namespace capgen::text
