#include "capgen/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "capgen/rng.hpp"

namespace capgen::text {

namespace {

const char* kReservedNames[Vocabulary::kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::vector<std::string> whitespace_split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// Keep lowercase letters only; digits, punctuation, and anything non-ASCII go.
std::string strip_to_letters(const std::string& tok) {
  std::string out;
  out.reserve(tok.size());
  for (char c : tok)
    if (c >= 'a' && c <= 'z') out.push_back(c);
  return out;
}

}  // namespace

CleaningRules CleaningRules::defaults() {
  CleaningRules rules;
  // Every key carries punctuation, so cleaned output can never re-trigger a
  // rewrite and clean_text stays idempotent.
  rules.abbreviations = {
      {"a.", "artery"},       {"aa.", "arteries"},   {"v.", "vein"},
      {"vv.", "veins"},       {"m.", "muscle"},      {"n.", "nerve"},
      {"lig.", "ligament"},   {"art.", "artery"},    {"pt.", "patient"},
      {"r.", "right"},        {"l.", "left"},        {"lat.", "lateral"},
      {"med.", "medial"},     {"ant.", "anterior"},  {"post.", "posterior"},
      {"sup.", "superior"},   {"inf.", "inferior"},  {"prox.", "proximal"},
      {"dist.", "distal"},    {"approx.", "approximately"},
      {"fig.", "figure"},     {"e.g.", "for example"},
      {"i.e.", "that is"},    {"etc.", "et cetera"}, {"cm.", "centimeters"},
      {"mm.", "millimeters"},
  };
  rules.contractions = {
      {"i've", "i have"},         {"i'm", "i am"},           {"i'll", "i will"},
      {"i'd", "i would"},         {"it's", "it is"},         {"that's", "that is"},
      {"there's", "there is"},    {"here's", "here is"},     {"what's", "what is"},
      {"let's", "let us"},        {"we're", "we are"},       {"we've", "we have"},
      {"we'll", "we will"},       {"you're", "you are"},     {"you've", "you have"},
      {"you'll", "you will"},     {"don't", "do not"},       {"doesn't", "does not"},
      {"didn't", "did not"},      {"can't", "cannot"},       {"won't", "will not"},
      {"isn't", "is not"},        {"aren't", "are not"},     {"wasn't", "was not"},
      {"weren't", "were not"},    {"hasn't", "has not"},     {"haven't", "have not"},
      {"shouldn't", "should not"}, {"couldn't", "could not"}, {"wouldn't", "would not"},
  };
  return rules;
}

CleaningRules CleaningRules::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cleaning rules: cannot open " + path);
  nlohmann::json j;
  in >> j;
  CleaningRules rules;
  for (auto& [k, v] : j.at("abbreviations").items()) rules.abbreviations[k] = v;
  for (auto& [k, v] : j.at("contractions").items()) rules.contractions[k] = v;
  rules.max_len = j.value("max_len", 16);
  return rules;
}

void CleaningRules::save_json(const std::string& path) const {
  nlohmann::json j;
  j["abbreviations"] = abbreviations;
  j["contractions"] = contractions;
  j["max_len"] = max_len;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cleaning rules: cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<std::string> clean_text(const std::string& raw, const CleaningRules& rules) {
  std::string lowered;
  lowered.reserve(raw.size());
  for (char c : raw)
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::vector<std::string> out;
  for (const std::string& tok : whitespace_split(lowered)) {
    std::string expanded = tok;
    if (auto it = rules.abbreviations.find(tok); it != rules.abbreviations.end())
      expanded = it->second;
    else if (auto it2 = rules.contractions.find(tok); it2 != rules.contractions.end())
      expanded = it2->second;
    for (const std::string& piece : whitespace_split(expanded)) {
      std::string letters = strip_to_letters(piece);
      if (!letters.empty()) out.push_back(std::move(letters));
    }
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             int min_count) {
  if (corpus.empty()) throw std::invalid_argument("vocabulary: empty training corpus");
  Vocabulary v;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) v.counts_[tok] += 1;

  std::vector<std::pair<std::string, std::int64_t>> retained;
  for (const auto& [tok, c] : v.counts_)
    if (c >= min_count) retained.emplace_back(tok, c);
  std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  v.id_to_token_.assign(kReservedNames, kReservedNames + kReserved);
  for (const auto& [tok, c] : retained) {
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

std::int64_t Vocabulary::count(const std::string& token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocabulary: cannot open " + path);
  Vocabulary v;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (id < kReserved) {
      if (line != kReservedNames[id])
        throw std::runtime_error("vocabulary: bad reserved-token header at line " +
                                 std::to_string(id + 1));
      v.id_to_token_.push_back(line);
    } else {
      v.token_to_id_[line] = id;
      v.id_to_token_.push_back(line);
    }
    ++id;
  }
  if (id < kReserved) throw std::runtime_error("vocabulary: truncated file " + path);
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
  for (const std::string& tok : id_to_token_) out << tok << "\n";
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        int max_len) {
  const int content = std::min<int>(static_cast<int>(tokens.size()), max_len);
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(max_len) + 2);
  ids.push_back(Vocabulary::kBos);
  for (int i = 0; i < content; ++i) ids.push_back(vocab.id_of(tokens[static_cast<std::size_t>(i)]));
  ids.push_back(Vocabulary::kEos);
  while (ids.size() < static_cast<std::size_t>(max_len) + 2) ids.push_back(Vocabulary::kPad);
  return ids;
}

std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kUnk) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

SplitIndices split_indices(int n_records, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  if (n_records <= 0) throw std::invalid_argument("split: empty input");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");

  std::vector<int> order(static_cast<std::size_t>(n_records));
  for (int i = 0; i < n_records; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const int n_train = static_cast<int>(std::floor(n_records * ratios[0] + 0.5));
  const int n_val = std::min(n_records - n_train,
                             static_cast<int>(std::floor(n_records * ratios[1] + 0.5)));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

}  // namespace capgen::text
