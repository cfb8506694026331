#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/rng.hpp"
#include "subqe/text.hpp"

namespace subqe {

/// Unigram counts with a deterministic (lexicographic) sampling order.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  static FrequencyTable from_corpus(const std::vector<TokenSequence>& corpus) {
    FrequencyTable t;
    for (const auto& sentence : corpus) {
      for (const auto& tok : sentence) {
        ++t.counts_[tok];
        ++t.total_;
      }
    }
    t.rebuild();
    return t;
  }

  void add(const std::string& token, std::uint64_t count = 1) {
    counts_[token] += count;
    total_ += count;
    rebuild();
  }

  std::uint64_t count(const std::string& token) const {
    const auto it = counts_.find(token);
    return it == counts_.end() ? 0 : it->second;
  }

  std::uint64_t total() const noexcept { return total_; }
  std::size_t vocabulary_size() const noexcept { return counts_.size(); }
  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

  double probability(const std::string& token) const {
    return total_ == 0 ? 0.0 : static_cast<double>(count(token)) / static_cast<double>(total_);
  }

  /// Draws a token with probability proportional to its count.
  const std::string& sample(SeededRng& rng) const {
    if (total_ == 0) throw Error(ErrorCode::Empty, "sampling from an empty frequency table");
    const auto r = static_cast<std::uint64_t>(rng.uniform_index(static_cast<std::size_t>(total_)));
    std::size_t lo = 0, hi = cumulative_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cumulative_[mid].first > r) hi = mid;
      else lo = mid + 1;
    }
    return cumulative_[lo].second;
  }

 private:
  void rebuild() {
    cumulative_.clear();
    std::uint64_t running = 0;
    for (const auto& [tok, c] : counts_) {
      running += c;
      cumulative_.emplace_back(running, tok);
    }
  }

  std::map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  std::vector<std::pair<std::uint64_t, std::string>> cumulative_;
};

inline std::string ngram_key(const TokenSequence& tokens, std::size_t begin, std::size_t n) {
  std::string key;
  for (std::size_t k = 0; k < n; ++k) {
    if (k) key.push_back('\x1f');
    key += tokens[begin + k];
  }
  return key;
}

/// Joint relative frequencies of unigrams, bigrams and trigrams of one language.
class NgramModel {
 public:
  static NgramModel from_corpus(const std::vector<TokenSequence>& corpus) {
    NgramModel m;
    for (const auto& s : corpus) {
      for (std::size_t n = 1; n <= 3; ++n) {
        for (std::size_t i = 0; i + n <= s.size(); ++i) {
          ++m.counts_[n - 1][ngram_key(s, i, n)];
          ++m.totals_[n - 1];
        }
      }
    }
    m.unigrams_ = FrequencyTable::from_corpus(corpus);
    return m;
  }

  /// P(ngram) among all n-grams of the same order; 0 when unseen.
  double probability(const TokenSequence& tokens, std::size_t begin, std::size_t n) const {
    if (n < 1 || n > 3 || totals_[n - 1] == 0) return 0.0;
    const auto it = counts_[n - 1].find(ngram_key(tokens, begin, n));
    if (it == counts_[n - 1].end()) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(totals_[n - 1]);
  }

  const FrequencyTable& unigrams() const noexcept { return unigrams_; }
  std::uint64_t total(std::size_t n) const { return totals_.at(n - 1); }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_[3];
  std::array<std::uint64_t, 3> totals_{};
  FrequencyTable unigrams_;
};

/// For each word bigram, the conditional distribution of the next word.
class TrigramTable {
 public:
  using Distribution = std::vector<std::pair<std::string, double>>;

  static TrigramTable from_corpus(const std::vector<TokenSequence>& corpus) {
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::uint64_t>> counts;
    for (const auto& s : corpus)
      for (std::size_t i = 0; i + 3 <= s.size(); ++i) ++counts[{s[i], s[i + 1]}][s[i + 2]];
    TrigramTable t;
    for (const auto& [bigram, nexts] : counts) {
      std::uint64_t total = 0;
      for (const auto& [w, c] : nexts) total += c;
      Distribution d;
      for (const auto& [w, c] : nexts) d.emplace_back(w, static_cast<double>(c) / static_cast<double>(total));
      t.table_.emplace(bigram, std::move(d));
    }
    return t;
  }

  /// Probabilities are normalized here so callers may pass raw weights.
  void set(const std::string& w1, const std::string& w2, Distribution dist) {
    double total = 0.0;
    for (const auto& [w, p] : dist) total += p;
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "trigram distribution has no mass");
    for (auto& [w, p] : dist) p /= total;
    table_[{w1, w2}] = std::move(dist);
  }

  const Distribution* find(const std::string& w1, const std::string& w2) const {
    const auto it = table_.find({w1, w2});
    return it == table_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return table_.size(); }

  const std::string& sample(const Distribution& dist, SeededRng& rng) const {
    std::vector<double> weights;
    weights.reserve(dist.size());
    for (const auto& [w, p] : dist) weights.push_back(p);
    return dist[rng.categorical(weights)].first;
  }

 private:
  std::map<std::pair<std::string, std::string>, Distribution> table_;
};

}  // namespace subqe
