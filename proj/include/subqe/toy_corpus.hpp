#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "subqe/embeddings.hpp"
#include "subqe/rng.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/synth.hpp"
#include "subqe/text.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe {

/// A small synthetic language pair: a bigram source grammar, a dictionary
/// translation with a few structural rules, and aligned embeddings.
struct ToyConfig {
  std::size_t vocabulary = 300;
  std::size_t embed_dim = 16;
  double embedding_noise = 0.25;
  std::size_t successors = 6;
  std::size_t topic_words = 25;
  double topic_rate = 0.35;
  std::size_t min_words = 2;
  std::size_t max_words = 22;
  // fractions of the vocabulary with special translation behaviour
  double dropped_rate = 0.05;
  double compound_rate = 0.05;
  double swapped_rate = 0.15;
  // verb-like words move to the end of the target clause
  double verb_rate = 0.15;
  std::uint64_t seed = 7;
};

struct ToyCorpus {
  EmbeddingTable source_embeddings{1, "src"};
  EmbeddingTable target_embeddings{1, "tgt"};
  std::vector<AlignedEpisode> episodes;
};

class ToyLanguage {
 public:
  explicit ToyLanguage(const ToyConfig& cfg) : cfg_(cfg), rng_(derive_seed(cfg.seed, "toy-language")) {
    build_words();
    build_grammar();
  }

  const ToyConfig& config() const { return cfg_; }
  const std::vector<std::string>& source_words() const { return src_; }

  TokenSequence sentence(const std::vector<std::size_t>& topic, SeededRng& rng) const {
    const std::size_t n = cfg_.min_words + rng.uniform_index(cfg_.max_words - cfg_.min_words + 1);
    TokenSequence out;
    std::size_t w = rng.uniform_index(src_.size());
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(src_[w]);
      if (!topic.empty() && rng.bernoulli(cfg_.topic_rate)) {
        w = topic[rng.uniform_index(topic.size())];
      } else {
        w = next_[w][rng.uniform_index(next_[w].size())];
      }
    }
    static const char* kEnds[] = {".", "?", "!"};
    out.push_back(kEnds[rng.categorical({0.7, 0.2, 0.1})]);
    return out;
  }

  std::vector<std::size_t> topic(SeededRng& rng) const {
    std::vector<std::size_t> ids(src_.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(std::min(cfg_.topic_words, ids.size()));
    return ids;
  }

  TokenSequence translate(const TokenSequence& source_in) const {
    const TokenSequence source = verb_final(source_in);
    TokenSequence out;
    for (std::size_t i = 0; i < source.size(); ++i) {
      auto it = index_.find(source[i]);
      if (it == index_.end()) {
        out.push_back(source[i]);
        continue;
      }
      const std::size_t w = it->second;
      if (kind_[w] == Kind::Swapped && i + 1 < source.size() && index_.contains(source[i + 1])) {
        append(out, index_.at(source[i + 1]));
        append(out, w);
        ++i;
        continue;
      }
      append(out, w);
    }
    return out;
  }

  /// Word vectors: every concept has one base vector, and each language
  /// sees it through independent noise.
  std::pair<EmbeddingTable, EmbeddingTable> embeddings(const CaptionLexicon& captions) const {
    SeededRng rng(derive_seed(cfg_.seed, "toy-embeddings"));
    const std::size_t d = cfg_.embed_dim;
    EmbeddingTable s(d, "src"), t(d, "tgt");
    auto base = [&] {
      std::vector<double> v(d);
      for (auto& x : v) x = rng.normal();
      return v;
    };
    auto noisy = [&](const std::vector<double>& b) {
      std::vector<double> v(b);
      for (auto& x : v) x += cfg_.embedding_noise * rng.normal();
      return v;
    };
    for (std::size_t w = 0; w < src_.size(); ++w) {
      const auto b = base();
      s.add(src_[w], noisy(b));
      if (kind_[w] != Kind::Dropped) t.add(tgt_[w], noisy(b));
      if (kind_[w] == Kind::Compound) t.add(extra_[w], noisy(base()));
    }
    for (const char* p : {".", "?", "!"}) {
      const auto b = base();
      s.add(p, noisy(b));
      t.add(p, noisy(b));
    }
    std::set<std::string> caption_tokens;
    for (const auto& c : captions.captions()) {
      for (const auto& tok : tokenize(c)) caption_tokens.insert(tok);
    }
    for (const auto& tok : caption_tokens) {
      if (!s.contains(tok)) s.add(tok, base());
    }
    return {std::move(s), std::move(t)};
  }

 private:
  enum class Kind { Plain, Dropped, Compound, Swapped };

  // The first verb of a sentence is translated at the end of the clause,
  // just before any final punctuation.
  TokenSequence verb_final(const TokenSequence& source) const {
    std::size_t end = source.size();
    while (end > 0 && !index_.contains(source[end - 1])) --end;
    for (std::size_t i = 0; i + 1 < end; ++i) {
      const auto it = index_.find(source[i]);
      if (it == index_.end() || !verb_[it->second]) continue;
      TokenSequence out(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(i));
      out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(i + 1),
                 source.begin() + static_cast<std::ptrdiff_t>(end));
      out.push_back(source[i]);
      out.insert(out.end(), source.begin() + static_cast<std::ptrdiff_t>(end), source.end());
      return out;
    }
    return source;
  }

  void append(TokenSequence& out, std::size_t w) const {
    if (kind_[w] == Kind::Dropped) return;
    out.push_back(tgt_[w]);
    if (kind_[w] == Kind::Compound) out.push_back(extra_[w]);
  }

  std::string word(const std::vector<std::string>& syllables, std::set<std::string>& used) {
    while (true) {
      std::string w;
      const std::size_t n = 2 + rng_.uniform_index(2);
      for (std::size_t i = 0; i < n; ++i) w += syllables[rng_.uniform_index(syllables.size())];
      if (used.insert(w).second) return w;
    }
  }

  void build_words() {
    static const std::vector<std::string> kSrcSyl = {"ka", "lo", "mi", "re", "tu", "sa", "no", "vi", "pe", "da",
                                                     "go", "ri", "ma", "te", "su", "bo", "li", "na", "fe", "zu"};
    static const std::vector<std::string> kTgtSyl = {"ash", "urk", "eth", "ol", "ing", "arn", "es", "ub", "yr",
                                                     "ond", "ask", "ew", "il", "orm", "ad", "ux", "em", "ov"};
    std::set<std::string> used_s, used_t;
    for (const char* c : {"whispers", "sighs", "laughs", "music", "applause", "coughs", "gasps", "groans", "screams",
                          "sobs", "chuckles", "door", "slams", "phone", "rings", "footsteps", "indistinct", "chatter",
                          "sniffles", "laughter", "grunts", "thunder", "silence"}) {
      used_s.insert(c);
    }
    for (std::size_t w = 0; w < cfg_.vocabulary; ++w) {
      src_.push_back(word(kSrcSyl, used_s));
      tgt_.push_back(word(kTgtSyl, used_t));
      const double u = rng_.uniform01();
      Kind k = Kind::Plain;
      if (u < cfg_.dropped_rate) k = Kind::Dropped;
      else if (u < cfg_.dropped_rate + cfg_.compound_rate) k = Kind::Compound;
      else if (u < cfg_.dropped_rate + cfg_.compound_rate + cfg_.swapped_rate) k = Kind::Swapped;
      kind_.push_back(k);
      verb_.push_back(rng_.bernoulli(cfg_.verb_rate));
      extra_.push_back(k == Kind::Compound ? word(kTgtSyl, used_t) : std::string());
      index_.emplace(src_.back(), w);
    }
  }

  void build_grammar() {
    next_.resize(src_.size());
    for (auto& succ : next_) {
      for (std::size_t k = 0; k < cfg_.successors; ++k) succ.push_back(rng_.uniform_index(src_.size()));
    }
  }

  ToyConfig cfg_;
  SeededRng rng_;
  std::vector<std::string> src_, tgt_, extra_;
  std::vector<Kind> kind_;
  std::vector<bool> verb_;
  std::vector<std::vector<std::size_t>> next_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Episode `k` of a toy corpus as a pair of subtitle files with shared timing.
inline std::pair<SubtitleFile, SubtitleFile> toy_episode(const ToyLanguage& lang, std::size_t blocks,
                                                         SeededRng& rng) {
  SubtitleFile s{"src", {}}, t{"tgt", {}};
  const auto topic = lang.topic(rng);
  std::int64_t clock = 1000;
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto src = lang.sentence(topic, rng);
    const auto tgt = lang.translate(src);
    const std::int64_t dur = 1200 + static_cast<std::int64_t>(rng.uniform_index(2500));
    const std::int64_t idx = static_cast<std::int64_t>(b) + 1;
    s.blocks.push_back({idx, {clock}, {clock + dur}, {join(src)}});
    t.blocks.push_back({idx, {clock + 40}, {clock + dur - 40}, {join(tgt)}});
    clock += dur + 300 + static_cast<std::int64_t>(rng.uniform_index(1500));
  }
  return {std::move(s), std::move(t)};
}

inline ToyCorpus make_toy_corpus(const ToyLanguage& lang, std::size_t episodes, std::size_t blocks_per_episode,
                                 std::uint64_t seed, const CaptionLexicon& captions = CaptionLexicon::defaults()) {
  ToyCorpus c;
  std::tie(c.source_embeddings, c.target_embeddings) = lang.embeddings(captions);
  SeededRng rng(derive_seed(seed, "toy-episodes"));
  for (std::size_t e = 0; e < episodes; ++e) {
    auto [s, t] = toy_episode(lang, blocks_per_episode, rng);
    AlignedEpisode ep{std::move(s), std::move(t), {}};
    ep.pairs = align_by_timestamp(ep.source, ep.target);
    c.episodes.push_back(std::move(ep));
  }
  return c;
}

/// Labeled pairs drawn from the episodes through the regular dataset builder,
/// with the aligned pairs doubling as the good-pairs pool.
inline AssembledDataset toy_dataset(const std::vector<AlignedEpisode>& episodes, std::size_t n_samples,
                                    std::uint64_t seed, const SourceWeights& weights = default_source_weights("de")) {
  DatasetSources src;
  src.episodes = episodes;
  for (const auto& ep : episodes) src.good_pairs.insert(src.good_pairs.end(), ep.pairs.begin(), ep.pairs.end());
  SeededRng rng(derive_seed(seed, "toy-dataset"));
  return build_dataset(src, weights, n_samples, rng, "toy");
}

}  // namespace subqe
