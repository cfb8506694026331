#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/ngram.hpp"
#include "subqe/rng.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/text.hpp"

namespace subqe {

/// Bracketed non-speech captions such as "[whispers]".
class CaptionLexicon {
 public:
  CaptionLexicon() = default;
  explicit CaptionLexicon(std::vector<std::string> captions) : captions_(std::move(captions)) {
    for (const auto& c : captions_) {
      const auto t = trim(c);
      if (t.size() < 3 || t.front() != '[' || t.back() != ']' || trim(t.substr(1, t.size() - 2)).empty()) {
        throw Error(ErrorCode::InvalidArgument, "caption '" + c + "' is not a bracketed, non-blank caption");
      }
    }
  }

  static CaptionLexicon defaults() {
    return CaptionLexicon({"[whispers]", "[sighs]", "[laughs]", "[music]", "[applause]", "[coughs]", "[gasps]",
                           "[groans]", "[screams]", "[sobs]", "[chuckles]", "[door slams]", "[phone rings]",
                           "[footsteps]", "[indistinct chatter]", "[sniffles]", "[laughter]", "[grunts]",
                           "[thunder]", "[silence]"});
  }

  /// One caption per line; blank lines are ignored.
  static CaptionLexicon load(std::istream& in) {
    std::vector<std::string> captions;
    std::string line;
    while (std::getline(in, line)) {
      const auto t = trim(line);
      if (!t.empty()) captions.emplace_back(t);
    }
    return CaptionLexicon(std::move(captions));
  }

  const std::vector<std::string>& captions() const noexcept { return captions_; }
  bool empty() const noexcept { return captions_.empty(); }

 private:
  std::vector<std::string> captions_;
};

namespace detail {

inline bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

/// Offsets where a caption may be inserted: the start of the text, after a
/// newline, and after sentence-final punctuation followed by a space.
inline std::vector<std::size_t> caption_slots(const std::string& text) {
  std::vector<std::size_t> slots{0};
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (text[i] == '\n') {
      slots.push_back(i + 1);
    } else if (is_sentence_end(text[i]) && text[i + 1] == ' ') {
      std::size_t j = i + 1;
      while (j < text.size() && text[j] == ' ') ++j;
      if (j < text.size()) slots.push_back(j);
    }
  }
  return slots;
}

}  // namespace detail

/// Loose sample: a caption inserted into the source; target untouched.
inline BilingualPair add_captions(const BilingualPair& pair, const CaptionLexicon& lexicon, SeededRng& rng) {
  if (lexicon.empty()) throw Error(ErrorCode::EmptyLexicon, "caption lexicon is empty");
  if (trim(pair.source_text).empty()) throw Error(ErrorCode::InvalidArgument, "source text is empty");
  const auto& caption = lexicon.captions()[rng.uniform_index(lexicon.captions().size())];
  const auto slots = detail::caption_slots(pair.source_text);
  const std::size_t at = slots[rng.uniform_index(slots.size())];
  BilingualPair out = pair;
  out.source_text = pair.source_text.substr(0, at) + caption + " " + pair.source_text.substr(at);
  out.provenance = Provenance::AddedCaptions;
  return out;
}

/// Uniform random permutation of the whitespace tokens, re-drawn until it
/// differs from the original whenever that is possible.
inline std::vector<std::string> scramble_tokens(const std::vector<std::string>& tokens, SeededRng& rng) {
  if (tokens.size() < 2) throw Error(ErrorCode::TooShort, "scrambling needs at least 2 tokens");
  const bool has_distinct = std::any_of(tokens.begin(), tokens.end(), [&](const auto& t) { return t != tokens[0]; });
  std::vector<std::string> out = tokens;
  do {
    out = tokens;
    rng.shuffle(out);
  } while (has_distinct && out == tokens);
  return out;
}

/// Loose sample: target word order scrambled.
inline BilingualPair scramble_target(const BilingualPair& pair, SeededRng& rng) {
  BilingualPair out = pair;
  out.target_text = join(scramble_tokens(split_ws(pair.target_text), rng));
  out.provenance = Provenance::ScrambledText;
  return out;
}

namespace detail {

inline std::vector<BilingualPair> swap_targets(const std::vector<BilingualPair>& pairs, SeededRng& rng,
                                               Provenance provenance) {
  if (pairs.size() < 2) throw Error(ErrorCode::CorpusTooSmall, "need at least 2 pairs to reassign targets");
  const std::size_t n = pairs.size();
  std::vector<BilingualPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // uniform over the other pairs; a few re-draws avoid textual duplicates of the own target
    std::size_t j = 0;
    for (int attempt = 0; attempt < 16; ++attempt) {
      j = rng.uniform_index(n - 1);
      if (j >= i) ++j;
      if (pairs[j].target_text != pairs[i].target_text) break;
    }
    BilingualPair p = pairs[i];
    p.target_text = pairs[j].target_text;
    p.target_block_id = pairs[j].target_block_id;
    p.provenance = provenance;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

/// Bad samples: every source paired with the target of a different pair.
inline std::vector<BilingualPair> random_align(const std::vector<BilingualPair>& pairs, SeededRng& rng) {
  return detail::swap_targets(pairs, rng, Provenance::RandomlyAligned);
}

/// Corpus-level negative for the forest training data; same contract as random_align.
inline std::vector<BilingualPair> random_sentence_swap(const std::vector<BilingualPair>& pairs, SeededRng& rng) {
  return detail::swap_targets(pairs, rng, Provenance::RandomlyAligned);
}

struct DriftReport {
  std::size_t emitted = 0;
  std::size_t no_neighbor = 0;
  std::size_t unaligned = 0;
};

/// Hard negatives: each aligned pair's target replaced by a target block at
/// most `window` positions away (never the aligned block itself).
inline std::vector<BilingualPair> drift_align(const SubtitleFile& src_file, const SubtitleFile& tgt_file,
                                              const std::vector<BilingualPair>& aligned, std::size_t window,
                                              SeededRng& rng, DriftReport* report = nullptr) {
  (void)src_file;
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "drift window must be >= 1");
  std::unordered_map<std::int64_t, std::size_t> position;
  for (std::size_t k = 0; k < tgt_file.blocks.size(); ++k) position.emplace(tgt_file.blocks[k].index, k);
  DriftReport local;
  std::vector<BilingualPair> out;
  const auto n = static_cast<std::ptrdiff_t>(tgt_file.blocks.size());
  for (const auto& pair : aligned) {
    if (!pair.target_block_id || !position.contains(*pair.target_block_id)) {
      ++local.unaligned;
      continue;
    }
    const auto j = static_cast<std::ptrdiff_t>(position.at(*pair.target_block_id));
    std::vector<std::ptrdiff_t> candidates;
    const auto w = static_cast<std::ptrdiff_t>(window);
    for (std::ptrdiff_t d = -w; d <= w; ++d) {
      if (d != 0 && j + d >= 0 && j + d < n) candidates.push_back(j + d);
    }
    if (candidates.empty()) {
      ++local.no_neighbor;
      continue;
    }
    const auto pick = static_cast<std::size_t>(candidates[rng.uniform_index(candidates.size())]);
    const std::string text = block_text(tgt_file.blocks[pick]);
    if (trim(text).empty()) {
      ++local.no_neighbor;
      continue;
    }
    BilingualPair p = pair;
    p.target_text = text;
    p.target_block_id = tgt_file.blocks[pick].index;
    p.provenance = Provenance::DriftedAligned;
    out.push_back(std::move(p));
    ++local.emitted;
  }
  if (report) *report = local;
  return out;
}

/// Removes the two least frequent tokens (earliest position wins ties) and
/// inserts two unigram-sampled tokens at random positions.
inline TokenSequence substitute_rare_words(const TokenSequence& sentence, const FrequencyTable& freq, SeededRng& rng) {
  if (sentence.size() < 3) throw Error(ErrorCode::TooShort, "rare-word substitution needs at least 3 tokens");
  std::vector<std::size_t> order(sentence.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return freq.count(sentence[a]) < freq.count(sentence[b]); });
  const std::size_t drop_a = std::min(order[0], order[1]);
  const std::size_t drop_b = std::max(order[0], order[1]);
  TokenSequence out;
  out.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (i != drop_a && i != drop_b) out.push_back(sentence[i]);
  }
  for (int k = 0; k < 2; ++k) {
    const std::string& word = freq.sample(rng);
    const std::size_t at = rng.uniform_index(out.size() + 1);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), word);
  }
  return out;
}

/// Picks one trigram whose leading bigram is known and replaces its last word
/// with a draw from the conditional distribution (one re-draw if unchanged).
inline TokenSequence trigram_substitute(const TokenSequence& sentence, const TrigramTable& table, SeededRng& rng) {
  if (sentence.size() < 3) throw Error(ErrorCode::TooShort, "trigram substitution needs at least 3 tokens");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i + 3 <= sentence.size(); ++i) {
    if (table.find(sentence[i], sentence[i + 1])) eligible.push_back(i);
  }
  if (eligible.empty()) throw Error(ErrorCode::NoEligibleTrigram, "no trigram prefix of the sentence is in the table");
  const std::size_t at = eligible[rng.uniform_index(eligible.size())];
  const auto& dist = *table.find(sentence[at], sentence[at + 1]);
  std::string word = table.sample(dist, rng);
  if (word == sentence[at + 2]) word = table.sample(dist, rng);
  TokenSequence out = sentence;
  out[at + 2] = word;
  return out;
}

enum class Corruption { None, RareWordSubstitution, RandomSentence, TrigramSubstitution };

inline std::string_view to_string(Corruption c) {
  switch (c) {
    case Corruption::None: return "none";
    case Corruption::RareWordSubstitution: return "rare_word_substitution";
    case Corruption::RandomSentence: return "random_sentence";
    case Corruption::TrigramSubstitution: return "trigram_substitution";
  }
  return "none";
}

struct RfcSample {
  BilingualPair pair;
  bool positive = true;
  Corruption corruption = Corruption::None;
};

struct RfcCorpusReport {
  std::size_t positives = 0;
  std::array<std::size_t, 3> negatives{};  // rare-word, random sentence, trigram
  std::size_t skipped = 0;
};

/// Source-side language statistics used by the word-level corruptions.
struct CorruptionTables {
  FrequencyTable frequencies;
  TrigramTable trigrams;

  static CorruptionTables from_sources(const std::vector<BilingualPair>& pairs) {
    std::vector<TokenSequence> corpus;
    corpus.reserve(pairs.size());
    for (const auto& p : pairs) corpus.push_back(tokenize(p.source_text));
    return {FrequencyTable::from_corpus(corpus), TrigramTable::from_corpus(corpus)};
  }
};

/// Positives are the parallel pairs themselves; round(1.2 x positives)
/// negatives are produced in equal thirds by the three corruptions. Word-level
/// corruptions edit the source side. A sentence a corruption cannot handle, or
/// one it leaves unchanged, is skipped (and counted) and another one is drawn.
inline std::vector<RfcSample> build_rfc_corpus(const std::vector<BilingualPair>& parallel, const CorruptionTables& tables,
                                               SeededRng& rng, RfcCorpusReport* report = nullptr,
                                               double negative_ratio = 1.2) {
  RfcCorpusReport local;
  std::vector<RfcSample> out;
  if (parallel.empty()) {
    if (report) *report = local;
    return out;
  }
  for (const auto& p : parallel) out.push_back({p, true, Corruption::None});
  local.positives = parallel.size();

  const auto n_neg = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(parallel.size())));
  std::array<std::size_t, 3> quota{n_neg / 3, n_neg / 3, n_neg / 3};
  for (std::size_t r = 0; r < n_neg % 3; ++r) ++quota[r];

  const Corruption kinds[3] = {Corruption::RareWordSubstitution, Corruption::RandomSentence,
                               Corruption::TrigramSubstitution};
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t made = 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 100 * (quota[k] + 1);
    while (made < quota[k] && attempts++ < max_attempts) {
      const std::size_t i = rng.uniform_index(parallel.size());
      RfcSample s{parallel[i], false, kinds[k]};
      try {
        switch (kinds[k]) {
          case Corruption::RareWordSubstitution:
            s.pair.source_text = join(substitute_rare_words(tokenize(parallel[i].source_text), tables.frequencies, rng));
            break;
          case Corruption::TrigramSubstitution:
            s.pair.source_text = join(trigram_substitute(tokenize(parallel[i].source_text), tables.trigrams, rng));
            break;
          case Corruption::RandomSentence: {
            if (parallel.size() < 2) throw Error(ErrorCode::CorpusTooSmall, "need 2 pairs for a random swap");
            std::size_t j = rng.uniform_index(parallel.size() - 1);
            if (j >= i) ++j;
            s.pair.target_text = parallel[j].target_text;
            s.pair.provenance = Provenance::RandomlyAligned;
            break;
          }
          case Corruption::None:
            break;
        }
      } catch (const Error&) {
        ++local.skipped;
        continue;
      }
      if (s.pair.source_text == parallel[i].source_text && s.pair.target_text == parallel[i].target_text) {
        ++local.skipped;
        continue;
      }
      out.push_back(std::move(s));
      ++made;
    }
    local.negatives[k] = made;
  }
  if (report) *report = local;
  return out;
}

/// Seeded shuffle followed by a `train_fraction` / rest split.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::vector<T> items, SeededRng& rng,
                                                            double train_fraction = 0.8) {
  rng.shuffle(items);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(items.size())));
  std::vector<T> test(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
  items.resize(n_train);
  return {std::move(items), std::move(test)};
}

/// Sampling weight (in %) of each training-data source.
struct SourceWeights {
  double statistical = 0.0;
  double good_pairs = 0.0;
  double added_captions = 0.0;
  double scrambled_text = 0.0;
  double drifted_aligned = 0.0;
  double randomly_aligned = 0.0;

  std::array<double, 6> as_array() const {
    return {statistical, good_pairs, added_captions, scrambled_text, drifted_aligned, randomly_aligned};
  }
  friend bool operator==(const SourceWeights&, const SourceWeights&) = default;
};

inline constexpr Provenance kSourceOrder[6] = {Provenance::StatisticalClassification, Provenance::GoodPairsFile,
                                               Provenance::AddedCaptions,             Provenance::ScrambledText,
                                               Provenance::DriftedAligned,            Provenance::RandomlyAligned};

/// Per-language source mix of the production training data; unknown
/// languages fall back to German.
inline SourceWeights default_source_weights(const std::string& language) {
  static const std::map<std::string, SourceWeights> kTable = {
      {"fr", {18.83, 33.76, 6.58, 6.58, 17.13, 17.13}},
      {"de", {17.26, 32.14, 7.07, 7.07, 18.23, 18.23}},
      {"it", {16.44, 32.95, 6.57, 6.57, 18.74, 18.74}},
      {"pt", {16.47, 33.09, 6.59, 6.59, 18.63, 18.63}},
      {"es", {17.82, 29.15, 7.01, 7.01, 19.50, 19.50}},
  };
  const auto it = kTable.find(language);
  return it == kTable.end() ? kTable.at("de") : it->second;
}

}  // namespace subqe
