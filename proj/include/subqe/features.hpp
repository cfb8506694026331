#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "subqe/embeddings.hpp"
#include "subqe/ngram.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/text.hpp"

namespace subqe {

// Slot layout of the translation feature vector:
//   [0]        cosine of the mean word vectors of both sentences
//   [1, 127)   for n = 1..6: 10 row maxima, 10 column maxima and the mean of
//              the n-gram cosine matrix (n-gram vector = mean of word vectors)
//   [127, 199) source unigram/bigram/trigram probabilities (25 + 24 + 23)
//   [199, 271) same for the target
//   [271, 273) source and target token counts
inline constexpr std::size_t kFeatureCount = 273;
inline constexpr std::size_t kMaxNgram = 6;
inline constexpr std::size_t kMaximaPerSide = 10;
inline constexpr std::size_t kSimilarityBlock = 2 * kMaximaPerSide + 1;
inline constexpr std::size_t kSimilarityBegin = 1;
inline constexpr std::size_t kFrequencyBegin = kSimilarityBegin + kMaxNgram * kSimilarityBlock;  // 127
inline constexpr std::size_t kFrequencyPerSide = 25 + 24 + 23;
inline constexpr std::size_t kStructuralBegin = kFrequencyBegin + 2 * kFrequencyPerSide;  // 271
static_assert(kStructuralBegin + 2 == kFeatureCount);

using FeatureVector = std::array<double, kFeatureCount>;

enum class FeatureFamily { AverageSimilarity, Similarity, NgramFrequency, Structural };

inline std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::AverageSimilarity: return "average_vector_similarity";
    case FeatureFamily::Similarity: return "similarity";
    case FeatureFamily::NgramFrequency: return "ngram_frequency";
    case FeatureFamily::Structural: return "structural";
  }
  return "similarity";
}

inline FeatureFamily feature_family(std::size_t slot) {
  if (slot == 0) return FeatureFamily::AverageSimilarity;
  if (slot < kFrequencyBegin) return FeatureFamily::Similarity;
  if (slot < kStructuralBegin) return FeatureFamily::NgramFrequency;
  return FeatureFamily::Structural;
}

/// Human-readable description of every slot, in slot order.
inline std::vector<std::string> feature_layout() {
  std::vector<std::string> names;
  names.reserve(kFeatureCount);
  names.emplace_back("avg_vector_cosine");
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    const std::string g = std::to_string(n) + "gram";
    for (std::size_t k = 0; k < kMaximaPerSide; ++k) names.push_back(g + "_row_max_" + std::to_string(k));
    for (std::size_t k = 0; k < kMaximaPerSide; ++k) names.push_back(g + "_col_max_" + std::to_string(k));
    names.push_back(g + "_matrix_mean");
  }
  for (const char* side : {"src", "tgt"}) {
    for (std::size_t k = 0; k < 25; ++k) names.push_back(std::string(side) + "_unigram_prob_" + std::to_string(k));
    for (std::size_t k = 0; k < 24; ++k) names.push_back(std::string(side) + "_bigram_prob_" + std::to_string(k));
    for (std::size_t k = 0; k < 23; ++k) names.push_back(std::string(side) + "_trigram_prob_" + std::to_string(k));
  }
  names.emplace_back("src_token_count");
  names.emplace_back("tgt_token_count");
  return names;
}

struct FeatureResources {
  const EmbeddingTable& source_embeddings;
  const EmbeddingTable& target_embeddings;
  const NgramModel& source_ngrams;
  const NgramModel& target_ngrams;
};

namespace detail {

inline std::vector<std::vector<double>> in_vocab_vectors(const TokenSequence& tokens, const EmbeddingTable& table) {
  std::vector<std::vector<double>> out;
  for (const auto& t : tokens) {
    const auto v = table.find(t);
    if (!v.empty()) out.emplace_back(v.begin(), v.end());
  }
  return out;
}

inline std::vector<double> mean_vector(const std::vector<std::vector<double>>& vecs, std::size_t begin, std::size_t n,
                                       std::size_t dim) {
  std::vector<double> m(dim, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t d = 0; d < dim; ++d) m[d] += vecs[begin + k][d];
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

inline std::vector<std::vector<double>> ngram_vectors(const std::vector<std::vector<double>>& vecs, std::size_t n,
                                                      std::size_t dim) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i + n <= vecs.size(); ++i) out.push_back(mean_vector(vecs, i, n, dim));
  return out;
}

inline void fill_frequency_side(const TokenSequence& tokens, const NgramModel& model, double* out) {
  std::size_t slot = 0;
  const std::size_t widths[3] = {25, 24, 23};
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t k = 0; k < widths[n - 1]; ++k, ++slot) {
      out[slot] = (k + n <= tokens.size()) ? model.probability(tokens, k, n) : 0.0;
    }
  }
}

}  // namespace detail

/// Missing statistics (short sentences, sides emptied by OOV removal) stay 0.
inline FeatureVector extract_features(const TokenSequence& src, const TokenSequence& tgt, const FeatureResources& res) {
  FeatureVector f{};
  const std::size_t dim = res.source_embeddings.dim();
  const auto sv = detail::in_vocab_vectors(src, res.source_embeddings);
  const auto tv = detail::in_vocab_vectors(tgt, res.target_embeddings);

  if (!sv.empty() && !tv.empty()) {
    f[0] = cosine(detail::mean_vector(sv, 0, sv.size(), dim), detail::mean_vector(tv, 0, tv.size(), dim));
  }
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    const auto sg = detail::ngram_vectors(sv, n, dim);
    const auto tg = detail::ngram_vectors(tv, n, dim);
    if (sg.empty() || tg.empty()) continue;
    double* block = f.data() + kSimilarityBegin + (n - 1) * kSimilarityBlock;
    std::vector<double> col_max(tg.size(), -1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < sg.size(); ++i) {
      double row_max = -1.0;
      for (std::size_t j = 0; j < tg.size(); ++j) {
        const double c = cosine(sg[i], tg[j]);
        sum += c;
        row_max = std::max(row_max, c);
        col_max[j] = std::max(col_max[j], c);
      }
      if (i < kMaximaPerSide) block[i] = row_max;
    }
    for (std::size_t j = 0; j < tg.size() && j < kMaximaPerSide; ++j) block[kMaximaPerSide + j] = col_max[j];
    block[2 * kMaximaPerSide] = sum / static_cast<double>(sg.size() * tg.size());
  }
  detail::fill_frequency_side(src, res.source_ngrams, f.data() + kFrequencyBegin);
  detail::fill_frequency_side(tgt, res.target_ngrams, f.data() + kFrequencyBegin + kFrequencyPerSide);
  f[kStructuralBegin] = static_cast<double>(src.size());
  f[kStructuralBegin + 1] = static_cast<double>(tgt.size());
  return f;
}

inline FeatureVector extract_features(const BilingualPair& pair, const FeatureResources& res) {
  return extract_features(tokenize(pair.source_text), tokenize(pair.target_text), res);
}

}  // namespace subqe
