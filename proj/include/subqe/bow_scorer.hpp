#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>

#include "subqe/embeddings.hpp"
#include "subqe/error.hpp"

namespace subqe {

/// Bag-of-words scorer parameters: `theta1` zeroes weak word similarities,
/// `theta2` turns the score into an accept/reject decision.
struct BowParams {
  double theta1 = 0.6;
  double theta2 = 0.30;
  std::string language;

  bool valid() const { return theta1 >= 0.0 && theta1 <= 1.0 && theta2 >= 0.0 && theta2 <= 1.0; }
  friend bool operator==(const BowParams&, const BowParams&) = default;
};

/// Tuned per-target-language thresholds (French, German, Italian, Portuguese, Spanish).
inline BowParams default_bow_params(const std::string& language) {
  static const std::map<std::string, std::pair<double, double>> kTable = {
      {"fr", {0.6, 0.30}}, {"de", {0.6, 0.35}}, {"it", {0.5, 0.40}}, {"pt", {0.6, 0.30}}, {"es", {0.6, 0.30}},
  };
  const auto it = kTable.find(language);
  if (it == kTable.end()) return BowParams{0.6, 0.30, language};
  return BowParams{it->second.first, it->second.second, language};
}

struct SentenceScores {
  double source = 0.0;
  double target = 0.0;
};

/// Negative similarities clip to 0, then anything below theta1 is zeroed;
/// values at or above theta1 are kept as-is.
inline double bow_threshold(double similarity, double theta1) {
  const double clipped = std::max(0.0, similarity);
  return clipped >= theta1 ? clipped : 0.0;
}

/// Source score: mean over rows of the thresholded row maximum.
/// Target score: mean over columns of the thresholded column maximum.
inline SentenceScores bow_sentence_scores(const SimilarityMatrix& s, double theta1) {
  if (s.empty()) throw Error(ErrorCode::EmptyMatrix, "bow scoring needs a non-empty similarity matrix");
  std::vector<double> col_max(s.cols, 0.0);
  double row_sum = 0.0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < s.cols; ++j) {
      const double v = bow_threshold(s.at(i, j), theta1);
      row_max = std::max(row_max, v);
      col_max[j] = std::max(col_max[j], v);
    }
    row_sum += row_max;
  }
  double col_sum = 0.0;
  for (double v : col_max) col_sum += v;
  return {row_sum / static_cast<double>(s.rows), col_sum / static_cast<double>(s.cols)};
}

inline double bow_score(const SimilarityMatrix& s, const BowParams& params) {
  const auto scores = bow_sentence_scores(s, params.theta1);
  return std::min(scores.source, scores.target);
}

inline bool bow_binary_label(double s_bow, const BowParams& params) { return s_bow > params.theta2; }

/// Tokenized pair -> s_BOW. Pairs with no in-vocabulary tokens on a side score 0.
inline double bow_score_pair(const TokenSequence& src, const TokenSequence& tgt, const EmbeddingTable& src_table,
                             const EmbeddingTable& tgt_table, const BowParams& params) {
  try {
    return bow_score(similarity_matrix(src, tgt, src_table, tgt_table), params);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyAfterOov) return 0.0;
    throw;
  }
}

}  // namespace subqe
