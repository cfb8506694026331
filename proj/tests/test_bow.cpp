#include <algorithm>

#include <gtest/gtest.h>

#include "subqe/bow_scorer.hpp"
#include "subqe/rng.hpp"
#include "test_util.hpp"

using namespace subqe;

namespace {

SimilarityMatrix random_matrix(SeededRng& rng) {
  std::vector<std::vector<double>> rows(1 + rng.uniform_index(8), std::vector<double>(1 + rng.uniform_index(8)));
  for (auto& r : rows)
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return SimilarityMatrix::from_rows(rows);
}

// Direct transcription of the scoring rule, written independently of the library loop.
double oracle(const SimilarityMatrix& s, double theta1) {
  auto keep = [&](double v) { return v >= theta1 && v > 0 ? v : 0.0; };
  double src = 0, tgt = 0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    double m = 0;
    for (std::size_t j = 0; j < s.cols; ++j) m = std::max(m, keep(s.at(i, j)));
    src += m / static_cast<double>(s.rows);
  }
  for (std::size_t j = 0; j < s.cols; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < s.rows; ++i) m = std::max(m, keep(s.at(i, j)));
    tgt += m / static_cast<double>(s.cols);
  }
  return std::min(src, tgt);
}

}  // namespace

TEST(Bow, WorkedExample) {
  const auto s = SimilarityMatrix::from_rows({{0.9, 0.2}, {0.1, 0.7}});
  const auto sc = bow_sentence_scores(s, 0.6);
  EXPECT_NEAR(sc.source, 0.8, 1e-12);
  EXPECT_NEAR(sc.target, 0.8, 1e-12);
  EXPECT_NEAR(bow_score(s, BowParams{0.6, 0.3, "fr"}), 0.8, 1e-12);
}

TEST(Bow, IdentityScoresOne) {
  for (std::size_t n = 1; n <= 10; ++n) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1.0;
    EXPECT_DOUBLE_EQ(bow_score(SimilarityMatrix::from_rows(rows), BowParams{}), 1.0);
  }
}

TEST(Bow, ThresholdBoundaryIsInclusive) {
  EXPECT_DOUBLE_EQ(bow_threshold(0.6, 0.6), 0.6);
  EXPECT_DOUBLE_EQ(bow_threshold(0.59, 0.6), 0.0);
  EXPECT_DOUBLE_EQ(bow_threshold(-0.9, 0.0), 0.0);
}

TEST(Bow, AsymmetricSidesTakeMinimum) {
  // One source word covers all three target words: source side 1, target side 1; extra source row unmatched.
  const auto s = SimilarityMatrix::from_rows({{0.95, 0.95, 0.95}, {0.1, 0.1, 0.1}});
  const auto sc = bow_sentence_scores(s, 0.6);
  EXPECT_NEAR(sc.source, 0.475, 1e-12);
  EXPECT_NEAR(sc.target, 0.95, 1e-12);
  EXPECT_NEAR(bow_score(s, BowParams{}), 0.475, 1e-12);
}

TEST(Bow, EmptyMatrixThrows) {
  EXPECT_SUBQE_ERROR(bow_sentence_scores(SimilarityMatrix{}, 0.6), EmptyMatrix);
}

TEST(Bow, MatchesOracleAndStaysInUnitInterval) {
  SeededRng rng(10);
  for (int k = 0; k < 1000; ++k) {
    const auto s = random_matrix(rng);
    const double t1 = rng.uniform01();
    const double v = bow_score(s, BowParams{t1, 0.3, ""});
    EXPECT_NEAR(v, oracle(s, t1), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Bow, MonotoneInEntriesAndAntitoneInTheta) {
  SeededRng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const auto s = random_matrix(rng);
    auto up = s;
    for (auto& v : up.values) v = std::min(1.0, v + rng.uniform(0.0, 0.3));
    const double t1 = rng.uniform(0.0, 0.9);
    EXPECT_GE(bow_score(up, BowParams{t1, 0.3, ""}), bow_score(s, BowParams{t1, 0.3, ""}));
    // Raising theta1 only removes entries.
    const double t2 = t1 + rng.uniform(0.0, 0.1);
    EXPECT_LE(bow_score(s, BowParams{t2, 0.3, ""}), bow_score(s, BowParams{t1, 0.3, ""}));
  }
}

TEST(Bow, TransposeSymmetry) {
  SeededRng rng(12);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_matrix(rng);
    EXPECT_DOUBLE_EQ(bow_score(s, BowParams{}), bow_score(s.transposed(), BowParams{}));
  }
}

TEST(Bow, BinaryLabelIsStrict) {
  const BowParams p{0.6, 0.3, "fr"};
  EXPECT_FALSE(bow_binary_label(0.3, p));
  EXPECT_TRUE(bow_binary_label(0.3000001, p));
}

TEST(Bow, DefaultParamsPerLanguage) {
  EXPECT_EQ(default_bow_params("de").theta2, 0.35);
  EXPECT_EQ(default_bow_params("it").theta1, 0.5);
  EXPECT_EQ(default_bow_params("it").theta2, 0.40);
  EXPECT_EQ(default_bow_params("xx").theta1, 0.6);
  EXPECT_TRUE(default_bow_params("fr").valid());
  EXPECT_FALSE((BowParams{1.5, 0.3, ""}.valid()));
}

TEST(Bow, ScorePairFallsBackToZeroWhenAllOov) {
  EmbeddingTable a(2, "en"), b(2, "de");
  const std::vector<double> v{1, 0};
  a.add("cat", v);
  b.add("katze", v);
  EXPECT_DOUBLE_EQ(bow_score_pair({"cat"}, {"katze"}, a, b, BowParams{}), 1.0);
  EXPECT_DOUBLE_EQ(bow_score_pair({"dog"}, {"katze"}, a, b, BowParams{}), 0.0);
}
