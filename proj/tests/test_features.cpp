#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "subqe/features.hpp"
#include "subqe/rng.hpp"

using namespace subqe;

namespace {

struct Fixture {
  EmbeddingTable src{2, "en"}, tgt{2, "de"};
  NgramModel src_ngrams = NgramModel::from_corpus({{"a", "b"}, {"b", "a"}});
  NgramModel tgt_ngrams = NgramModel::from_corpus({{"x", "y"}, {"x", "x"}});

  Fixture() {
    src.add("a", std::vector<double>{1, 0});
    src.add("b", std::vector<double>{0, 1});
    tgt.add("x", std::vector<double>{1, 0});
    tgt.add("y", std::vector<double>{1, 1});
  }
  FeatureResources res() const { return {src, tgt, src_ngrams, tgt_ngrams}; }
};

struct RandomWorld {
  EmbeddingTable src{6, "en"}, tgt{6, "de"};
  std::vector<TokenSequence> corpus;
  NgramModel src_ngrams, tgt_ngrams;

  explicit RandomWorld(SeededRng& rng) {
    for (int w = 0; w < 40; ++w) {
      std::vector<double> v(6), u(6);
      for (auto& x : v) x = rng.normal();
      for (auto& x : u) x = rng.normal();
      src.add("s" + std::to_string(w), v);
      tgt.add("t" + std::to_string(w), u);
    }
    for (int k = 0; k < 50; ++k) corpus.push_back(sentence(rng, "s"));
    src_ngrams = NgramModel::from_corpus(corpus);
    tgt_ngrams = NgramModel::from_corpus({sentence(rng, "t"), sentence(rng, "t")});
  }
  static TokenSequence sentence(SeededRng& rng, const std::string& prefix) {
    TokenSequence s(1 + rng.uniform_index(25));
    for (auto& t : s) t = prefix + std::to_string(rng.uniform_index(45));  // some OOV
    return s;
  }
  FeatureResources res() const { return {src, tgt, src_ngrams, tgt_ngrams}; }
};

}  // namespace

TEST(Features, LayoutConstants) {
  EXPECT_EQ(kFrequencyBegin, 127u);
  EXPECT_EQ(kStructuralBegin, 271u);
  const auto names = feature_layout();
  ASSERT_EQ(names.size(), kFeatureCount);
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), kFeatureCount);
  EXPECT_EQ(names[0], "avg_vector_cosine");
  EXPECT_EQ(names[kFrequencyBegin], "src_unigram_prob_0");
  EXPECT_EQ(names[kStructuralBegin + 1], "tgt_token_count");
  EXPECT_EQ(feature_family(0), FeatureFamily::AverageSimilarity);
  EXPECT_EQ(feature_family(126), FeatureFamily::Similarity);
  EXPECT_EQ(feature_family(127), FeatureFamily::NgramFrequency);
  EXPECT_EQ(feature_family(272), FeatureFamily::Structural);
}

TEST(Features, HandComputedTwoWordPair) {
  Fixture fx;
  const auto f = extract_features({"a", "b"}, {"x", "y"}, fx.res());
  const double r2 = std::sqrt(0.5);
  const double avg = 0.75 / (std::sqrt(0.5) * std::sqrt(1.25));
  EXPECT_NEAR(f[0], avg, 1e-12);
  // unigram block
  const double* b1 = f.data() + kSimilarityBegin;
  EXPECT_NEAR(b1[0], 1.0, 1e-12);
  EXPECT_NEAR(b1[1], r2, 1e-12);
  EXPECT_EQ(b1[2], 0.0);
  EXPECT_NEAR(b1[10], 1.0, 1e-12);
  EXPECT_NEAR(b1[11], r2, 1e-12);
  EXPECT_NEAR(b1[20], (1.0 + r2 + 0.0 + r2) / 4.0, 1e-12);
  // bigram block: a single mean vector per side
  const double* b2 = b1 + kSimilarityBlock;
  EXPECT_NEAR(b2[0], avg, 1e-12);
  EXPECT_NEAR(b2[10], avg, 1e-12);
  EXPECT_NEAR(b2[20], avg, 1e-12);
  for (std::size_t k = kSimilarityBegin + 2 * kSimilarityBlock; k < kFrequencyBegin; ++k) EXPECT_EQ(f[k], 0.0) << k;
  // n-gram probabilities
  const double* fs = f.data() + kFrequencyBegin;
  EXPECT_DOUBLE_EQ(fs[0], 0.5);
  EXPECT_DOUBLE_EQ(fs[1], 0.5);
  EXPECT_EQ(fs[2], 0.0);
  EXPECT_DOUBLE_EQ(fs[25], 0.5);
  EXPECT_EQ(fs[26], 0.0);
  EXPECT_EQ(fs[49], 0.0);
  const double* ft = fs + kFrequencyPerSide;
  EXPECT_DOUBLE_EQ(ft[0], 0.75);
  EXPECT_DOUBLE_EQ(ft[1], 0.25);
  EXPECT_DOUBLE_EQ(ft[25], 0.5);
  EXPECT_EQ(f[271], 2.0);
  EXPECT_EQ(f[272], 2.0);
}

TEST(Features, IdenticalSentenceGivesUnitAverageCosine) {
  SeededRng rng(1);
  EmbeddingTable t(5, "en");
  for (int w = 0; w < 20; ++w) {
    std::vector<double> v(5);
    for (auto& x : v) x = rng.normal();
    t.add("w" + std::to_string(w), v);
  }
  const NgramModel ng;
  for (int k = 0; k < 50; ++k) {
    TokenSequence s(1 + rng.uniform_index(20));
    for (auto& tok : s) tok = "w" + std::to_string(rng.uniform_index(20));
    const auto f = extract_features(s, s, {t, t, ng, ng});
    EXPECT_NEAR(f[0], 1.0, 1e-12);
    EXPECT_NEAR(f[kSimilarityBegin], 1.0, 1e-12);  // best match of the first word is itself
  }
}

TEST(Features, AllOovLeavesSimilarityZero) {
  Fixture fx;
  const auto f = extract_features({"zz", "qq"}, {"x"}, fx.res());
  for (std::size_t k = 0; k < kFrequencyBegin; ++k) EXPECT_EQ(f[k], 0.0);
  EXPECT_EQ(f[271], 2.0);
  EXPECT_EQ(f[272], 1.0);
}

TEST(Features, RangesAndDeterminismOnRandomPairs) {
  SeededRng rng(2);
  RandomWorld world(rng);
  for (int k = 0; k < 300; ++k) {
    const auto s = RandomWorld::sentence(rng, "s"), t = RandomWorld::sentence(rng, "t");
    const auto f = extract_features(s, t, world.res());
    EXPECT_EQ(f, extract_features(s, t, world.res()));
    for (std::size_t i = 0; i < kFrequencyBegin; ++i) {
      EXPECT_GE(f[i], -1.0 - 1e-12);
      EXPECT_LE(f[i], 1.0 + 1e-12);
    }
    for (std::size_t i = kFrequencyBegin; i < kStructuralBegin; ++i) {
      EXPECT_GE(f[i], 0.0);
      EXPECT_LE(f[i], 1.0);
    }
    EXPECT_EQ(f[271], static_cast<double>(s.size()));
    for (double v : f) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Features, SwappingSidesSwapsRowAndColumnMaxima) {
  SeededRng rng(3);
  RandomWorld world(rng);
  // Share one table on both sides so swapping is well defined.
  const FeatureResources same{world.src, world.src, world.src_ngrams, world.src_ngrams};
  for (int k = 0; k < 100; ++k) {
    const auto a = RandomWorld::sentence(rng, "s"), b = RandomWorld::sentence(rng, "s");
    const auto ab = extract_features(a, b, same), ba = extract_features(b, a, same);
    EXPECT_NEAR(ab[0], ba[0], 1e-12);
    for (std::size_t n = 0; n < kMaxNgram; ++n) {
      const std::size_t base = kSimilarityBegin + n * kSimilarityBlock;
      for (std::size_t j = 0; j < kMaximaPerSide; ++j) {
        EXPECT_NEAR(ab[base + j], ba[base + kMaximaPerSide + j], 1e-12);
      }
      EXPECT_NEAR(ab[base + 20], ba[base + 20], 1e-12);
    }
  }
}

TEST(NgramModel, ProbabilitiesPerOrder) {
  const auto m = NgramModel::from_corpus({{"a", "b", "c"}, {"a", "b"}});
  EXPECT_EQ(m.total(1), 5u);
  EXPECT_EQ(m.total(2), 3u);
  EXPECT_EQ(m.total(3), 1u);
  const TokenSequence s{"a", "b", "c"};
  EXPECT_DOUBLE_EQ(m.probability(s, 0, 1), 0.4);
  EXPECT_DOUBLE_EQ(m.probability(s, 0, 2), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.probability(s, 0, 3), 1.0);
  EXPECT_EQ(m.probability({"q"}, 0, 1), 0.0);
  EXPECT_EQ(m.probability(s, 0, 4), 0.0);
}
