#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/features.hpp"
#include "subqe/rng.hpp"

namespace subqe {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = 17;  // ceil(sqrt(273))
  std::size_t threads = 0;              // 0 = hardware concurrency

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Row-major training matrix with binary labels.
struct TrainingSet {
  std::size_t n_features = kFeatureCount;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  double at(std::size_t row, std::size_t feature) const { return values[row * n_features + feature]; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * n_features, n_features}; }

  void add(std::span<const double> x, bool label) {
    if (x.size() != n_features) throw Error(ErrorCode::ShapeMismatch, "feature row has wrong length");
    values.insert(values.end(), x.begin(), x.end());
    labels.push_back(label ? 1 : 0);
  }
};

inline double gini(double neg, double pos) {
  const double n = neg + pos;
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t negatives = 0;
  std::uint32_t positives = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;

  /// Leaf majority; ties vote negative.
  bool predict(std::span<const double> x) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf()) {
      const auto& n = nodes[k];
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[k].positives > nodes[k].negatives;
  }

  std::size_t depth() const { return depth_from(0); }

  /// Un-normalized weighted Gini decrease per feature.
  std::vector<double> impurity_decrease(std::size_t n_features) const {
    std::vector<double> out(n_features, 0.0);
    if (nodes.empty()) return out;
    const double root_n = static_cast<double>(nodes[0].negatives + nodes[0].positives);
    for (const auto& n : nodes) {
      if (n.is_leaf()) continue;
      const auto& l = nodes[static_cast<std::size_t>(n.left)];
      const auto& r = nodes[static_cast<std::size_t>(n.right)];
      const double nn = n.negatives + n.positives;
      const double nl = l.negatives + l.positives;
      const double nr = r.negatives + r.positives;
      const double dec = nn * gini(n.negatives, n.positives) - nl * gini(l.negatives, l.positives) -
                         nr * gini(r.negatives, r.positives);
      out[static_cast<std::size_t>(n.feature)] += dec / root_n;
    }
    return out;
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::size_t depth_from(std::size_t k) const {
    if (nodes[k].is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(nodes[k].left)),
                        depth_from(static_cast<std::size_t>(nodes[k].right)));
  }
};

namespace detail {

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double child_impurity = 0.0;  // weighted sum n_l*g_l + n_r*g_r
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, const ForestParams& params, SeededRng& rng)
      : data_(data), params_(params), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> samples) {
    DecisionTree tree;
    tree.nodes.reserve(2 * samples.size() / std::max<std::size_t>(1, params_.min_samples_leaf) + 1);
    grow(tree, samples, 0);
    return tree;
  }

 private:
  std::int32_t grow(DecisionTree& tree, std::vector<std::size_t>& samples, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::uint32_t pos = 0;
    for (auto s : samples) pos += data_.labels[s];
    const auto neg = static_cast<std::uint32_t>(samples.size()) - pos;
    tree.nodes[static_cast<std::size_t>(id)].negatives = neg;
    tree.nodes[static_cast<std::size_t>(id)].positives = pos;

    const bool depth_ok = params_.max_depth == 0 || depth < params_.max_depth;
    if (pos == 0 || neg == 0 || !depth_ok || samples.size() < 2 * params_.min_samples_leaf) return id;

    const SplitChoice split = best_split(samples, neg, pos);
    if (!split.found) return id;

    std::vector<std::size_t> left, right;
    for (auto s : samples) {
      (data_.at(s, split.feature) <= split.threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    const auto l = grow(tree, left, depth + 1);
    const auto r = grow(tree, right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(split.feature);
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Candidate features are visited in random order until `features_per_split`
  // non-constant ones have been evaluated.
  SplitChoice best_split(const std::vector<std::size_t>& samples, std::uint32_t neg, std::uint32_t pos) {
    const std::size_t nf = data_.n_features;
    std::vector<std::size_t> order(nf);
    std::iota(order.begin(), order.end(), 0);
    const double n = static_cast<double>(samples.size());
    const double parent = n * gini(neg, pos);
    SplitChoice best;
    best.child_impurity = parent;
    std::size_t evaluated = 0;
    buffer_.resize(samples.size());
    for (std::size_t k = 0; k < nf && evaluated < params_.features_per_split; ++k) {
      const std::size_t pick = k + rng_.uniform_index(nf - k);
      std::swap(order[k], order[pick]);
      const std::size_t f = order[k];
      for (std::size_t i = 0; i < samples.size(); ++i) buffer_[i] = {data_.at(samples[i], f), data_.labels[samples[i]]};
      std::sort(buffer_.begin(), buffer_.end());
      if (buffer_.front().first == buffer_.back().first) continue;
      ++evaluated;
      double left_pos = 0.0, left_neg = 0.0;
      const std::size_t min_leaf = params_.min_samples_leaf;
      for (std::size_t i = 0; i + 1 < buffer_.size(); ++i) {
        if (buffer_[i].second) left_pos += 1.0;
        else left_neg += 1.0;
        if (buffer_[i].first == buffer_[i + 1].first) continue;
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf || buffer_.size() - n_left < min_leaf) continue;
        const double right_pos = pos - left_pos;
        const double right_neg = neg - left_neg;
        const double child = static_cast<double>(n_left) * gini(left_neg, left_pos) +
                             static_cast<double>(buffer_.size() - n_left) * gini(right_neg, right_pos);
        if (child < best.child_impurity - 1e-12) {
          best.found = true;
          best.feature = f;
          best.child_impurity = child;
          const double a = buffer_[i].first, b = buffer_[i + 1].first;
          best.threshold = a + (b - a) / 2.0;
          if (!(best.threshold < b)) best.threshold = a;
        }
      }
    }
    return best;
  }

  const TrainingSet& data_;
  const ForestParams& params_;
  SeededRng& rng_;
  std::vector<std::pair<double, std::uint8_t>> buffer_;
};

}  // namespace detail

/// Grows one CART tree on the given (bootstrap) sample indices.
inline DecisionTree train_tree(const TrainingSet& data, std::vector<std::size_t> samples, const ForestParams& params,
                               SeededRng& rng) {
  detail::TreeBuilder builder(data, params, rng);
  return builder.build(std::move(samples));
}

inline std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t tree_index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = forest_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(tree_index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RandomForestModel {
 public:
  ForestParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = kFeatureCount;
  std::vector<DecisionTree> trees;

  /// Fraction of trees voting positive.
  double score(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    std::size_t votes = 0;
    for (const auto& t : trees) votes += t.predict(x) ? 1 : 0;
    return static_cast<double>(votes) / static_cast<double>(trees.size());
  }

  bool predict(std::span<const double> x) const { return score(x) > 0.5; }

  /// Mean decrease in impurity, normalized per tree and then across trees.
  std::vector<double> feature_importance() const {
    std::vector<double> total(n_features, 0.0);
    for (const auto& t : trees) {
      auto dec = t.impurity_decrease(n_features);
      const double s = std::accumulate(dec.begin(), dec.end(), 0.0);
      if (s <= 0.0) continue;
      for (std::size_t f = 0; f < n_features; ++f) total[f] += dec[f] / s;
    }
    const double s = std::accumulate(total.begin(), total.end(), 0.0);
    if (s > 0.0) {
      for (double& v : total) v /= s;
    }
    return total;
  }

  friend bool operator==(const RandomForestModel&, const RandomForestModel&) = default;
};

/// Each tree sees a bootstrap resample and its own seed derived from `seed`,
/// so results do not depend on the thread count.
inline RandomForestModel train_rfc(const TrainingSet& data, const ForestParams& params, std::uint64_t seed) {
  if (data.size() < 2) throw Error(ErrorCode::SingleClassData, "need at least 2 samples");
  const std::size_t pos = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  if (pos == 0 || pos == data.size()) throw Error(ErrorCode::SingleClassData, "training data has a single class");
  if (params.n_trees < 1 || params.features_per_split < 1 || params.features_per_split > data.n_features) {
    throw Error(ErrorCode::InvalidArgument, "invalid forest parameters");
  }
  RandomForestModel model;
  model.params = params;
  model.seed = seed;
  model.n_features = data.n_features;
  model.trees.resize(params.n_trees);

  auto grow_one = [&](std::size_t t) {
    SeededRng rng(tree_seed(seed, t));
    std::vector<std::size_t> bootstrap(data.size());
    for (auto& b : bootstrap) b = rng.uniform_index(data.size());
    model.trees[t] = train_tree(data, std::move(bootstrap), params, rng);
  };
  std::size_t threads = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, params.n_trees);
  if (threads <= 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) grow_one(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < params.n_trees; t += threads) grow_one(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return model;
}

inline constexpr std::string_view kForestMagic = "subqe-forest v1";

inline void save_forest(std::ostream& out, const RandomForestModel& m) {
  out << kForestMagic << '\n';
  out << "n_trees " << m.params.n_trees << " max_depth " << m.params.max_depth << " min_samples_leaf "
      << m.params.min_samples_leaf << " features_per_split " << m.params.features_per_split << " seed " << m.seed
      << " n_features " << m.n_features << '\n';
  char buf[64];
  for (const auto& t : m.trees) {
    out << "tree " << t.nodes.size() << '\n';
    for (const auto& n : t.nodes) {
      std::snprintf(buf, sizeof buf, "%.17g", n.threshold);
      out << n.feature << ' ' << buf << ' ' << n.left << ' ' << n.right << ' ' << n.negatives << ' ' << n.positives
          << '\n';
    }
  }
}

inline RandomForestModel load_forest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kForestMagic) throw Error(ErrorCode::MalformedRow, "not a forest file");
  RandomForestModel m;
  std::string key;
  if (!(in >> key >> m.params.n_trees >> key >> m.params.max_depth >> key >> m.params.min_samples_leaf >> key >>
        m.params.features_per_split >> key >> m.seed >> key >> m.n_features)) {
    throw Error(ErrorCode::MalformedRow, "bad forest header");
  }
  for (std::size_t t = 0; t < m.params.n_trees; ++t) {
    std::size_t count = 0;
    if (!(in >> key >> count) || key != "tree") throw Error(ErrorCode::MalformedRow, "bad tree header");
    DecisionTree tree;
    tree.nodes.resize(count);
    for (auto& n : tree.nodes) {
      std::string threshold;
      if (!(in >> n.feature >> threshold >> n.left >> n.right >> n.negatives >> n.positives)) {
        throw Error(ErrorCode::MalformedRow, "bad tree node");
      }
      n.threshold = std::strtod(threshold.c_str(), nullptr);
      if (n.feature >= static_cast<std::int32_t>(m.n_features)) throw Error(ErrorCode::MalformedRow, "bad feature index");
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

/// Importance summed over the four feature families.
inline std::array<double, 4> grouped_importance(const std::vector<double>& importance) {
  std::array<double, 4> g{};
  for (std::size_t f = 0; f < importance.size() && f < kFeatureCount; ++f) {
    g[static_cast<std::size_t>(feature_family(f))] += importance[f];
  }
  return g;
}

}  // namespace subqe
