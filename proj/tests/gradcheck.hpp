#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "subqe/nn/ops.hpp"
#include "subqe/rng.hpp"

namespace subqe::test {

/// One gradient-check instance: inputs and a function building the output
/// from them. Every input is checked.
struct GradCase {
  std::string shape;
  std::vector<nn::Tensor> inputs;
  std::function<nn::Var(const std::vector<nn::Var>&)> f;
};

using CaseFactory = std::function<GradCase(SeededRng&, std::size_t)>;

struct GradResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdTolerance = 1e-3;

inline nn::Tensor random_tensor(nn::Shape s, SeededRng& rng, double scale = 1.0) {
  nn::Tensor t(std::move(s));
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

/// Values spaced at least 0.05 apart in random order, so max-based ops have
/// no near-ties within the finite-difference step.
inline nn::Tensor spread_tensor(nn::Shape s, SeededRng& rng) {
  nn::Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(i) - 0.025 * static_cast<double>(t.size());
  rng.shuffle(t.data);
  return t;
}

/// Normal entries pushed away from 0 by at least `gap`.
inline nn::Tensor away_from_zero(nn::Shape s, SeededRng& rng, double gap = 0.01) {
  nn::Tensor t = random_tensor(std::move(s), rng);
  for (auto& v : t.data) v = v >= 0 ? v + gap : v - gap;
  return t;
}

inline nn::Tensor prefix_mask(std::size_t B, std::size_t T, SeededRng& rng, std::size_t min_len = 0) {
  nn::Tensor m({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = min_len + rng.uniform_index(T - min_len + 1);
    for (std::size_t t = 0; t < len; ++t) m[b * T + t] = 1.0;
  }
  return m;
}

inline std::size_t dim_in(SeededRng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

inline std::string shape_tag(std::initializer_list<std::size_t> dims) {
  std::string s;
  for (auto d : dims) s += (s.empty() ? "" : "x") + std::to_string(d);
  return s;
}

/// Central differences on <out, R> for a fixed random projection R.
inline GradResult check_gradients(const GradCase& c, SeededRng& rng, double h = kFdStep) {
  using namespace nn;
  std::vector<Var> params;
  for (const auto& t : c.inputs) params.push_back(parameter(t));
  const Var out = c.f(params);
  const Tensor proj = random_tensor(out->value.shape, rng);
  backward(out, &proj);

  auto objective = [&](const std::vector<Tensor>& inputs) {
    std::vector<Var> vs;
    for (const auto& t : inputs) vs.push_back(constant(t));
    const Var o = c.f(vs);
    double s = 0.0;
    for (std::size_t i = 0; i < o->value.size(); ++i) s += o->value[i] * proj[i];
    return s;
  };

  GradResult r;
  std::vector<Tensor> work = c.inputs;
  for (std::size_t k = 0; k < work.size(); ++k) {
    Tensor analytic = params[k]->grad.shape == work[k].shape ? params[k]->grad : Tensor(work[k].shape);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < work[k].size(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + h;
      const double fp = objective(work);
      work[k][i] = orig - h;
      const double fm = objective(work);
      work[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++r.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    r.max_rel_error = std::max(r.max_rel_error, std::sqrt(diff2) / denom);
  }
  return r;
}

/// All differentiable operators with their shape generators.
inline std::vector<std::pair<std::string, CaseFactory>> gradient_operators() {
  using namespace nn;
  std::vector<std::pair<std::string, CaseFactory>> ops;

  ops.emplace_back("matmul", [](SeededRng& rng, std::size_t) {
    const auto n = dim_in(rng, 1, 6), k = dim_in(rng, 1, 6), m = dim_in(rng, 1, 6);
    return GradCase{shape_tag({n, k, m}), {random_tensor({n, k}, rng), random_tensor({k, m}, rng)},
                    [](const std::vector<Var>& v) { return matmul(v[0], v[1]); }};
  });
  ops.emplace_back("add_bias", [](SeededRng& rng, std::size_t i) {
    const auto a = dim_in(rng, 1, 4), b = dim_in(rng, 1, 4), m = dim_in(rng, 1, 5);
    Shape s = i % 2 ? Shape{a, b, m} : Shape{a, m};
    return GradCase{shape_tag({a, b, m}), {random_tensor(s, rng), random_tensor({m}, rng)},
                    [](const std::vector<Var>& v) { return add_bias(v[0], v[1]); }};
  });
  ops.emplace_back("linear", [](SeededRng& rng, std::size_t) {
    const auto n = dim_in(rng, 1, 5), k = dim_in(rng, 1, 5), m = dim_in(rng, 1, 5);
    return GradCase{shape_tag({n, k, m}),
                    {random_tensor({n, k}, rng), random_tensor({k, m}, rng), random_tensor({m}, rng)},
                    [](const std::vector<Var>& v) { return linear(v[0], v[1], v[2]); }};
  });
  auto unary = [](const char* name, Var (*fn)(const Var&)) {
    return std::make_pair(std::string(name), CaseFactory([fn](SeededRng& rng, std::size_t i) {
                            const auto a = dim_in(rng, 1, 4), b = dim_in(rng, 1, 4), c = dim_in(rng, 1, 4);
                            Shape s = i % 3 == 0 ? Shape{a} : i % 3 == 1 ? Shape{a, b} : Shape{a, b, c};
                            return GradCase{shape_tag({a, b, c}), {away_from_zero(s, rng)},
                                            [fn](const std::vector<Var>& v) { return fn(v[0]); }};
                          }));
  };
  ops.push_back(unary("relu", [](const Var& x) { return relu(x); }));
  ops.push_back(unary("sigmoid", [](const Var& x) { return nn::sigmoid(x); }));
  ops.push_back(unary("tanh", [](const Var& x) { return nn::tanh(x); }));
  ops.emplace_back("add", [](SeededRng& rng, std::size_t) {
    const Shape s{dim_in(rng, 1, 4), dim_in(rng, 1, 5)};
    return GradCase{shape_tag({s[0], s[1]}), {random_tensor(s, rng), random_tensor(s, rng)},
                    [](const std::vector<Var>& v) { return add(v[0], v[1]); }};
  });
  ops.emplace_back("reshape", [](SeededRng& rng, std::size_t) {
    const auto a = dim_in(rng, 1, 4), b = dim_in(rng, 1, 4), c = dim_in(rng, 1, 4);
    return GradCase{shape_tag({a, b, c}), {random_tensor({a, b, c}, rng)}, [a, b, c](const std::vector<Var>& v) {
                      return reshape(v[0], {a * b, c});
                    }};
  });
  ops.emplace_back("concat", [](SeededRng& rng, std::size_t i) {
    const std::size_t axis = i % 3;
    Shape base{dim_in(rng, 1, 3), dim_in(rng, 1, 4), dim_in(rng, 1, 4)};
    std::vector<Tensor> parts;
    const std::size_t n_parts = dim_in(rng, 1, 3);
    for (std::size_t p = 0; p < n_parts; ++p) {
      Shape s = base;
      s[axis] = dim_in(rng, 1, 3);
      parts.push_back(random_tensor(s, rng));
    }
    return GradCase{shape_tag({base[0], base[1], base[2], axis, n_parts}), parts,
                    [axis](const std::vector<Var>& v) { return concat(v, axis); }};
  });
  ops.emplace_back("lstm", [](SeededRng& rng, std::size_t i) {
    const auto B = dim_in(rng, 1, 3), T = dim_in(rng, 1, 6), I = dim_in(rng, 1, 4), H = dim_in(rng, 1, 3);
    const bool reverse = i % 2 == 1;
    const Tensor mask = prefix_mask(B, T, rng);
    return GradCase{shape_tag({B, T, I, H}) + (reverse ? " rev" : " fwd"),
                    {random_tensor({B, T, I}, rng), random_tensor({I, 4 * H}, rng, 0.5),
                     random_tensor({H, 4 * H}, rng, 0.5), random_tensor({4 * H}, rng, 0.5)},
                    [mask, reverse](const std::vector<Var>& v) { return lstm(v[0], mask, v[1], v[2], v[3], reverse); }};
  });
  ops.emplace_back("conv1d", [](SeededRng& rng, std::size_t i) {
    const auto B = dim_in(rng, 1, 3), T = dim_in(rng, 1, 7), C = dim_in(rng, 1, 4), O = dim_in(rng, 1, 4);
    const std::size_t K = 1 + 2 * (i % 3);
    return GradCase{shape_tag({B, T, C, O, K}),
                    {random_tensor({B, T, C}, rng), random_tensor({K * C, O}, rng), random_tensor({O}, rng)},
                    [K](const std::vector<Var>& v) { return conv1d(v[0], v[1], v[2], K); }};
  });
  auto bn_case = [](bool training) {
    return CaseFactory([training](SeededRng& rng, std::size_t) {
      const auto B = dim_in(rng, 1, 3), T = dim_in(rng, 2, 5), C = dim_in(rng, 1, 4);
      Tensor mask = prefix_mask(B, T, rng, 2);
      BatchNormStats stats(C);
      for (auto& m : stats.mean) m = rng.normal();
      for (auto& s : stats.var) s = 0.5 + rng.uniform01();
      return GradCase{shape_tag({B, T, C}),
                      {random_tensor({B, T, C}, rng), random_tensor({C}, rng), random_tensor({C}, rng)},
                      [mask, stats, training](const std::vector<Var>& v) {
                        BatchNormStats local = stats;
                        return batch_norm(v[0], mask, v[1], v[2], local, training);
                      }};
    });
  };
  ops.emplace_back("batch_norm_train", bn_case(true));
  ops.emplace_back("batch_norm_eval", bn_case(false));
  ops.emplace_back("masked_max_pool", [](SeededRng& rng, std::size_t) {
    const auto B = dim_in(rng, 1, 3), T = dim_in(rng, 1, 7), C = dim_in(rng, 1, 3);
    const Tensor mask = prefix_mask(B, T, rng);
    return GradCase{shape_tag({B, T, C}), {spread_tensor({B, T, C}, rng)},
                    [mask](const std::vector<Var>& v) { return masked_max_pool(v[0], mask).first; }};
  });
  ops.emplace_back("masked_global_max", [](SeededRng& rng, std::size_t) {
    const auto B = dim_in(rng, 1, 3), T = dim_in(rng, 1, 7), C = dim_in(rng, 1, 3);
    const Tensor mask = prefix_mask(B, T, rng);
    return GradCase{shape_tag({B, T, C}), {spread_tensor({B, T, C}, rng)},
                    [mask](const std::vector<Var>& v) { return masked_global_max(v[0], mask); }};
  });
  ops.emplace_back("dropout", [](SeededRng& rng, std::size_t) {
    const auto a = dim_in(rng, 1, 5), b = dim_in(rng, 1, 5);
    const double p = 0.1 + 0.5 * rng.uniform01();
    const std::uint64_t seed = rng.next_u64();
    return GradCase{shape_tag({a, b}), {random_tensor({a, b}, rng)}, [p, seed](const std::vector<Var>& v) {
                      SeededRng fixed(seed);  // same mask on every evaluation
                      return dropout(v[0], p, fixed, true);
                    }};
  });
  ops.emplace_back("softmax_cross_entropy", [](SeededRng& rng, std::size_t) {
    const auto B = dim_in(rng, 1, 6), K = dim_in(rng, 2, 5);
    std::vector<std::size_t> labels(B);
    for (auto& l : labels) l = rng.uniform_index(K);
    return GradCase{shape_tag({B, K}), {random_tensor({B, K}, rng, 2.0)},
                    [labels](const std::vector<Var>& v) { return softmax_cross_entropy(v[0], labels); }};
  });
  ops.emplace_back("band_loss", [](SeededRng& rng, std::size_t) {
    const auto B = dim_in(rng, 1, 8);
    static const Band kBands[3] = {{0.0, 0.35}, {0.35, 0.65}, {0.65, 1.0}};
    std::vector<Band> bands(B);
    Tensor s({B, 1});
    for (std::size_t b = 0; b < B; ++b) {
      bands[b] = kBands[rng.uniform_index(3)];
      do {
        s[b] = rng.uniform(-0.2, 1.2);
      } while (std::abs(s[b] - bands[b].lower) < 0.01 || std::abs(s[b] - bands[b].upper) < 0.01);
    }
    return GradCase{shape_tag({B}), {s}, [bands](const std::vector<Var>& v) { return band_loss(v[0], bands); }};
  });
  return ops;
}

}  // namespace subqe::test
