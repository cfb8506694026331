#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "subqe/error.hpp"
#include "subqe/nn/autograd.hpp"
#include "subqe/nn/tensor.hpp"
#include "subqe/rng.hpp"

namespace subqe::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// (n, k) x (k, m) -> (n, m)
inline Var matmul(const Var& a, const Var& b) {
  expect_rank(a->value, 2, "matmul lhs");
  expect_rank(b->value, 2, "matmul rhs");
  const std::size_t n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
  if (b->value.dim(0) != k) throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() = as_matrix(a->value, n, k) * as_matrix(b->value, k, m);
  return make_result(std::move(out), {a, b}, [a, b, n, k, m](Node& self) {
    const auto g = as_matrix(self.grad, n, m);
    if (a->requires_grad) as_matrix(a->ensure_grad(), n, k).noalias() += g * as_matrix(b->value, k, m).transpose();
    if (b->requires_grad) as_matrix(b->ensure_grad(), k, m).noalias() += as_matrix(a->value, n, k).transpose() * g;
  });
}

/// Adds a bias vector along the last axis.
inline Var add_bias(const Var& x, const Var& bias) {
  expect_rank(bias->value, 1, "bias");
  const std::size_t m = bias->value.dim(0);
  if (x->value.rank() == 0 || x->value.shape.back() != m) throw Error(ErrorCode::ShapeMismatch, "bias width mismatch");
  const std::size_t rows = x->value.size() / m;
  Tensor out = x->value;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] += bias->value[j];
  return make_result(std::move(out), {x, bias}, [x, bias, rows, m](Node& self) {
    if (x->requires_grad) {
      auto& gx = x->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (bias->requires_grad) {
      auto& gb = bias->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) gb[j] += self.grad[r * m + j];
    }
  });
}

inline Var linear(const Var& x, const Var& weight, const Var& bias) { return add_bias(matmul(x, weight), bias); }

namespace detail {

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df_from_output) {
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x->value[i]);
  return make_result(std::move(out), {x}, [x, df_from_output](Node& self) {
    auto& gx = x->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df_from_output(x->value[i], self.value[i]);
  });
}

inline double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var relu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      x, [](double v) { return detail::sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var add(const Var& a, const Var& b) {
  expect_shape(b->value, a->value.shape, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    for (const Var& p : {a, b}) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var reshape(const Var& x, Shape shape) {
  if (shape_size(shape) != x->value.size()) throw Error(ErrorCode::ShapeMismatch, "reshape changes element count");
  Tensor out(std::move(shape), x->value.data);
  return make_result(std::move(out), {x}, [x](Node& self) {
    auto& g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenation along `axis`; all other dimensions must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Shape& ref = parts[0]->value.shape;
  if (axis >= ref.size()) throw Error(ErrorCode::ShapeMismatch, "concat axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<std::size_t> widths;
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape;
    if (s.size() != ref.size()) throw Error(ErrorCode::ShapeMismatch, "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) throw Error(ErrorCode::ShapeMismatch, "concat shape mismatch");
    }
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  Tensor out(out_shape);
  const std::size_t row = total_axis * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k]->value.ptr() + o * widths[k], widths[k], out.ptr() + o * row + offset);
      offset += widths[k];
    }
  }
  return make_result(std::move(out), parts, [parts, widths, outer, row](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k]->requires_grad) {
        auto& g = parts[k]->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + offset + i];
      }
      offset += widths[k];
    }
  });
}

/// One direction of an LSTM over a (B, T, I) sequence with a (B, T) 0/1 mask.
/// Gate layout inside the 4H axis is [input, forget, cell, output]. Masked
/// steps carry the state through unchanged and emit zeros, so a sequence's
/// result does not depend on how much padding follows it.
inline Var lstm(const Var& x, const Tensor& mask, const Var& w_input, const Var& w_hidden, const Var& bias,
                bool reverse) {
  expect_rank(x->value, 3, "lstm input");
  const std::size_t B = x->value.dim(0), T = x->value.dim(1), I = x->value.dim(2);
  expect_shape(mask, {B, T}, "lstm mask");
  const std::size_t H4 = w_input->value.dim(1), H = H4 / 4;
  expect_shape(w_input->value, {I, H4}, "lstm input weights");
  expect_shape(w_hidden->value, {H, H4}, "lstm hidden weights");
  expect_shape(bias->value, {H4}, "lstm bias");
  if (H4 % 4 != 0 || H == 0) throw Error(ErrorCode::ShapeMismatch, "lstm gate width must be 4H");

  // pre-projected inputs (B*T, 4H)
  auto proj = std::make_shared<Tensor>(Shape{B * T, H4});
  {
    auto pm = as_matrix(*proj, B * T, H4);
    pm.noalias() = as_matrix(x->value, B * T, I) * as_matrix(w_input->value, I, H4);
    pm.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.ptr(), static_cast<Eigen::Index>(H4));
  }
  // per-step caches, indexed by processing step s
  auto gates = std::make_shared<std::vector<RowMatrix>>(T);   // activated gates (B, 4H)
  auto cells = std::make_shared<std::vector<RowMatrix>>(T + 1);  // state after step s-1 at index s
  auto hiddens = std::make_shared<std::vector<RowMatrix>>(T + 1);
  auto cand_tanh = std::make_shared<std::vector<RowMatrix>>(T);  // tanh(c_candidate)
  (*cells)[0] = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
  (*hiddens)[0] = (*cells)[0];

  Tensor out({B, T, H});
  const auto Hi = static_cast<Eigen::Index>(H);
  const auto wh = as_matrix(w_hidden->value, H, H4);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    RowMatrix g = (*hiddens)[s] * wh;
    for (std::size_t b = 0; b < B; ++b) {
      const double* p = proj->ptr() + (b * T + t) * H4;
      for (std::size_t j = 0; j < H4; ++j) g(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) += p[j];
    }
    // sigmoid everywhere, with tanh(x) = 2 sigmoid(2x) - 1 for the cell gate
    g.middleCols(2 * Hi, Hi) *= 2.0;
    g = (1.0 + (-g.array()).exp()).inverse().matrix();
    g.middleCols(2 * Hi, Hi) = (2.0 * g.middleCols(2 * Hi, Hi).array() - 1.0).matrix();
    const RowMatrix c_cand = (g.middleCols(Hi, Hi).array() * (*cells)[s].array() +
                              g.leftCols(Hi).array() * g.middleCols(2 * Hi, Hi).array())
                                 .matrix();
    RowMatrix ct = (2.0 / (1.0 + (-2.0 * c_cand.array()).exp()) - 1.0).matrix();
    const RowMatrix h_cand = (g.rightCols(Hi).array() * ct.array()).matrix();
    RowMatrix c_next((*cells)[s]);
    RowMatrix h_next((*hiddens)[s]);
    for (std::size_t b = 0; b < B; ++b) {
      if (mask[b * T + t] == 0.0) continue;
      const auto bi = static_cast<Eigen::Index>(b);
      c_next.row(bi) = c_cand.row(bi);
      h_next.row(bi) = h_cand.row(bi);
      std::copy_n(h_cand.data() + b * H, H, out.ptr() + (b * T + t) * H);
    }
    (*gates)[s] = std::move(g);
    (*cand_tanh)[s] = std::move(ct);
    (*cells)[s + 1] = std::move(c_next);
    (*hiddens)[s + 1] = std::move(h_next);
  }

  return make_result(std::move(out), {x, w_input, w_hidden, bias},
                     [=](Node& self) {
                       const auto Bi = static_cast<Eigen::Index>(B);
                       RowMatrix dh = RowMatrix::Zero(Bi, Hi);  // gradient w.r.t. carried hidden state
                       RowMatrix dc = RowMatrix::Zero(Bi, Hi);
                       Tensor dproj({B * T, H4});
                       RowMatrix dwh = RowMatrix::Zero(Hi, static_cast<Eigen::Index>(H4));
                       const auto whm = as_matrix(w_hidden->value, H, H4);
                       for (std::size_t s = T; s-- > 0;) {
                         const std::size_t t = reverse ? T - 1 - s : s;
                         const RowMatrix& g = (*gates)[s];
                         const RowMatrix& c_prev = (*cells)[s];
                         RowMatrix dgate = RowMatrix::Zero(Bi, static_cast<Eigen::Index>(H4));
                         RowMatrix dh_prev = RowMatrix::Zero(Bi, Hi);
                         RowMatrix dc_prev = RowMatrix::Zero(Bi, Hi);
                         for (std::size_t b = 0; b < B; ++b) {
                           const auto bi = static_cast<Eigen::Index>(b);
                           const bool on = mask[b * T + t] != 0.0;
                           for (Eigen::Index j = 0; j < Hi; ++j) {
                             if (!on) {
                               dh_prev(bi, j) = dh(bi, j);
                               dc_prev(bi, j) = dc(bi, j);
                               continue;
                             }
                             const double dy = self.grad[(b * T + t) * H + static_cast<std::size_t>(j)];
                             const double dh_c = dy + dh(bi, j);
                             const double ig = g(bi, j), fg = g(bi, Hi + j), cg = g(bi, 2 * Hi + j),
                                          og = g(bi, 3 * Hi + j);
                             const double tc = (*cand_tanh)[s](bi, j);
                             const double dc_c = dc(bi, j) + dh_c * og * (1.0 - tc * tc);
                             dgate(bi, j) = dc_c * cg * ig * (1.0 - ig);
                             dgate(bi, Hi + j) = dc_c * c_prev(bi, j) * fg * (1.0 - fg);
                             dgate(bi, 2 * Hi + j) = dc_c * ig * (1.0 - cg * cg);
                             dgate(bi, 3 * Hi + j) = dh_c * tc * og * (1.0 - og);
                             dc_prev(bi, j) = dc_c * fg;
                           }
                         }
                         dh_prev.noalias() += dgate * whm.transpose();
                         dwh.noalias() += (*hiddens)[s].transpose() * dgate;
                         for (std::size_t b = 0; b < B; ++b) {
                           double* dp = dproj.ptr() + (b * T + t) * H4;
                           for (std::size_t j = 0; j < H4; ++j)
                             dp[j] = dgate(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
                         }
                         dh = std::move(dh_prev);
                         dc = std::move(dc_prev);
                       }
                       const auto dpm = as_matrix(dproj, B * T, H4);
                       if (w_hidden->requires_grad) as_matrix(w_hidden->ensure_grad(), H, H4) += dwh;
                       if (w_input->requires_grad) {
                         as_matrix(w_input->ensure_grad(), I, H4).noalias() +=
                             as_matrix(x->value, B * T, I).transpose() * dpm;
                       }
                       if (bias->requires_grad) {
                         auto& gb = bias->ensure_grad();
                         const Eigen::RowVectorXd colsum = dpm.colwise().sum();
                         for (std::size_t j = 0; j < H4; ++j) gb[j] += colsum(static_cast<Eigen::Index>(j));
                       }
                       if (x->requires_grad) {
                         as_matrix(x->ensure_grad(), B * T, I).noalias() +=
                             dpm * as_matrix(w_input->value, I, H4).transpose();
                       }
                     });
}

/// "Same"-padded 1-D convolution over (B, T, C). Weights are (K*C, O), rows
/// ordered by (kernel offset, input channel).
inline Var conv1d(const Var& x, const Var& weight, const Var& bias, std::size_t kernel) {
  expect_rank(x->value, 3, "conv1d input");
  const std::size_t B = x->value.dim(0), T = x->value.dim(1), C = x->value.dim(2);
  const std::size_t O = weight->value.dim(1);
  expect_shape(weight->value, {kernel * C, O}, "conv1d weights");
  expect_shape(bias->value, {O}, "conv1d bias");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  auto cols = std::make_shared<Tensor>(Shape{B * T, kernel * C});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double* row = cols->ptr() + (b * T + t) * kernel * C;
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        std::copy_n(x->value.ptr() + (b * T + static_cast<std::size_t>(src)) * C, C, row + k * C);
      }
    }
  }
  Tensor out({B, T, O});
  auto om = as_matrix(out, B * T, O);
  om.noalias() = as_matrix(*cols, B * T, kernel * C) * as_matrix(weight->value, kernel * C, O);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias->value.ptr(), static_cast<Eigen::Index>(O));
  return make_result(std::move(out), {x, weight, bias}, [=](Node& self) {
    const auto g = as_matrix(self.grad, B * T, O);
    if (weight->requires_grad) {
      as_matrix(weight->ensure_grad(), kernel * C, O).noalias() +=
          as_matrix(*cols, B * T, kernel * C).transpose() * g;
    }
    if (bias->requires_grad) {
      auto& gb = bias->ensure_grad();
      const Eigen::RowVectorXd colsum = g.colwise().sum();
      for (std::size_t j = 0; j < O; ++j) gb[j] += colsum(static_cast<Eigen::Index>(j));
    }
    if (x->requires_grad) {
      Tensor dcols({B * T, kernel * C});
      as_matrix(dcols, B * T, kernel * C).noalias() = g * as_matrix(weight->value, kernel * C, O).transpose();
      auto& gx = x->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
          const double* row = dcols.ptr() + (b * T + t) * kernel * C;
          for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            double* dst = gx.ptr() + (b * T + static_cast<std::size_t>(src)) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += row[k * C + c];
          }
        }
      }
    }
  });
}

/// Running statistics of a batch-norm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  explicit BatchNormStats(std::size_t channels = 0) : mean(channels, 0.0), var(channels, 1.0) {}
  friend bool operator==(const BatchNormStats&, const BatchNormStats&) = default;
};

/// Batch normalization over (B, T, C) using only unmasked positions; masked
/// positions come out as exactly 0. In training mode batch statistics are
/// used and `stats` is updated with `momentum`; in eval mode `stats` is used.
inline Var batch_norm(const Var& x, const Tensor& mask, const Var& gamma, const Var& beta, BatchNormStats& stats,
                      bool training, double momentum = 0.1, double eps = 1e-5) {
  expect_rank(x->value, 3, "batch_norm input");
  const std::size_t B = x->value.dim(0), T = x->value.dim(1), C = x->value.dim(2);
  expect_shape(mask, {B, T}, "batch_norm mask");
  expect_shape(gamma->value, {C}, "batch_norm gamma");
  expect_shape(beta->value, {C}, "batch_norm beta");
  if (stats.mean.size() != C) throw Error(ErrorCode::ShapeMismatch, "batch_norm stats width");
  std::vector<std::size_t> valid;
  for (std::size_t r = 0; r < B * T; ++r) {
    if (mask[r] != 0.0) valid.push_back(r);
  }
  const double n = static_cast<double>(valid.size());
  auto xhat = std::make_shared<Tensor>(Shape{B * T, C});
  auto inv_std = std::make_shared<std::vector<double>>(C);
  Tensor out({B, T, C});
  for (std::size_t c = 0; c < C; ++c) {
    double mean = stats.mean[c], var = stats.var[c];
    if (training) {
      if (valid.empty()) throw Error(ErrorCode::ShapeMismatch, "batch_norm over a fully masked batch");
      double s = 0.0;
      for (auto r : valid) s += x->value[r * C + c];
      mean = s / n;
      double ss = 0.0;
      for (auto r : valid) {
        const double d = x->value[r * C + c] - mean;
        ss += d * d;
      }
      var = ss / n;
      const double unbiased = n > 1 ? ss / (n - 1.0) : var;
      stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean;
      stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * unbiased;
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (auto r : valid) {
      const double h = (x->value[r * C + c] - mean) * is;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = gamma->value[c] * h + beta->value[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [=](Node& self) {
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (auto r : valid) {
        sum_dy += self.grad[r * C + c];
        sum_dy_xhat += self.grad[r * C + c] * (*xhat)[r * C + c];
      }
      if (gamma->requires_grad) gamma->ensure_grad()[c] += sum_dy_xhat;
      if (beta->requires_grad) beta->ensure_grad()[c] += sum_dy;
      if (!x->requires_grad) continue;
      auto& gx = x->ensure_grad();
      const double gm = gamma->value[c], is = (*inv_std)[c];
      for (auto r : valid) {
        const double dy = self.grad[r * C + c];
        if (training) {
          gx[r * C + c] += gm * is * (dy - sum_dy / n - (*xhat)[r * C + c] * sum_dy_xhat / n);
        } else {
          gx[r * C + c] += gm * is * dy;
        }
      }
    }
  });
}

/// Max-pool with window 2 / stride 2 over the time axis, ignoring masked
/// positions. A pooled position is valid when any of its inputs is; invalid
/// pooled positions are 0. Returns the pooled tensor and its mask.
inline std::pair<Var, Tensor> masked_max_pool(const Var& x, const Tensor& mask) {
  expect_rank(x->value, 3, "max_pool input");
  const std::size_t B = x->value.dim(0), T = x->value.dim(1), C = x->value.dim(2);
  expect_shape(mask, {B, T}, "max_pool mask");
  const std::size_t To = (T + 1) / 2;
  Tensor out({B, To, C});
  Tensor out_mask({B, To});
  auto argmax = std::make_shared<std::vector<std::ptrdiff_t>>(B * To * C, -1);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < To; ++o) {
      for (std::size_t t = 2 * o; t < std::min(T, 2 * o + 2); ++t) {
        if (mask[b * T + t] != 0.0) out_mask[b * To + o] = 1.0;
      }
      if (out_mask[b * To + o] == 0.0) continue;
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t arg = -1;
        for (std::size_t t = 2 * o; t < std::min(T, 2 * o + 2); ++t) {
          if (mask[b * T + t] == 0.0) continue;
          const double v = x->value[(b * T + t) * C + c];
          if (v > best) {
            best = v;
            arg = static_cast<std::ptrdiff_t>((b * T + t) * C + c);
          }
        }
        out[(b * To + o) * C + c] = best;
        (*argmax)[(b * To + o) * C + c] = arg;
      }
    }
  }
  Var result = make_result(std::move(out), {x}, [x, argmax](Node& self) {
    auto& gx = x->ensure_grad();
    for (std::size_t i = 0; i < argmax->size(); ++i) {
      if ((*argmax)[i] >= 0) gx[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    }
  });
  return {result, out_mask};
}

/// Max over all unmasked time steps: (B, T, C) -> (B, C). Rows with no valid
/// step produce 0.
inline Var masked_global_max(const Var& x, const Tensor& mask) {
  expect_rank(x->value, 3, "global_max input");
  const std::size_t B = x->value.dim(0), T = x->value.dim(1), C = x->value.dim(2);
  expect_shape(mask, {B, T}, "global_max mask");
  Tensor out({B, C});
  auto argmax = std::make_shared<std::vector<std::ptrdiff_t>>(B * C, -1);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::ptrdiff_t arg = -1;
      for (std::size_t t = 0; t < T; ++t) {
        if (mask[b * T + t] == 0.0) continue;
        const double v = x->value[(b * T + t) * C + c];
        if (v > best) {
          best = v;
          arg = static_cast<std::ptrdiff_t>((b * T + t) * C + c);
        }
      }
      out[b * C + c] = arg >= 0 ? best : 0.0;
      (*argmax)[b * C + c] = arg;
    }
  }
  return make_result(std::move(out), {x}, [x, argmax](Node& self) {
    auto& gx = x->ensure_grad();
    for (std::size_t i = 0; i < argmax->size(); ++i) {
      if ((*argmax)[i] >= 0) gx[static_cast<std::size_t>((*argmax)[i])] += self.grad[i];
    }
  });
}

/// Inverted dropout; identity outside training or when p == 0.
inline Var dropout(const Var& x, double p, SeededRng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout probability must be < 1");
  auto keep = std::make_shared<std::vector<double>>(x->value.size());
  Tensor out(x->value.shape);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = rng.uniform01() >= p ? scale : 0.0;
    out[i] = x->value[i] * (*keep)[i];
  }
  return make_result(std::move(out), {x}, [x, keep](Node& self) {
    auto& gx = x->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*keep)[i];
  });
}

/// Row-wise softmax of (B, K) logits.
inline Tensor softmax(const Tensor& logits) {
  expect_rank(logits, 2, "softmax");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor p(logits.shape);
  for (std::size_t b = 0; b < B; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, logits[b * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += (p[b * K + k] = std::exp(logits[b * K + k] - mx));
    for (std::size_t k = 0; k < K; ++k) p[b * K + k] /= z;
  }
  return p;
}

/// Mean softmax cross-entropy of (B, K) logits against class indices.
inline Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& labels) {
  expect_rank(logits->value, 2, "cross_entropy logits");
  const std::size_t B = logits->value.dim(0), K = logits->value.dim(1);
  if (labels.size() != B) throw Error(ErrorCode::ShapeMismatch, "label count != batch size");
  auto probs = std::make_shared<Tensor>(softmax(logits->value));
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] >= K) throw Error(ErrorCode::InvalidArgument, "label out of range");
    loss -= std::log(std::max((*probs)[b * K + labels[b]], std::numeric_limits<double>::min()));
  }
  loss /= static_cast<double>(B);
  return make_result(Tensor({1}, {loss}), {logits}, [logits, probs, labels, B, K](Node& self) {
    auto& g = logits->ensure_grad();
    const double s = self.grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < K; ++k)
        g[b * K + k] += s * ((*probs)[b * K + k] - (labels[b] == k ? 1.0 : 0.0));
  });
}

/// Per-label score band [lower, upper].
struct Band {
  double lower;
  double upper;
};

/// Mean over the batch of min(0, s - lower)^2 + max(0, s - upper)^2 for (B, 1) scores.
inline Var band_loss(const Var& scores, const std::vector<Band>& bands) {
  const std::size_t B = scores->value.size();
  if (bands.size() != B) throw Error(ErrorCode::ShapeMismatch, "band count != batch size");
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double s = scores->value[b];
    const double lo = std::min(0.0, s - bands[b].lower);
    const double hi = std::max(0.0, s - bands[b].upper);
    loss += lo * lo + hi * hi;
  }
  loss /= static_cast<double>(B);
  return make_result(Tensor({1}, {loss}), {scores}, [scores, bands, B](Node& self) {
    auto& g = scores->ensure_grad();
    const double s0 = self.grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
      const double s = scores->value[b];
      const double lo = std::min(0.0, s - bands[b].lower);
      const double hi = std::max(0.0, s - bands[b].upper);
      g[b] += s0 * 2.0 * (lo + hi);
    }
  });
}

}  // namespace subqe::nn
