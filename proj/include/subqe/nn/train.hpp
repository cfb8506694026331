#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/nn/model.hpp"
#include "subqe/rng.hpp"
#include "subqe/text.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void init(const std::vector<std::pair<std::string, Var>>& params) {
    m.clear();
    v.clear();
    for (const auto& [_, p] : params) {
      m.emplace_back(p->value.shape);
      v.emplace_back(p->value.shape);
    }
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline void zero_grad(const std::vector<std::pair<std::string, Var>>& params) {
  for (const auto& [_, p] : params) p->grad = Tensor();
}

/// One Adam update; parameters without a gradient are left alone.
inline void adam_step(AdamState& s, const std::vector<std::pair<std::string, Var>>& params) {
  if (s.m.size() != params.size()) s.init(params);
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Node& p = *params[k].second;
    if (p.grad.shape != p.value.shape) continue;
    Tensor& m = s.m[k];
    Tensor& v = s.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
      p.value[i] -= s.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
    }
  }
}

/// Epoch-level learning-rate schedule: a relative loss drop below `tolerance`
/// multiplies the rate by `factor`; the trigger after `max_drops` drops stops training.
struct PlateauSchedule {
  double tolerance = 1e-3;
  double factor = 0.1;
  std::size_t max_drops = 2;
  std::size_t drops = 0;
  std::optional<double> previous;

  enum class Action { Continue, Drop, Stop };

  Action observe(double loss) {
    Action a = Action::Continue;
    if (previous) {
      const double rel = *previous > 0.0 ? (*previous - loss) / *previous : 0.0;
      if (rel < tolerance) {
        if (drops >= max_drops) {
          a = Action::Stop;
        } else {
          ++drops;
          a = Action::Drop;
        }
      }
    }
    previous = loss;
    return a;
  }
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  double plateau_tolerance = 1e-3;
  double lr_factor = 0.1;
  std::size_t max_drops = 2;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

inline std::string format_epoch(const EpochLog& e, bool with_time = true) {
  char buf[128];
  if (with_time) {
    std::snprintf(buf, sizeof buf, "epoch %zu\tloss %.6f\tlr %g\tseconds %.2f", e.epoch, e.loss, e.lr, e.seconds);
  } else {
    std::snprintf(buf, sizeof buf, "epoch %zu\tloss %.17g\tlr %g", e.epoch, e.loss, e.lr);
  }
  return buf;
}

struct Example {
  TokenSequence source;
  TokenSequence target;
  QeLabel label = QeLabel::Bad;
};

inline Example make_example(const LabeledPair& lp) {
  return {tokenize(lp.pair.source_text), tokenize(lp.pair.target_text), lp.label};
}

struct TrainResult {
  std::vector<EpochLog> log;
  bool stopped_by_schedule = false;
};

/// Everything a resumable run needs besides the model itself.
struct TrainerState {
  AdamState adam;
  PlateauSchedule schedule;
  SeededRng rng{0};
  std::size_t epoch = 0;
};

inline TrainerState make_trainer_state(const TrainConfig& cfg, std::uint64_t seed) {
  TrainerState s;
  s.adam.lr = cfg.lr;
  s.schedule.tolerance = cfg.plateau_tolerance;
  s.schedule.factor = cfg.lr_factor;
  s.schedule.max_drops = cfg.max_drops;
  s.rng = SeededRng(derive_seed(seed, "train"));
  return s;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs epochs until the schedule stops or `max_epochs` is reached. Batches
/// are drawn from a fresh seeded permutation every epoch.
inline TrainResult train(QeModel& model, const std::vector<Example>& data, const PairEncoder& encoder,
                         const TrainConfig& cfg, TrainerState& state, const EpochCallback& on_epoch = {}) {
  if (data.empty()) throw Error(ErrorCode::Empty, "no training examples");
  if (cfg.batch_size == 0) throw Error(ErrorCode::Config, "batch_size must be positive");
  if (encoder.dim() != model.config().embed_dim) {
    throw Error(ErrorCode::DimMismatch, "embedding dim " + std::to_string(encoder.dim()) + " != model embed_dim " +
                                            std::to_string(model.config().embed_dim));
  }
  auto& params = model.parameters();
  if (state.adam.m.size() != params.size()) state.adam.init(params);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  while (state.epoch < cfg.max_epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    state.rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
      std::vector<QeLabel> labels;
      for (std::size_t i = start; i < end; ++i) {
        pairs.emplace_back(data[order[i]].source, data[order[i]].target);
        labels.push_back(data[order[i]].label);
      }
      zero_grad(params);
      ForwardResult fr = model.forward_train(encoder.encode(pairs), state.rng);
      Var loss = model.loss(fr, labels);
      const double value = loss->value[0];
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(state.epoch + 1) + " batch " +
                                                  std::to_string(start / cfg.batch_size) + " loss " +
                                                  std::to_string(value) + " at lr " + std::to_string(state.adam.lr));
      }
      backward(loss);
      adam_step(state.adam, params);
      total += value * static_cast<double>(end - start);
    }
    ++state.epoch;
    EpochLog e{state.epoch, total / static_cast<double>(data.size()), state.adam.lr,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
    const auto action = state.schedule.observe(e.loss);
    if (action == PlateauSchedule::Action::Stop) {
      result.stopped_by_schedule = true;
      break;
    }
    if (action == PlateauSchedule::Action::Drop) state.adam.lr *= state.schedule.factor;
  }
  zero_grad(params);
  return result;
}

/// Predictions for many examples, in batches.
inline std::vector<Prediction> predict_all(const QeModel& model, const std::vector<Example>& data,
                                           const PairEncoder& encoder, std::size_t batch_size = 512) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
    for (std::size_t i = start; i < end; ++i) pairs.emplace_back(data[i].source, data[i].target);
    auto preds = model.predict(encoder.encode(pairs));
    for (auto& p : preds) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace subqe::nn
