#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "subqe/embeddings.hpp"
#include "subqe/error.hpp"
#include "subqe/nn/autograd.hpp"
#include "subqe/nn/ops.hpp"
#include "subqe/nn/tensor.hpp"
#include "subqe/rng.hpp"
#include "subqe/text.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe::nn {

enum class Architecture { Hybrid, LstmOnly, CnnOnly };
enum class Head { Classification, Scoring };
/// How the last sequence tensor becomes a vector: keep every position, or
/// take a masked max over time (padding-invariant).
enum class Pooling { Flatten, MaskedMax };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Hybrid: return "hybrid";
    case Architecture::LstmOnly: return "lstm";
    case Architecture::CnnOnly: return "cnn";
  }
  return "?";
}
inline std::string_view to_string(Head h) { return h == Head::Classification ? "classification" : "scoring"; }
inline std::string_view to_string(Pooling p) { return p == Pooling::Flatten ? "flatten" : "masked_max"; }

inline Architecture parse_architecture(std::string_view s) {
  if (s == "hybrid") return Architecture::Hybrid;
  if (s == "lstm") return Architecture::LstmOnly;
  if (s == "cnn") return Architecture::CnnOnly;
  throw Error(ErrorCode::Config, "unknown architecture '" + std::string(s) + "'");
}
inline Head parse_head(std::string_view s) {
  if (s == "classification") return Head::Classification;
  if (s == "scoring") return Head::Scoring;
  throw Error(ErrorCode::Config, "unknown head '" + std::string(s) + "'");
}
inline Pooling parse_pooling(std::string_view s) {
  if (s == "flatten") return Pooling::Flatten;
  if (s == "masked_max") return Pooling::MaskedMax;
  throw Error(ErrorCode::Config, "unknown pooling '" + std::string(s) + "'");
}

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t seq_len = kMaxTokens;
  std::size_t lstm_hidden = 32;
  // The CNN-only baseline runs a third module with the second module's settings.
  std::array<std::size_t, 2> conv_channels{32, 32};
  std::array<std::size_t, 2> conv_kernels{3, 3};
  std::size_t fc_width = 64;
  double dropout_p = 0.3;
  std::size_t n_classes = 3;
  Architecture architecture = Architecture::Hybrid;
  Head head = Head::Classification;
  Pooling pooling = Pooling::Flatten;

  std::size_t outputs() const { return head == Head::Classification ? n_classes : 1; }
  std::size_t conv_modules() const { return architecture == Architecture::CnnOnly ? 3 : 2; }
  std::size_t channels(std::size_t module) const { return conv_channels[std::min<std::size_t>(module, 1)]; }
  std::size_t kernel(std::size_t module) const { return conv_kernels[std::min<std::size_t>(module, 1)]; }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
    if (seq_len != kMaxTokens) fail("seq_len must be " + std::to_string(kMaxTokens));
    if (head == Head::Classification && n_classes != 3) fail("classification head needs n_classes = 3");
    if (embed_dim == 0 || lstm_hidden == 0 || fc_width == 0) fail("model widths must be positive");
    for (std::size_t i = 0; i < 2; ++i) {
      if (conv_channels[i] == 0) fail("conv channels must be positive");
      if (conv_kernels[i] == 0 || conv_kernels[i] % 2 == 0) fail("conv kernels must be odd");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must be in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-label target band for the scoring head.
struct ScoringBands {
  Band bad{0.0, 0.35};
  Band loose{0.35, 0.65};
  Band good{0.65, 1.0};

  const Band& band(QeLabel l) const {
    switch (l) {
      case QeLabel::Bad: return bad;
      case QeLabel::Loose: return loose;
      case QeLabel::Good: return good;
    }
    return bad;
  }

  bool valid() const {
    return bad.lower == 0.0 && bad.upper == loose.lower && loose.upper == good.lower && good.upper == 1.0 &&
           bad.lower < bad.upper && loose.lower < loose.upper && good.lower < good.upper;
  }
};

/// Band lookup; lower bounds are inclusive.
inline QeLabel predict_scoring(double score, const ScoringBands& bands = {}) {
  if (score < bands.loose.lower) return QeLabel::Bad;
  if (score < bands.good.lower) return QeLabel::Loose;
  return QeLabel::Good;
}

inline Var scoring_loss(const Var& scores, const std::vector<QeLabel>& labels, const ScoringBands& bands = {}) {
  std::vector<Band> b;
  b.reserve(labels.size());
  for (auto l : labels) b.push_back(bands.band(l));
  return band_loss(scores, b);
}

inline Var classification_loss(const Var& logits, const std::vector<QeLabel>& labels) {
  std::vector<std::size_t> idx;
  idx.reserve(labels.size());
  for (auto l : labels) idx.push_back(label_index(l));
  return softmax_cross_entropy(logits, idx);
}

/// Embedded, zero-padded token sequences for a batch of pairs.
struct Batch {
  Tensor source;       // (B, seq_len, E)
  Tensor source_mask;  // (B, seq_len)
  Tensor target;
  Tensor target_mask;

  std::size_t size() const { return source.rank() ? source.dim(0) : 0; }
};

/// Looks tokens up in frozen embedding tables; OOV tokens get the zero vector
/// but still occupy a valid position.
class PairEncoder {
 public:
  PairEncoder(const EmbeddingTable& source, const EmbeddingTable& target, std::size_t seq_len = kMaxTokens)
      : source_(&source), target_(&target), seq_len_(seq_len) {
    if (source.dim() != target.dim()) throw Error(ErrorCode::DimMismatch, "source/target embedding dims differ");
  }

  std::size_t dim() const { return source_->dim(); }

  Batch encode(const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs) const {
    const std::size_t B = pairs.size(), T = seq_len_, E = dim();
    Batch b{Tensor({B, T, E}), Tensor({B, T}), Tensor({B, T, E}), Tensor({B, T})};
    for (std::size_t i = 0; i < B; ++i) {
      fill(pairs[i].first, *source_, b.source.ptr() + i * T * E, b.source_mask.ptr() + i * T);
      fill(pairs[i].second, *target_, b.target.ptr() + i * T * E, b.target_mask.ptr() + i * T);
    }
    return b;
  }

  Batch encode_one(const TokenSequence& src, const TokenSequence& tgt) const { return encode({{src, tgt}}); }

 private:
  void fill(const TokenSequence& tokens, const EmbeddingTable& table, double* rows, double* mask) const {
    const std::size_t E = dim();
    for (std::size_t t = 0; t < std::min(tokens.size(), seq_len_); ++t) {
      mask[t] = 1.0;
      auto v = table.find(tokens[t]);
      if (!v.empty()) std::copy(v.begin(), v.end(), rows + t * E);
    }
  }

  const EmbeddingTable* source_;
  const EmbeddingTable* target_;
  std::size_t seq_len_;
};

struct ForwardResult {
  Var output;       // logits (B, 3) or sigmoid scores (B, 1)
  Var penultimate;  // input of the final layer (B, fc_width)
};

struct Prediction {
  QeLabel label = QeLabel::Bad;
  std::vector<double> probabilities;  // classification head only
  std::optional<double> score;        // scoring head only
};

inline std::size_t argmax_bad_first(const double* p, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

class QeModel {
 public:
  QeModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    SeededRng rng(derive_seed(seed, "init"));
    build(rng);
  }

  // Parameters are shared nodes, so copies must be explicit.
  QeModel(const QeModel&) = delete;
  QeModel& operator=(const QeModel&) = delete;
  QeModel(QeModel&&) = default;
  QeModel& operator=(QeModel&&) = default;

  QeModel clone() const {
    QeModel c(config_, 0);
    for (std::size_t k = 0; k < params_.size(); ++k) c.params_[k].second->value = params_[k].second->value;
    c.stats_ = stats_;
    c.bands_ = bands_;
    return c;
  }

  const ModelConfig& config() const { return config_; }
  std::vector<std::pair<std::string, Var>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Var>>& parameters() const { return params_; }
  std::vector<std::pair<std::string, BatchNormStats>>& bn_stats() { return stats_; }
  const std::vector<std::pair<std::string, BatchNormStats>>& bn_stats() const { return stats_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p->value.size();
    return n;
  }

  const Var& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
    return params_[it->second].second;
  }

  /// Training-mode forward: batch statistics, dropout, tape attached to the parameters.
  ForwardResult forward_train(const Batch& batch, SeededRng& rng) {
    Pass pass{this, true, &rng, &stats_, {}};
    return pass.run(batch);
  }

  /// Eval-mode forward; does not touch the model, safe to call concurrently.
  ForwardResult forward_eval(const Batch& batch) const {
    auto stats = stats_;
    Pass pass{this, false, nullptr, &stats, {}};
    return pass.run(batch);
  }

  /// Encoder output for recurrent architectures: (B, 2*seq_len, 4*lstm_hidden).
  Tensor encode(const Batch& batch) const {
    auto stats = stats_;
    Pass pass{this, false, nullptr, &stats, {}};
    check_batch(batch);
    return pass.encoder(batch).first->value;
  }

  std::vector<Prediction> predict(const Batch& batch) const {
    const Tensor out = forward_eval(batch).output->value;
    const std::size_t B = batch.size();
    std::vector<Prediction> preds(B);
    if (config_.head == Head::Classification) {
      const Tensor p = softmax(out);
      const std::size_t K = config_.n_classes;
      for (std::size_t b = 0; b < B; ++b) {
        preds[b].probabilities.assign(p.ptr() + b * K, p.ptr() + (b + 1) * K);
        preds[b].label = kAllLabels[argmax_bad_first(p.ptr() + b * K, K)];
      }
    } else {
      for (std::size_t b = 0; b < B; ++b) {
        preds[b].score = out[b];
        preds[b].label = predict_scoring(out[b], bands_);
      }
    }
    return preds;
  }

  /// (B, fc_width) activations feeding the output layer, eval mode.
  Tensor penultimate_activations(const Batch& batch) const { return forward_eval(batch).penultimate->value; }

  const ScoringBands& bands() const { return bands_; }

  Var loss(const ForwardResult& fr, const std::vector<QeLabel>& labels) const {
    return config_.head == Head::Classification ? classification_loss(fr.output, labels)
                                                : scoring_loss(fr.output, labels, bands_);
  }

 private:
  struct Pass {
    const QeModel* model;
    bool training;
    SeededRng* rng;
    std::vector<std::pair<std::string, BatchNormStats>>* stats;
    std::unordered_map<std::string, Var> frozen;

    Var p(const std::string& name) {
      const Var& v = model->param(name);
      if (training) return v;
      auto [it, inserted] = frozen.try_emplace(name);
      if (inserted) it->second = constant(v->value);
      return it->second;
    }

    BatchNormStats& bn(const std::string& name) {
      for (auto& [n, s] : *stats) {
        if (n == name) return s;
      }
      throw Error(ErrorCode::InvalidArgument, "no batch-norm stats named " + name);
    }

    Var bilstm(const Var& x, const Tensor& mask, const std::string& prefix) {
      Var f = lstm(x, mask, p(prefix + ".fwd.wx"), p(prefix + ".fwd.wh"), p(prefix + ".fwd.b"), false);
      Var b = lstm(x, mask, p(prefix + ".bwd.wx"), p(prefix + ".bwd.wh"), p(prefix + ".bwd.b"), true);
      return concat({f, b}, 2);
    }

    Var encode_side(const Tensor& x, const Tensor& mask, const std::string& side) {
      Var in = constant(x);
      Var l1 = bilstm(in, mask, "enc." + side + ".l1");
      Var l2 = bilstm(l1, mask, "enc." + side + ".l2");
      return concat({l1, l2}, 2);
    }

    std::pair<Var, Tensor> encoder(const Batch& batch) {
      Var s = encode_side(batch.source, batch.source_mask, "src");
      Var t = encode_side(batch.target, batch.target_mask, "tgt");
      return {concat({s, t}, 1), joined_mask(batch)};
    }

    // (B, 2T, E) source|target embeddings with padded rows zeroed.
    static Tensor masked_input(const Batch& batch, const Tensor& mask) {
      const std::size_t B = batch.size(), T = batch.source_mask.dim(1), E = batch.source.dim(2);
      Tensor x({B, 2 * T, E});
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < 2 * T; ++t) {
          if (mask[b * 2 * T + t] == 0.0) continue;
          const Tensor& side = t < T ? batch.source : batch.target;
          std::copy_n(side.ptr() + (b * T + t % T) * E, E, x.ptr() + (b * 2 * T + t) * E);
        }
      }
      return x;
    }

    static Tensor joined_mask(const Batch& batch) {
      const std::size_t B = batch.size(), T = batch.source_mask.dim(1);
      Tensor m({B, 2 * T});
      for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(batch.source_mask.ptr() + b * T, T, m.ptr() + b * 2 * T);
        std::copy_n(batch.target_mask.ptr() + b * T, T, m.ptr() + b * 2 * T + T);
      }
      return m;
    }

    std::pair<Var, Tensor> conv_module(const Var& x, const Tensor& mask, std::size_t i) {
      const std::string n = std::to_string(i + 1);
      Var c = conv1d(x, p("conv" + n + ".w"), p("conv" + n + ".b"), model->config_.kernel(i));
      Var h = batch_norm(c, mask, p("bn" + n + ".gamma"), p("bn" + n + ".beta"), bn("bn" + n), training);
      return masked_max_pool(relu(h), mask);
    }

    ForwardResult run(const Batch& batch) {
      const ModelConfig& cfg = model->config_;
      model->check_batch(batch);
      Var seq;
      Tensor mask;
      if (cfg.architecture == Architecture::CnnOnly) {
        mask = joined_mask(batch);
        seq = constant(masked_input(batch, mask));
      } else {
        std::tie(seq, mask) = encoder(batch);
      }
      if (cfg.architecture != Architecture::LstmOnly) {
        for (std::size_t i = 0; i < cfg.conv_modules(); ++i) std::tie(seq, mask) = conv_module(seq, mask, i);
      }
      Var flat;
      if (cfg.pooling == Pooling::MaskedMax) {
        flat = masked_global_max(seq, mask);
      } else {
        flat = reshape(seq, {batch.size(), seq->value.size() / batch.size()});
      }
      Var hidden = relu(linear(flat, p("fc1.w"), p("fc1.b")));
      if (training) hidden = dropout(hidden, cfg.dropout_p, *rng, true);
      Var out = linear(hidden, p("out.w"), p("out.b"));
      if (cfg.head == Head::Scoring) out = sigmoid(out);
      return {out, hidden};
    }
  };

  void check_batch(const Batch& batch) const {
    const std::size_t B = batch.size();
    if (B == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");
    const Shape seq{B, config_.seq_len, config_.embed_dim};
    expect_shape(batch.source, seq, "source batch");
    expect_shape(batch.target, seq, "target batch");
    expect_shape(batch.source_mask, {B, config_.seq_len}, "source mask");
    expect_shape(batch.target_mask, {B, config_.seq_len}, "target mask");
  }

  void add_param(const std::string& name, Shape shape, SeededRng& rng, double fill = 0.0, bool glorot = false) {
    Tensor t(shape, fill);
    if (glorot) {
      const double fan_in = static_cast<double>(shape[0]);
      const double fan_out = static_cast<double>(shape[1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.data) v = rng.uniform(-limit, limit);
    }
    index_[name] = params_.size();
    params_.emplace_back(name, parameter(std::move(t)));
  }

  void add_lstm(const std::string& prefix, std::size_t input, SeededRng& rng) {
    const std::size_t H = config_.lstm_hidden;
    for (const char* dir : {".fwd", ".bwd"}) {
      const std::string base = prefix + dir;
      add_param(base + ".wx", {input, 4 * H}, rng, 0.0, true);
      add_param(base + ".wh", {H, 4 * H}, rng, 0.0, true);
      add_param(base + ".b", {4 * H}, rng);
      auto& b = params_.back().second->value;
      for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
    }
  }

  void build(SeededRng& rng) {
    const ModelConfig& c = config_;
    const std::size_t H = c.lstm_hidden, T2 = 2 * c.seq_len;
    std::size_t width = 0, length = T2;
    if (c.architecture != Architecture::CnnOnly) {
      for (const char* side : {"src", "tgt"}) {
        add_lstm(std::string("enc.") + side + ".l1", c.embed_dim, rng);
        add_lstm(std::string("enc.") + side + ".l2", 2 * H, rng);
      }
      width = 4 * H;
    } else {
      width = c.embed_dim;
    }
    if (c.architecture != Architecture::LstmOnly) {
      for (std::size_t i = 0; i < c.conv_modules(); ++i) {
        const std::string n = std::to_string(i + 1);
        add_param("conv" + n + ".w", {c.kernel(i) * width, c.channels(i)}, rng, 0.0, true);
        add_param("conv" + n + ".b", {c.channels(i)}, rng);
        add_param("bn" + n + ".gamma", {c.channels(i)}, rng, 1.0);
        add_param("bn" + n + ".beta", {c.channels(i)}, rng);
        stats_.emplace_back("bn" + n, BatchNormStats(c.channels(i)));
        width = c.channels(i);
        length = (length + 1) / 2;
      }
    }
    const std::size_t flat = c.pooling == Pooling::MaskedMax ? width : width * length;
    add_param("fc1.w", {flat, c.fc_width}, rng, 0.0, true);
    add_param("fc1.b", {c.fc_width}, rng);
    add_param("out.w", {c.fc_width, c.outputs()}, rng, 0.0, true);
    add_param("out.b", {c.outputs()}, rng);
  }

  ModelConfig config_;
  ScoringBands bands_;
  std::vector<std::pair<std::string, Var>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, BatchNormStats>> stats_;
};

}  // namespace subqe::nn
