#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/text.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe {

/// Rows are true labels, columns predicted labels, both in QeLabel order.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumLabels>, kNumLabels> counts{};

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& r : counts)
      for (auto c : r) n += c;
    return n;
  }
  std::uint64_t trace() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < kNumLabels; ++i) n += counts[i][i];
    return n;
  }
  std::uint64_t at(QeLabel truth, QeLabel pred) const { return counts[label_index(truth)][label_index(pred)]; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<QeLabel>& pred, const std::vector<QeLabel>& truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth counts differ");
  if (pred.empty()) throw Error(ErrorCode::Empty, "nothing to evaluate");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm.counts[label_index(truth[i])][label_index(pred[i])];
  return cm;
}

struct LengthBucket {
  std::size_t lower = 0;
  std::size_t upper = 0;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

inline constexpr std::size_t kLengthBucketWidth = 5;
inline constexpr std::size_t kLengthBuckets = kMaxTokens / kLengthBucketWidth;

/// Accuracy by target token count in buckets [1-5] ... [21-25]; empty
/// buckets are absent. Lengths outside 1..25 are ignored.
inline std::array<std::optional<LengthBucket>, kLengthBuckets> length_buckets(
    const std::vector<std::size_t>& target_lengths, const std::vector<QeLabel>& pred,
    const std::vector<QeLabel>& truth) {
  if (target_lengths.size() != pred.size() || pred.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch, "length, prediction and truth counts differ");
  }
  if (pred.empty()) throw Error(ErrorCode::Empty, "nothing to bucket");
  std::array<std::optional<LengthBucket>, kLengthBuckets> out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t len = target_lengths[i];
    if (len < 1 || len > kMaxTokens) continue;
    const std::size_t b = (len - 1) / kLengthBucketWidth;
    if (!out[b]) out[b] = LengthBucket{b * kLengthBucketWidth + 1, (b + 1) * kLengthBucketWidth, 0, 0};
    ++out[b]->count;
    if (pred[i] == truth[i]) ++out[b]->correct;
  }
  return out;
}

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
  std::array<double, kNumLabels> class_precision{};
  std::array<double, kNumLabels> class_recall{};  // also the per-label accuracy
  std::array<double, kNumLabels> class_f1{};
  std::uint64_t total = 0;
  std::array<std::optional<LengthBucket>, kLengthBuckets> by_length{};
};

/// Per-class precision/recall/F1 with 0/0 taken as 0, macro-averaged.
inline MetricsReport metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.total = cm.total();
  if (r.total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      predicted += cm.counts[j][k];
      actual += cm.counts[k][j];
    }
    const double tp = static_cast<double>(cm.counts[k][k]);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double rc = actual ? tp / static_cast<double>(actual) : 0.0;
    r.class_precision[k] = p;
    r.class_recall[k] = rc;
    r.class_f1[k] = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.precision += p / kNumLabels;
    r.recall += rc / kNumLabels;
    r.f1 += r.class_f1[k] / kNumLabels;
  }
  return r;
}

inline bool is_positive(QeLabel l) { return l != QeLabel::Bad; }

/// Fraction of positive (Good/Loose) pairs predicted Bad. With
/// `positives_only` every truth label must be positive.
inline double miss_rate(const std::vector<QeLabel>& pred, const std::vector<QeLabel>& truth,
                        bool positives_only = false) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth counts differ");
  std::size_t positives = 0, missed = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!is_positive(truth[i])) {
      if (positives_only) throw Error(ErrorCode::InvalidArgument, "positives-only set contains a bad pair");
      continue;
    }
    ++positives;
    if (pred[i] == QeLabel::Bad) ++missed;
  }
  if (positives == 0) throw Error(ErrorCode::NoPositives, "no positive pairs");
  return static_cast<double>(missed) / static_cast<double>(positives);
}

/// For sets known to hold only acceptable translations.
inline double miss_rate(const std::vector<QeLabel>& pred) {
  if (pred.empty()) throw Error(ErrorCode::NoPositives, "no positive pairs");
  std::size_t missed = 0;
  for (auto p : pred) missed += p == QeLabel::Bad;
  return static_cast<double>(missed) / static_cast<double>(pred.size());
}

inline MetricsReport evaluate(const std::vector<QeLabel>& pred, const std::vector<QeLabel>& truth,
                              const std::vector<std::size_t>& target_lengths) {
  MetricsReport r = metrics(confusion(pred, truth));
  r.by_length = length_buckets(target_lengths, pred, truth);
  return r;
}

// ---- text and TSV reports ----

namespace detail {

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

inline std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string count_label(std::size_t n) {
  char buf[32];
  if (n >= 1000000) std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
  else if (n >= 1000) std::snprintf(buf, sizeof buf, "%.1fk", static_cast<double>(n) / 1e3);
  else std::snprintf(buf, sizeof buf, "%zu", n);
  return buf;
}

inline std::string row(const std::vector<std::string>& cells, std::size_t first = 12, std::size_t width = 14) {
  std::string s = cells.empty() ? "" : cells[0] + std::string(first > cells[0].size() ? first - cells[0].size() : 1, ' ');
  for (std::size_t i = 1; i < cells.size(); ++i) s += "|" + pad_left(cells[i], width);
  return s + "\n";
}

}  // namespace detail

/// Train/test accuracy row.
struct AccuracyRow {
  std::string name;
  std::size_t train_samples = 0;
  double train_accuracy = 0.0;
  std::size_t test_samples = 0;
  MetricsReport test;
};

inline std::string accuracy_table(const std::vector<AccuracyRow>& rows) {
  std::string s = detail::row({"", "Train", "", "Test", "", "", "", ""});
  s += detail::row({"", "# Samples", "Accuracy", "# Samples", "Accuracy", "Precision", "Recall", "F-Score"});
  for (const auto& r : rows) {
    s += detail::row({r.name, detail::count_label(r.train_samples), detail::pct(r.train_accuracy),
                      detail::count_label(r.test_samples), detail::pct(r.test.accuracy), detail::pct(r.test.precision),
                      detail::pct(r.test.recall), detail::pct(r.test.f1)});
  }
  return s;
}

inline std::string accuracy_tsv(const std::vector<AccuracyRow>& rows) {
  std::string s = "name\ttrain_samples\ttrain_accuracy\ttest_samples\ttest_accuracy\tprecision\trecall\tf1\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%.6f\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", r.name.c_str(), r.train_samples,
                  r.train_accuracy, r.test_samples, r.test.accuracy, r.test.precision, r.test.recall, r.test.f1);
    s += buf;
  }
  return s;
}

/// Miss rate on one or more positives-only corpora.
struct MissRateRow {
  std::string name;
  std::vector<std::pair<std::size_t, double>> corpora;  // (# sentences, FNR)
};

inline std::string miss_rate_table(const std::vector<std::string>& corpus_names, const std::vector<MissRateRow>& rows) {
  std::vector<std::string> head{""}, sub{""};
  for (const auto& c : corpus_names) {
    head.push_back(c);
    head.push_back("");
    sub.push_back("# sentences");
    sub.push_back("FNR");
  }
  std::string s = detail::row(head) + detail::row(sub);
  for (const auto& r : rows) {
    std::vector<std::string> cells{r.name};
    for (const auto& [n, fnr] : r.corpora) {
      cells.push_back(detail::count_label(n));
      cells.push_back(detail::pct(fnr));
    }
    s += detail::row(cells);
  }
  return s;
}

inline std::string miss_rate_tsv(const std::vector<std::string>& corpus_names, const std::vector<MissRateRow>& rows) {
  std::string s = "name\tcorpus\tsentences\tfnr\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.corpora.size() && k < corpus_names.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "\t%zu\t%.6f\n", r.corpora[k].first, r.corpora[k].second);
      s += r.name + "\t" + corpus_names[k] + buf;
    }
  }
  return s;
}

/// Named accuracy columns, e.g. classification vs scoring or one per architecture.
struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  std::string text() const {
    std::vector<std::string> head{""};
    head.insert(head.end(), columns.begin(), columns.end());
    std::string s = detail::row(head);
    for (const auto& [name, values] : rows) {
      std::vector<std::string> cells{name};
      for (double v : values) cells.push_back(detail::pct(v));
      s += detail::row(cells);
    }
    return s;
  }

  std::string tsv() const {
    std::string s = "name";
    for (const auto& c : columns) s += "\t" + c;
    s += "\n";
    for (const auto& [name, values] : rows) {
      s += name;
      for (double v : values) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "\t%.6f", v);
        s += buf;
      }
      s += "\n";
    }
    return s;
  }
};

/// Full report of one evaluation: headline numbers, confusion matrix,
/// per-label and per-length accuracy.
inline std::string metrics_text(const MetricsReport& r, const ConfusionMatrix& cm) {
  std::string s = detail::row({"", "# Samples", "Accuracy", "Precision", "Recall", "F-Score"});
  s += detail::row({"all", std::to_string(r.total), detail::pct(r.accuracy), detail::pct(r.precision),
                    detail::pct(r.recall), detail::pct(r.f1)});
  s += "\nconfusion (rows = truth, columns = predicted)\n";
  s += detail::row({"", "bad", "loose", "good"});
  for (auto t : kAllLabels) {
    s += detail::row({std::string(to_string(t)), std::to_string(cm.at(t, QeLabel::Bad)),
                      std::to_string(cm.at(t, QeLabel::Loose)), std::to_string(cm.at(t, QeLabel::Good))});
  }
  s += "\nper-label accuracy\n";
  for (auto t : kAllLabels) {
    s += detail::row({std::string(to_string(t)), detail::pct(r.class_recall[label_index(t)])});
  }
  s += "\naccuracy by target length\n";
  for (const auto& b : r.by_length) {
    if (!b) continue;
    s += detail::row({std::to_string(b->lower) + "-" + std::to_string(b->upper), std::to_string(b->count),
                      detail::pct(b->accuracy())});
  }
  return s;
}

inline std::string metrics_tsv(const MetricsReport& r) {
  std::string s = "metric\tvalue\n";
  auto add = [&](const std::string& k, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "\t%.6f\n", v);
    s += k + buf;
  };
  add("accuracy", r.accuracy);
  add("precision", r.precision);
  add("recall", r.recall);
  add("f1", r.f1);
  for (auto t : kAllLabels) add("accuracy_" + std::string(to_string(t)), r.class_recall[label_index(t)]);
  for (const auto& b : r.by_length) {
    if (b) add("accuracy_len_" + std::to_string(b->lower) + "_" + std::to_string(b->upper), b->accuracy());
  }
  return s;
}

}  // namespace subqe
