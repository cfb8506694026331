#pragma once

#include <array>
#include <cstdio>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/rng.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/synth.hpp"

namespace subqe {

/// Class order doubles as the classifier output index; argmax ties resolve
/// toward the lowest index (Bad).
enum class QeLabel { Bad = 0, Loose = 1, Good = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr QeLabel kAllLabels[kNumLabels] = {QeLabel::Bad, QeLabel::Loose, QeLabel::Good};

inline std::string_view to_string(QeLabel l) {
  switch (l) {
    case QeLabel::Bad: return "bad";
    case QeLabel::Loose: return "loose";
    case QeLabel::Good: return "good";
  }
  return "bad";
}

inline QeLabel parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  throw Error(ErrorCode::MalformedRow, "unknown label '" + std::string(s) + "'");
}

inline std::size_t label_index(QeLabel l) { return static_cast<std::size_t>(l); }

struct FusionThresholds {
  double delta1 = 0.25;
  double delta2 = 0.4;
  double delta3 = 0.7;
  double delta4 = 0.8;

  bool valid() const {
    auto unit = [](double d) { return d >= 0.0 && d <= 1.0; };
    return unit(delta1) && unit(delta2) && unit(delta3) && unit(delta4) && delta1 < delta2 && delta2 <= delta3 &&
           delta3 < delta4;
  }
  friend bool operator==(const FusionThresholds&, const FusionThresholds&) = default;
};

/// Label fusion of the bag-of-words and forest scores. `nullopt` means the two
/// scorers disagree and the sample is discarded.
///
/// The Loose band only looks at the forest score; `strict_loose` additionally
/// requires s_bow >= delta2.
inline std::optional<QeLabel> fuse_labels(double s_bow, double s_rfc, const FusionThresholds& t = {},
                                          bool strict_loose = false) {
  if (!(s_bow >= 0.0 && s_bow <= 1.0) || !(s_rfc >= 0.0 && s_rfc <= 1.0)) {
    throw Error(ErrorCode::OutOfRangeScore, "scores must lie in [0, 1]");
  }
  if (s_bow <= t.delta1 && s_rfc <= t.delta1) return QeLabel::Bad;
  if (s_rfc <= t.delta3 && s_rfc >= t.delta2 && (!strict_loose || s_bow >= t.delta2)) return QeLabel::Loose;
  if (s_bow >= t.delta4 && s_rfc >= t.delta4) return QeLabel::Good;
  return std::nullopt;
}

/// Label implied by a synthetic source; nullopt for sources labelled by fusion.
inline std::optional<QeLabel> provenance_label(Provenance p) {
  switch (p) {
    case Provenance::GoodPairsFile: return QeLabel::Good;
    case Provenance::AddedCaptions:
    case Provenance::ScrambledText: return QeLabel::Loose;
    case Provenance::DriftedAligned:
    case Provenance::RandomlyAligned: return QeLabel::Bad;
    case Provenance::Aligned:
    case Provenance::StatisticalClassification: return std::nullopt;
  }
  return std::nullopt;
}

struct LabeledPair {
  BilingualPair pair;
  QeLabel label = QeLabel::Bad;
  std::optional<double> s_bow;
  std::optional<double> s_rfc;

  Provenance source_tag() const noexcept { return pair.provenance; }
  bool consistent() const {
    const auto expected = provenance_label(pair.provenance);
    return !expected || *expected == label;
  }
};

struct DiscardedPair {
  BilingualPair pair;
  double s_bow = 0.0;
  double s_rfc = 0.0;
};

/// Per-source and per-label tallies of an assembled dataset.
struct DistributionReport {
  std::string language;
  std::array<std::size_t, 6> per_source{};  // kSourceOrder
  std::array<std::size_t, 3> per_label{};   // Bad, Good, Loose (table order)
  std::size_t discarded = 0;
  std::size_t failures = 0;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : per_label) t += c;
    return t;
  }

  static std::size_t label_column(QeLabel l) {
    switch (l) {
      case QeLabel::Bad: return 0;
      case QeLabel::Good: return 1;
      case QeLabel::Loose: return 2;
    }
    return 0;
  }

  void count(const LabeledPair& lp) {
    for (std::size_t k = 0; k < 6; ++k) {
      if (kSourceOrder[k] == lp.pair.provenance) ++per_source[k];
    }
    ++per_label[label_column(lp.label)];
  }

  std::array<double, 6> source_percentages() const {
    std::array<double, 6> out{};
    const double n = static_cast<double>(total());
    for (std::size_t k = 0; k < 6; ++k) out[k] = n > 0 ? 100.0 * static_cast<double>(per_source[k]) / n : 0.0;
    return out;
  }

  std::array<double, 3> label_percentages() const {
    std::array<double, 3> out{};
    const double n = static_cast<double>(total());
    for (std::size_t k = 0; k < 3; ++k) out[k] = n > 0 ? 100.0 * static_cast<double>(per_label[k]) / n : 0.0;
    return out;
  }

  std::string to_text() const {
    std::ostringstream out;
    char buf[256];
    out << "Data distribution from different sources (in %)\n";
    std::snprintf(buf, sizeof buf, "%-10s | %12s | %10s | %10s | %10s | %10s | %10s\n", "", "Statistical", "Good pairs",
                  "Added", "Scrambled", "Drifted", "Randomly");
    out << buf;
    std::snprintf(buf, sizeof buf, "%-10s | %12s | %10s | %10s | %10s | %10s | %10s\n", "", "Classification",
                  "(NMT)", "Captions", "Text", "Aligned", "Aligned");
    out << buf;
    const auto s = source_percentages();
    std::snprintf(buf, sizeof buf, "%-10s | %12.2f | %10.2f | %10.2f | %10.2f | %10.2f | %10.2f\n",
                  language.empty() ? "-" : language.c_str(), s[0], s[1], s[2], s[3], s[4], s[5]);
    out << buf << '\n';
    out << "Dataset label distribution (in %)\n";
    std::snprintf(buf, sizeof buf, "%-10s | %8s | %8s | %8s\n", "", "Bad", "Good", "Loose");
    out << buf;
    const auto l = label_percentages();
    std::snprintf(buf, sizeof buf, "%-10s | %8.2f | %8.2f | %8.2f\n", language.empty() ? "-" : language.c_str(), l[0],
                  l[1], l[2]);
    out << buf;
    out << "samples " << total() << " discarded " << discarded << " failures " << failures << '\n';
    return out.str();
  }
};

/// Scores one aligned pair as (s_bow, s_rfc).
using PairScorer = std::function<std::pair<double, double>(const BilingualPair&)>;

/// One aligned subtitle episode: both files plus their aligned pairs.
struct AlignedEpisode {
  SubtitleFile source;
  SubtitleFile target;
  std::vector<BilingualPair> pairs;
};

struct DatasetSources {
  std::vector<AlignedEpisode> episodes;
  std::vector<BilingualPair> good_pairs;
  CaptionLexicon captions = CaptionLexicon::defaults();
  PairScorer scorer;  // required for the statistical source
  FusionThresholds thresholds;
  bool strict_loose = false;
  std::size_t drift_window = 3;
};

struct AssembledDataset {
  std::vector<LabeledPair> samples;
  std::vector<DiscardedPair> discarded;
  DistributionReport report;
};

namespace detail {

/// Indices drawn from successive seeded permutations of [0, n).
class PoolCursor {
 public:
  PoolCursor(std::size_t n, SeededRng& rng) : n_(n), rng_(rng) {}
  std::size_t next() {
    if (pos_ >= order_.size()) {
      order_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  SeededRng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct SynthesizedPairs {
  std::vector<BilingualPair> pairs;
  std::size_t failures = 0;
};

/// Draws `n_samples` times: each draw picks a source by weight and emits one
/// pair tagged with that source. Draws a source cannot serve are counted as
/// failures. Statistical draws are emitted unlabeled, for `label_pairs`.
inline SynthesizedPairs synthesize_pairs(const DatasetSources& sources, const SourceWeights& weights,
                                         std::size_t n_samples, SeededRng& rng) {
  struct Ref {
    std::size_t episode, pair;
  };
  std::vector<Ref> aligned;
  for (std::size_t e = 0; e < sources.episodes.size(); ++e)
    for (std::size_t p = 0; p < sources.episodes[e].pairs.size(); ++p) aligned.push_back({e, p});

  auto w = weights.as_array();
  if (aligned.empty()) w[0] = w[2] = w[3] = w[4] = w[5] = 0.0;
  if (aligned.size() < 2) w[5] = 0.0;
  if (sources.good_pairs.empty()) w[1] = 0.0;
  if (sources.captions.empty()) w[2] = 0.0;
  double total_w = 0.0;
  for (double x : w) total_w += x;
  if (!(total_w > 0.0)) throw Error(ErrorCode::InvalidArgument, "no enabled data source");

  SynthesizedPairs out;
  std::vector<double> wv(w.begin(), w.end());
  detail::PoolCursor aligned_cursor(aligned.size(), rng);
  detail::PoolCursor good_cursor(sources.good_pairs.size(), rng);
  auto base_pair = [&](const Ref& r) -> const BilingualPair& { return sources.episodes[r.episode].pairs[r.pair]; };

  for (std::size_t k = 0; k < n_samples; ++k) {
    const std::size_t src = rng.categorical(wv);
    try {
      BilingualPair pair;
      switch (kSourceOrder[src]) {
        case Provenance::StatisticalClassification:
          pair = base_pair(aligned[aligned_cursor.next()]);
          pair.provenance = Provenance::StatisticalClassification;
          break;
        case Provenance::GoodPairsFile:
          pair = sources.good_pairs[good_cursor.next()];
          pair.provenance = Provenance::GoodPairsFile;
          break;
        case Provenance::AddedCaptions:
          pair = add_captions(base_pair(aligned[aligned_cursor.next()]), sources.captions, rng);
          break;
        case Provenance::ScrambledText:
          pair = scramble_target(base_pair(aligned[aligned_cursor.next()]), rng);
          break;
        case Provenance::DriftedAligned: {
          const Ref r = aligned[aligned_cursor.next()];
          const auto& ep = sources.episodes[r.episode];
          auto drifted = drift_align(ep.source, ep.target, {ep.pairs[r.pair]}, sources.drift_window, rng);
          if (drifted.empty()) throw Error(ErrorCode::NoNeighborInWindow, "no drift neighbour");
          pair = std::move(drifted.front());
          break;
        }
        case Provenance::RandomlyAligned: {
          const std::size_t i = aligned_cursor.next();
          std::size_t j = rng.uniform_index(aligned.size() - 1);
          if (j >= i) ++j;
          pair = base_pair(aligned[i]);
          pair.target_text = base_pair(aligned[j]).target_text;
          pair.target_block_id = base_pair(aligned[j]).target_block_id;
          pair.provenance = Provenance::RandomlyAligned;
          break;
        }
        default:
          continue;
      }
      out.pairs.push_back(std::move(pair));
    } catch (const Error&) {
      ++out.failures;
    }
  }
  return out;
}

/// Labels pairs by provenance; aligned and statistical pairs go through
/// `scorer` and score fusion, and those that fuse to no label are discarded.
inline AssembledDataset label_pairs(const std::vector<BilingualPair>& pairs, const PairScorer& scorer,
                                    const FusionThresholds& thresholds, bool strict_loose, std::string language = {}) {
  AssembledDataset out;
  out.report.language = std::move(language);
  for (const auto& pair : pairs) {
    LabeledPair lp;
    lp.pair = pair;
    if (const auto fixed = provenance_label(pair.provenance)) {
      lp.label = *fixed;
    } else {
      if (!scorer) throw Error(ErrorCode::InvalidArgument, "a statistical pair needs a scorer");
      lp.pair.provenance = Provenance::StatisticalClassification;
      const auto [s_bow, s_rfc] = scorer(lp.pair);
      const auto label = fuse_labels(s_bow, s_rfc, thresholds, strict_loose);
      if (!label) {
        out.discarded.push_back({lp.pair, s_bow, s_rfc});
        ++out.report.discarded;
        continue;
      }
      lp.label = *label;
      lp.s_bow = s_bow;
      lp.s_rfc = s_rfc;
    }
    out.report.count(lp);
    out.samples.push_back(std::move(lp));
  }
  return out;
}

/// `synthesize_pairs` followed by `label_pairs`. Without a scorer the
/// statistical source is disabled.
inline AssembledDataset build_dataset(const DatasetSources& sources, SourceWeights weights, std::size_t n_samples,
                                      SeededRng& rng, std::string language = {}) {
  if (!sources.scorer) weights.statistical = 0.0;
  const auto synth = synthesize_pairs(sources, weights, n_samples, rng);
  auto out = label_pairs(synth.pairs, sources.scorer, sources.thresholds, sources.strict_loose, std::move(language));
  out.report.failures = synth.failures;
  return out;
}

inline constexpr std::string_view kLabeledHeader = "source_text\ttarget_text\tlabel\tprovenance\ts_bow\ts_rfc";

namespace detail {
inline std::string score_field(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}
}  // namespace detail

inline void write_labeled_tsv(std::ostream& out, const std::vector<LabeledPair>& samples) {
  out << kLabeledHeader << '\n';
  for (const auto& s : samples) {
    out << tsv_clean(s.pair.source_text) << '\t' << tsv_clean(s.pair.target_text) << '\t' << to_string(s.label) << '\t'
        << to_string(s.pair.provenance) << '\t' << detail::score_field(s.s_bow) << '\t' << detail::score_field(s.s_rfc)
        << '\n';
  }
}

inline void write_discarded_tsv(std::ostream& out, const std::vector<DiscardedPair>& discarded) {
  out << "source_text\ttarget_text\tprovenance\ts_bow\ts_rfc\n";
  for (const auto& d : discarded) {
    out << tsv_clean(d.pair.source_text) << '\t' << tsv_clean(d.pair.target_text) << '\t' << to_string(d.pair.provenance)
        << '\t' << detail::score_field(d.s_bow) << '\t' << detail::score_field(d.s_rfc) << '\n';
  }
}

inline std::vector<LabeledPair> read_labeled_tsv(std::istream& in, const std::string& source_lang = "src",
                                                 const std::string& target_lang = "tgt") {
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == kLabeledHeader)) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 3) {
      throw Error(ErrorCode::MalformedRow, "labeled TSV line " + std::to_string(line_no) + ": expected >= 3 columns");
    }
    LabeledPair lp;
    lp.pair.source_text = cols[0];
    lp.pair.target_text = cols[1];
    lp.pair.source_lang = source_lang;
    lp.pair.target_lang = target_lang;
    lp.label = parse_label(cols[2]);
    lp.pair.provenance = cols.size() > 3 ? parse_provenance(cols[3]) : Provenance::Aligned;
    auto parse_score = [](const std::string& s) -> std::optional<double> {
      if (s == "NA" || s.empty()) return std::nullopt;
      return std::strtod(s.c_str(), nullptr);
    };
    if (cols.size() > 4) lp.s_bow = parse_score(cols[4]);
    if (cols.size() > 5) lp.s_rfc = parse_score(cols[5]);
    out.push_back(std::move(lp));
  }
  return out;
}

}  // namespace subqe
