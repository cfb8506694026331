#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/text.hpp"

namespace subqe {

/// Milliseconds since the start of the file.
struct Timestamp {
  std::int64_t millis = 0;

  static constexpr std::int64_t kMax = ((99LL * 60 + 59) * 60 + 59) * 1000 + 999;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// "HH:MM:SS,mmm"
inline std::string format_timestamp(Timestamp t) {
  std::int64_t ms = t.millis;
  const auto h = ms / 3600000;
  ms %= 3600000;
  const auto m = ms / 60000;
  ms %= 60000;
  const auto s = ms / 1000;
  ms %= 1000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld,%03lld", static_cast<long long>(h),
                static_cast<long long>(m), static_cast<long long>(s), static_cast<long long>(ms));
  return buf;
}

inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  s = trim(s);
  // HH:MM:SS,mmm with 1-2 hour digits; '.' is accepted as the millisecond separator
  auto digits = [&](std::size_t pos, std::size_t n, std::int64_t& out) {
    if (pos + n > s.size()) return false;
    out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char c = s[pos + i];
      if (c < '0' || c > '9') return false;
      out = out * 10 + (c - '0');
    }
    return true;
  };
  const auto colon = s.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 2) return std::nullopt;
  std::int64_t h, m, sec, ms;
  if (!digits(0, colon, h)) return std::nullopt;
  std::size_t p = colon + 1;
  if (!digits(p, 2, m) || p + 2 >= s.size() || s[p + 2] != ':') return std::nullopt;
  p += 3;
  if (!digits(p, 2, sec) || p + 2 >= s.size() || (s[p + 2] != ',' && s[p + 2] != '.')) {
    return std::nullopt;
  }
  p += 3;
  if (!digits(p, 3, ms) || p + 3 != s.size()) return std::nullopt;
  if (m >= 60 || sec >= 60) return std::nullopt;
  return Timestamp{((h * 60 + m) * 60 + sec) * 1000 + ms};
}

struct TextBlock {
  std::int64_t index = 0;
  Timestamp start;
  Timestamp end;
  std::vector<std::string> lines;

  friend bool operator==(const TextBlock&, const TextBlock&) = default;
};

/// Block lines joined with single spaces and styling markup removed; this is
/// the text unit that gets paired and scored.
inline std::string block_text(const TextBlock& block) {
  std::string joined;
  for (const auto& line : block.lines) {
    const std::string stripped = strip_markup(line);
    const auto t = trim(stripped);
    if (t.empty()) continue;
    if (!joined.empty()) joined.push_back(' ');
    joined += t;
  }
  return joined;
}

struct SubtitleFile {
  std::string language;
  std::vector<TextBlock> blocks;

  friend bool operator==(const SubtitleFile&, const SubtitleFile&) = default;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      lines.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\n') {
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

inline bool is_blank(std::string_view line) { return trim(line).empty(); }

}  // namespace detail

/// Parses SRT text (UTF-8, optional BOM, LF or CRLF line endings).
/// Blocks whose start times go backwards are sorted and renumbered; each such
/// repair is reported through `warnings` instead of failing the parse.
inline SubtitleFile parse_srt(std::string_view text, std::string language = {},
                              std::vector<ParseWarning>* warnings = nullptr) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  const auto lines = detail::split_lines(text);
  SubtitleFile file;
  file.language = std::move(language);

  std::size_t i = 0;
  while (true) {
    while (i < lines.size() && detail::is_blank(lines[i])) ++i;
    if (i >= lines.size()) break;

    const std::size_t index_line = i + 1;
    const auto index_text = trim(lines[i]);
    std::int64_t index = 0;
    bool index_ok = !index_text.empty() && index_text.size() <= 12;
    for (char c : index_text) {
      if (c < '0' || c > '9') {
        index_ok = false;
        break;
      }
      index = index * 10 + (c - '0');
    }
    if (!index_ok || index <= 0) {
      throw Error(ErrorCode::MissingIndex, "line " + std::to_string(index_line) + ": expected block index");
    }
    ++i;
    if (i >= lines.size()) {
      throw Error(ErrorCode::MalformedTimestamp,
                  "line " + std::to_string(i + 1) + ": missing timestamp line");
    }
    const std::string_view arrow_line = lines[i];
    const auto arrow = arrow_line.find("-->");
    std::optional<Timestamp> start, end;
    if (arrow != std::string_view::npos) {
      start = parse_timestamp(arrow_line.substr(0, arrow));
      end = parse_timestamp(arrow_line.substr(arrow + 3));
    }
    if (!start || !end) {
      throw Error(ErrorCode::MalformedTimestamp,
                  "line " + std::to_string(i + 1) + ": bad timestamp line '" + std::string(arrow_line) + "'");
    }
    if (!(*start < *end)) {
      throw Error(ErrorCode::MalformedTimestamp,
                  "line " + std::to_string(i + 1) + ": start must precede end");
    }
    ++i;
    TextBlock block{index, *start, *end, {}};
    while (i < lines.size() && !detail::is_blank(lines[i])) block.lines.push_back(lines[i++]);
    if (block.lines.empty()) {
      throw Error(ErrorCode::EmptyBlock, "block " + std::to_string(index) + " has no text");
    }
    file.blocks.push_back(std::move(block));
  }

  bool sorted = true;
  bool increasing = true;
  for (std::size_t b = 1; b < file.blocks.size(); ++b) {
    if (file.blocks[b].start < file.blocks[b - 1].start) sorted = false;
    if (file.blocks[b].index <= file.blocks[b - 1].index) increasing = false;
  }
  if (!sorted) {
    std::stable_sort(file.blocks.begin(), file.blocks.end(),
                     [](const TextBlock& a, const TextBlock& b) { return a.start < b.start; });
    if (warnings) warnings->push_back({0, "NonMonotonicStart: blocks sorted by start time"});
  }
  if (!sorted || !increasing) {
    for (std::size_t b = 0; b < file.blocks.size(); ++b) {
      file.blocks[b].index = static_cast<std::int64_t>(b + 1);
    }
    if (warnings && !increasing) warnings->push_back({0, "block indices renumbered"});
  }
  return file;
}

inline std::string serialize_srt(const SubtitleFile& file) {
  std::string out;
  for (const auto& block : file.blocks) {
    out += std::to_string(block.index);
    out += '\n';
    out += format_timestamp(block.start);
    out += " --> ";
    out += format_timestamp(block.end);
    out += '\n';
    for (const auto& line : block.lines) {
      out += line;
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

enum class Provenance {
  Aligned,
  StatisticalClassification,
  GoodPairsFile,
  AddedCaptions,
  ScrambledText,
  DriftedAligned,
  RandomlyAligned,
};

inline constexpr Provenance kAllProvenances[] = {
    Provenance::Aligned,       Provenance::StatisticalClassification, Provenance::GoodPairsFile,
    Provenance::AddedCaptions, Provenance::ScrambledText,             Provenance::DriftedAligned,
    Provenance::RandomlyAligned};

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Aligned: return "aligned";
    case Provenance::StatisticalClassification: return "statistical_classification";
    case Provenance::GoodPairsFile: return "good_pairs_file";
    case Provenance::AddedCaptions: return "added_captions";
    case Provenance::ScrambledText: return "scrambled_text";
    case Provenance::DriftedAligned: return "drifted_aligned";
    case Provenance::RandomlyAligned: return "randomly_aligned";
  }
  return "aligned";
}

inline Provenance parse_provenance(std::string_view s) {
  for (auto p : kAllProvenances) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorCode::MalformedRow, "unknown provenance '" + std::string(s) + "'");
}

struct BilingualPair {
  std::string source_text;
  std::string target_text;
  std::string source_lang;
  std::string target_lang;
  Provenance provenance = Provenance::Aligned;
  std::optional<std::int64_t> source_block_id;
  std::optional<std::int64_t> target_block_id;

  bool valid() const {
    return !trim(source_text).empty() && !trim(target_text).empty() && source_lang != target_lang;
  }

  friend bool operator==(const BilingualPair&, const BilingualPair&) = default;
};

struct AlignReport {
  std::size_t pairs = 0;
  std::size_t unmatched_source = 0;
  std::size_t unmatched_target = 0;
};

/// Temporal intersection-over-union of two blocks.
inline double temporal_iou(const TextBlock& a, const TextBlock& b) {
  const auto lo = std::max(a.start.millis, b.start.millis);
  const auto hi = std::min(a.end.millis, b.end.millis);
  const auto inter = std::max<std::int64_t>(0, hi - lo);
  const auto uni = (a.end.millis - a.start.millis) + (b.end.millis - b.start.millis) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Greedy one-to-one matching by descending temporal IoU. Ties go to the
/// earlier source block, then the earlier target block.
inline std::vector<BilingualPair> align_by_timestamp(const SubtitleFile& src, const SubtitleFile& tgt,
                                                     double min_overlap_ratio = 0.5,
                                                     AlignReport* report = nullptr) {
  if (!(min_overlap_ratio > 0.0 && min_overlap_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "min_overlap_ratio must be in (0, 1]");
  }
  struct Candidate {
    double iou;
    std::size_t s, t;
  };
  std::vector<Candidate> candidates;
  // prefix maximum of target end times; every target before `first_t` ends
  // at or before the current source start
  std::vector<std::int64_t> max_end(tgt.blocks.size());
  for (std::size_t t = 0; t < tgt.blocks.size(); ++t) {
    max_end[t] = std::max(t ? max_end[t - 1] : 0, tgt.blocks[t].end.millis);
  }
  std::size_t first_t = 0;
  for (std::size_t s = 0; s < src.blocks.size(); ++s) {
    const auto& sb = src.blocks[s];
    while (first_t < tgt.blocks.size() && max_end[first_t] <= sb.start.millis) ++first_t;
    for (std::size_t t = first_t; t < tgt.blocks.size() && tgt.blocks[t].start.millis < sb.end.millis; ++t) {
      const double iou = temporal_iou(sb, tgt.blocks[t]);
      if (iou >= min_overlap_ratio) candidates.push_back({iou, s, t});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.s, a.t) < std::tie(b.s, b.t);
  });
  std::vector<char> used_s(src.blocks.size(), 0), used_t(tgt.blocks.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  for (const auto& c : candidates) {
    if (used_s[c.s] || used_t[c.t]) continue;
    used_s[c.s] = used_t[c.t] = 1;
    matches.emplace_back(c.s, c.t);
  }
  std::sort(matches.begin(), matches.end());

  std::vector<BilingualPair> pairs;
  for (auto [s, t] : matches) {
    BilingualPair p;
    p.source_text = block_text(src.blocks[s]);
    p.target_text = block_text(tgt.blocks[t]);
    if (trim(p.source_text).empty() || trim(p.target_text).empty()) continue;
    p.source_lang = src.language;
    p.target_lang = tgt.language;
    p.provenance = Provenance::Aligned;
    p.source_block_id = src.blocks[s].index;
    p.target_block_id = tgt.blocks[t].index;
    pairs.push_back(std::move(p));
  }
  if (report) {
    report->pairs = pairs.size();
    report->unmatched_source = src.blocks.size() - pairs.size();
    report->unmatched_target = tgt.blocks.size() - pairs.size();
  }
  return pairs;
}

inline constexpr std::string_view kPairsHeader = "source_text\ttarget_text\tsource_lang\ttarget_lang\tprovenance";

inline void write_pairs_tsv(std::ostream& out, const std::vector<BilingualPair>& pairs) {
  out << kPairsHeader << '\n';
  for (const auto& p : pairs) {
    out << tsv_clean(p.source_text) << '\t' << tsv_clean(p.target_text) << '\t' << p.source_lang << '\t'
        << p.target_lang << '\t' << to_string(p.provenance) << '\n';
  }
}

inline std::vector<BilingualPair> read_pairs_tsv(std::istream& in) {
  std::vector<BilingualPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == kPairsHeader) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 5) {
      throw Error(ErrorCode::MalformedRow, "pairs TSV line " + std::to_string(line_no) + ": expected 5 columns");
    }
    BilingualPair p;
    p.source_text = cols[0];
    p.target_text = cols[1];
    p.source_lang = cols[2];
    p.target_lang = cols[3];
    p.provenance = parse_provenance(cols[4]);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

/// Trusted good pairs: two tab-separated columns (source, target); lines
/// starting with '#' are comments.
inline std::vector<BilingualPair> read_good_pairs_tsv(std::istream& in, const std::string& source_lang,
                                                      const std::string& target_lang) {
  std::vector<BilingualPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2) {
      throw Error(ErrorCode::MalformedRow, "good-pairs line " + std::to_string(line_no) + ": expected 2 columns");
    }
    if (line_no == 1 && cols[0] == "source" && cols[1] == "target") continue;
    BilingualPair p{cols[0], cols[1], source_lang, target_lang, Provenance::GoodPairsFile, {}, {}};
    if (p.valid()) pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace subqe
