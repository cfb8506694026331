#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "subqe/bow_scorer.hpp"
#include "subqe/error.hpp"
#include "subqe/forest.hpp"
#include "subqe/nn/model.hpp"
#include "subqe/nn/train.hpp"
#include "subqe/synth.hpp"
#include "subqe/text.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe {

/// Everything one pipeline run needs. Serialized as flat `key = value` lines;
/// relative paths are resolved against SUBQE_DATA_DIR when it is set.
struct PipelineConfig {
  std::string source_lang = "en";
  std::string target_lang = "de";
  std::uint64_t seed = 1;

  std::string source_embeddings;
  std::string target_embeddings;
  std::string source_subtitles;  // directory of .srt files
  std::string target_subtitles;
  std::string good_pairs;
  std::string captions;
  std::string rfc_model;
  std::string rfc_corpus;  // parallel corpus of the forest; defaults to good_pairs

  double align_min_overlap = 0.5;
  std::size_t synth_samples = 10000;
  std::size_t drift_window = 3;

  BowParams bow = default_bow_params("de");
  FusionThresholds fusion;
  bool strict_loose = false;
  ForestParams forest;
  SourceWeights weights = default_source_weights("de");

  nn::ModelConfig model;
  nn::TrainConfig train;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw Error(ErrorCode::Config, key + ": '" + v + "' is not a number");
  return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::Config, key + ": '" + v + "' is not a non-negative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, key + ": '" + v + "' is out of range");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::Config, key + ": '" + v + "' is not a boolean");
}

struct ConfigField {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = PipelineConfig;
  auto str = [](const char* key, std::string C::*m) {
    return ConfigField{key, [m](const C& c) { return c.*m; }, [m](C& c, const std::string& v) { c.*m = v; }};
  };
  auto dbl = [](const char* key, auto getter) {
    return ConfigField{key, [getter](const C& c) { return fmt_double(*getter(const_cast<C&>(c))); },
                       [key, getter](C& c, const std::string& v) { *getter(c) = parse_double(key, v); }};
  };
  auto size = [](const char* key, auto getter) {
    return ConfigField{key, [getter](const C& c) { return std::to_string(*getter(const_cast<C&>(c))); },
                       [key, getter](C& c, const std::string& v) {
                         *getter(c) = static_cast<std::size_t>(parse_uint(key, v));
                       }};
  };
  static const std::vector<ConfigField> fields = {
      {"lang_pair", [](const C& c) { return c.source_lang + "-" + c.target_lang; },
       [](C& c, const std::string& v) {
         const auto dash = v.find('-');
         if (dash == std::string::npos || dash == 0 || dash + 1 == v.size()) {
           throw Error(ErrorCode::Config, "lang_pair: expected <src>-<tgt>, got '" + v + "'");
         }
         c.source_lang = v.substr(0, dash);
         c.target_lang = v.substr(dash + 1);
       }},
      {"seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const std::string& v) { c.seed = parse_uint("seed", v); }},
      str("source_embeddings", &C::source_embeddings),
      str("target_embeddings", &C::target_embeddings),
      str("source_subtitles", &C::source_subtitles),
      str("target_subtitles", &C::target_subtitles),
      str("good_pairs", &C::good_pairs),
      str("captions", &C::captions),
      str("rfc_model", &C::rfc_model),
      str("rfc_corpus", &C::rfc_corpus),
      dbl("align.min_overlap", [](C& c) { return &c.align_min_overlap; }),
      size("synth.samples", [](C& c) { return &c.synth_samples; }),
      size("synth.drift_window", [](C& c) { return &c.drift_window; }),
      dbl("bow.theta1", [](C& c) { return &c.bow.theta1; }),
      dbl("bow.theta2", [](C& c) { return &c.bow.theta2; }),
      dbl("fusion.delta1", [](C& c) { return &c.fusion.delta1; }),
      dbl("fusion.delta2", [](C& c) { return &c.fusion.delta2; }),
      dbl("fusion.delta3", [](C& c) { return &c.fusion.delta3; }),
      dbl("fusion.delta4", [](C& c) { return &c.fusion.delta4; }),
      {"fusion.strict_loose", [](const C& c) { return std::string(c.strict_loose ? "true" : "false"); },
       [](C& c, const std::string& v) { c.strict_loose = parse_bool("fusion.strict_loose", v); }},
      size("forest.n_trees", [](C& c) { return &c.forest.n_trees; }),
      size("forest.max_depth", [](C& c) { return &c.forest.max_depth; }),
      size("forest.min_samples_leaf", [](C& c) { return &c.forest.min_samples_leaf; }),
      size("forest.features_per_split", [](C& c) { return &c.forest.features_per_split; }),
      size("forest.threads", [](C& c) { return &c.forest.threads; }),
      dbl("weights.statistical", [](C& c) { return &c.weights.statistical; }),
      dbl("weights.good_pairs", [](C& c) { return &c.weights.good_pairs; }),
      dbl("weights.added_captions", [](C& c) { return &c.weights.added_captions; }),
      dbl("weights.scrambled_text", [](C& c) { return &c.weights.scrambled_text; }),
      dbl("weights.drifted_aligned", [](C& c) { return &c.weights.drifted_aligned; }),
      dbl("weights.randomly_aligned", [](C& c) { return &c.weights.randomly_aligned; }),
      size("model.embed_dim", [](C& c) { return &c.model.embed_dim; }),
      size("model.seq_len", [](C& c) { return &c.model.seq_len; }),
      size("model.lstm_hidden", [](C& c) { return &c.model.lstm_hidden; }),
      size("model.conv1_channels", [](C& c) { return &c.model.conv_channels[0]; }),
      size("model.conv2_channels", [](C& c) { return &c.model.conv_channels[1]; }),
      size("model.conv1_kernel", [](C& c) { return &c.model.conv_kernels[0]; }),
      size("model.conv2_kernel", [](C& c) { return &c.model.conv_kernels[1]; }),
      size("model.fc_width", [](C& c) { return &c.model.fc_width; }),
      dbl("model.dropout_p", [](C& c) { return &c.model.dropout_p; }),
      size("model.n_classes", [](C& c) { return &c.model.n_classes; }),
      {"model.architecture", [](const C& c) { return std::string(nn::to_string(c.model.architecture)); },
       [](C& c, const std::string& v) { c.model.architecture = nn::parse_architecture(v); }},
      {"model.head", [](const C& c) { return std::string(nn::to_string(c.model.head)); },
       [](C& c, const std::string& v) { c.model.head = nn::parse_head(v); }},
      {"model.pooling", [](const C& c) { return std::string(nn::to_string(c.model.pooling)); },
       [](C& c, const std::string& v) { c.model.pooling = nn::parse_pooling(v); }},
      dbl("train.lr", [](C& c) { return &c.train.lr; }),
      size("train.batch_size", [](C& c) { return &c.train.batch_size; }),
      size("train.max_epochs", [](C& c) { return &c.train.max_epochs; }),
      dbl("train.plateau_tolerance", [](C& c) { return &c.train.plateau_tolerance; }),
      dbl("train.lr_factor", [](C& c) { return &c.train.lr_factor; }),
      size("train.max_drops", [](C& c) { return &c.train.max_drops; }),
  };
  return fields;
}

}  // namespace detail

inline std::string emit_config(const PipelineConfig& c) {
  std::string out = "# subqe pipeline configuration\n";
  for (const auto& f : detail::config_fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

/// Applies one `key=value` override.
inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (key == f.key) {
      f.set(c, value);
      if (key == "lang_pair") c.bow.language = c.target_lang;
      return;
    }
  }
  throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
}

/// Parses a config file. Keys left out keep their defaults; BOW thresholds and
/// source weights default to the target language's tuned values.
inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig c;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Config, "line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key(trim(t.substr(0, eq)));
    std::string value(trim(t.substr(eq + 1)));
    if (!seen.insert(key).second) throw Error(ErrorCode::Config, "duplicate key '" + key + "'");
    entries.emplace_back(std::move(key), std::move(value));
  }
  // the language pair decides per-language defaults, so it goes first
  for (const auto& [k, v] : entries) {
    if (k == "lang_pair") set_config_value(c, k, v);
  }
  const BowParams lang_bow = default_bow_params(c.target_lang);
  if (!seen.contains("bow.theta1")) c.bow.theta1 = lang_bow.theta1;
  if (!seen.contains("bow.theta2")) c.bow.theta2 = lang_bow.theta2;
  c.bow.language = c.target_lang;
  const SourceWeights lang_w = default_source_weights(c.target_lang);
  c.weights = lang_w;
  for (const auto& [k, v] : entries) {
    if (k != "lang_pair") set_config_value(c, k, v);
  }
  return c;
}

inline std::string resolve_path(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  if (const char* base = std::getenv("SUBQE_DATA_DIR"); base && *base) {
    return (std::filesystem::path(base) / path).string();
  }
  return path;
}

/// Throws ErrorCode::Config on the first violated constraint.
inline void validate_config(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
  if (c.source_lang.empty() || c.target_lang.empty()) fail("lang_pair must name two languages");
  if (!c.bow.valid()) fail("bow thresholds must lie in [0, 1]");
  if (!c.fusion.valid()) fail("fusion thresholds must satisfy 0 <= d1 < d2 <= d3 < d4 <= 1");
  if (!(c.align_min_overlap > 0.0 && c.align_min_overlap <= 1.0)) fail("align.min_overlap must be in (0, 1]");
  if (c.drift_window < 1) fail("synth.drift_window must be >= 1");
  if (c.forest.n_trees == 0) fail("forest.n_trees must be positive");
  if (c.forest.min_samples_leaf == 0) fail("forest.min_samples_leaf must be positive");
  if (c.forest.features_per_split == 0) fail("forest.features_per_split must be positive");
  for (double w : c.weights.as_array()) {
    if (!(w >= 0.0)) fail("source weights must be non-negative");
  }
  c.model.validate();
  if (!(c.train.lr > 0.0)) fail("train.lr must be positive");
  if (c.train.batch_size == 0) fail("train.batch_size must be positive");
  if (!(c.train.lr_factor > 0.0 && c.train.lr_factor < 1.0)) fail("train.lr_factor must be in (0, 1)");
  for (const auto& [key, path] : {std::pair{"source_embeddings", c.source_embeddings},
                                  {"target_embeddings", c.target_embeddings},
                                  {"source_subtitles", c.source_subtitles},
                                  {"target_subtitles", c.target_subtitles},
                                  {"good_pairs", c.good_pairs},
                                  {"captions", c.captions},
                                  {"rfc_corpus", c.rfc_corpus}}) {
    if (!path.empty() && !std::filesystem::exists(resolve_path(path))) {
      fail(std::string(key) + ": path '" + resolve_path(path) + "' does not exist");
    }
  }
}

}  // namespace subqe
