#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "subqe/bow_scorer.hpp"
#include "subqe/config.hpp"
#include "subqe/embeddings.hpp"
#include "subqe/eval.hpp"
#include "subqe/features.hpp"
#include "subqe/forest.hpp"
#include "subqe/ngram.hpp"
#include "subqe/nn/checkpoint.hpp"
#include "subqe/nn/model.hpp"
#include "subqe/nn/train.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/synth.hpp"
#include "subqe/toy_corpus.hpp"
#include "subqe/weak_labeler.hpp"

namespace subqe {

namespace fs = std::filesystem;

// ---- file helpers ----

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return in;
}

inline void write_file(const std::string& path, const std::string& content) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

inline std::string require_path(const std::string& value, const char* key) {
  if (value.empty()) throw Error(ErrorCode::Config, std::string(key) + " is not set");
  return resolve_path(value);
}

inline EmbeddingTable load_embedding_file(const std::string& path, std::size_t dim, const std::string& lang) {
  auto in = open_in(path);
  return load_embeddings(in, dim, lang);
}

/// `.srt` files of a directory keyed by file stem.
inline std::map<std::string, SubtitleFile> load_subtitle_dir(const std::string& dir, const std::string& lang,
                                                             std::vector<std::string>* warnings = nullptr) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".srt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, SubtitleFile> out;
  for (const auto& f : files) {
    std::vector<ParseWarning> w;
    out.emplace(f.stem().string(), parse_srt(read_file(f.string()), lang, &w));
    if (warnings) {
      for (const auto& x : w) warnings->push_back(f.filename().string() + ": " + x.message);
    }
  }
  return out;
}

/// Pairs subtitle files by stem and aligns each pair by timestamps.
inline std::vector<AlignedEpisode> align_directories(const std::string& src_dir, const std::string& tgt_dir,
                                                     const PipelineConfig& cfg, AlignReport* total = nullptr) {
  auto src = load_subtitle_dir(src_dir, cfg.source_lang);
  auto tgt = load_subtitle_dir(tgt_dir, cfg.target_lang);
  std::vector<AlignedEpisode> episodes;
  AlignReport sum;
  for (auto& [stem, s] : src) {
    auto it = tgt.find(stem);
    if (it == tgt.end()) continue;
    AlignReport r;
    AlignedEpisode ep{std::move(s), std::move(it->second), {}};
    ep.pairs = align_by_timestamp(ep.source, ep.target, cfg.align_min_overlap, &r);
    sum.pairs += r.pairs;
    sum.unmatched_source += r.unmatched_source;
    sum.unmatched_target += r.unmatched_target;
    episodes.push_back(std::move(ep));
  }
  if (total) *total = sum;
  return episodes;
}

// ---- scorers ----

/// BOW plus forest scoring of aligned pairs, the input of label fusion.
class StatisticalScorer {
 public:
  StatisticalScorer(EmbeddingTable src, EmbeddingTable tgt, RandomForestModel forest,
                    const std::vector<BilingualPair>& ngram_corpus, BowParams bow)
      : src_(std::move(src)), tgt_(std::move(tgt)), forest_(std::move(forest)), bow_(std::move(bow)) {
    std::vector<TokenSequence> s, t;
    for (const auto& p : ngram_corpus) {
      s.push_back(tokenize(p.source_text));
      t.push_back(tokenize(p.target_text));
    }
    src_ngrams_ = NgramModel::from_corpus(s);
    tgt_ngrams_ = NgramModel::from_corpus(t);
  }

  std::pair<double, double> operator()(const BilingualPair& p) const {
    const auto s = tokenize(p.source_text), t = tokenize(p.target_text);
    const double s_bow = bow_score_pair(s, t, src_, tgt_, bow_);
    const FeatureResources res{src_, tgt_, src_ngrams_, tgt_ngrams_};
    const auto f = extract_features(s, t, res);
    return {s_bow, forest_.score(f)};
  }

 private:
  EmbeddingTable src_, tgt_;
  RandomForestModel forest_;
  BowParams bow_;
  NgramModel src_ngrams_, tgt_ngrams_;
};

inline std::vector<BilingualPair> read_parallel_file(const std::string& path, const PipelineConfig& cfg) {
  auto in = open_in(path);
  return read_good_pairs_tsv(in, cfg.source_lang, cfg.target_lang);
}

inline std::string rfc_corpus_path(const PipelineConfig& cfg) {
  return cfg.rfc_corpus.empty() ? require_path(cfg.good_pairs, "good_pairs") : resolve_path(cfg.rfc_corpus);
}

inline std::shared_ptr<StatisticalScorer> make_statistical_scorer(const PipelineConfig& cfg) {
  auto src = load_embedding_file(require_path(cfg.source_embeddings, "source_embeddings"), cfg.model.embed_dim,
                                 cfg.source_lang);
  auto tgt = load_embedding_file(require_path(cfg.target_embeddings, "target_embeddings"), cfg.model.embed_dim,
                                 cfg.target_lang);
  auto in = open_in(require_path(cfg.rfc_model, "rfc_model"));
  auto forest = load_forest(in);
  return std::make_shared<StatisticalScorer>(std::move(src), std::move(tgt), std::move(forest),
                                             read_parallel_file(rfc_corpus_path(cfg), cfg), cfg.bow);
}

// ---- commands ----

struct AlignSummary {
  std::size_t episodes = 0;
  AlignReport report;
  std::size_t pairs = 0;
};

inline AlignSummary cmd_align(const std::string& src_dir, const std::string& tgt_dir, const PipelineConfig& cfg,
                              const std::string& out) {
  AlignSummary s;
  const auto episodes = align_directories(src_dir, tgt_dir, cfg, &s.report);
  std::vector<BilingualPair> all;
  for (const auto& ep : episodes) all.insert(all.end(), ep.pairs.begin(), ep.pairs.end());
  std::ostringstream os;
  write_pairs_tsv(os, all);
  write_file(out, os.str());
  s.episodes = episodes.size();
  s.pairs = all.size();
  return s;
}

inline DatasetSources load_dataset_sources(const PipelineConfig& cfg) {
  DatasetSources src;
  if (!cfg.source_subtitles.empty() || !cfg.target_subtitles.empty()) {
    src.episodes = align_directories(require_path(cfg.source_subtitles, "source_subtitles"),
                                     require_path(cfg.target_subtitles, "target_subtitles"), cfg);
  }
  if (!cfg.good_pairs.empty()) src.good_pairs = read_parallel_file(resolve_path(cfg.good_pairs), cfg);
  if (!cfg.captions.empty()) {
    auto in = open_in(resolve_path(cfg.captions));
    src.captions = CaptionLexicon::load(in);
  }
  src.thresholds = cfg.fusion;
  src.strict_loose = cfg.strict_loose;
  src.drift_window = cfg.drift_window;
  return src;
}

/// Writes a pairs TSV whose provenance column says which generator made each row.
inline SynthesizedPairs cmd_synth(const PipelineConfig& cfg, const std::string& out) {
  const auto sources = load_dataset_sources(cfg);
  SeededRng rng(derive_seed(cfg.seed, "synth"));
  auto result = synthesize_pairs(sources, cfg.weights, cfg.synth_samples, rng);
  std::ostringstream os;
  write_pairs_tsv(os, result.pairs);
  write_file(out, os.str());
  return result;
}

/// Labels a pairs TSV; writes `out`, `out.discarded.tsv` and `out.report.txt`.
inline AssembledDataset cmd_label(const PipelineConfig& cfg, const std::string& pairs_path, const std::string& out) {
  auto in = open_in(pairs_path);
  const auto pairs = read_pairs_tsv(in);
  const bool needs_scorer = std::any_of(pairs.begin(), pairs.end(),
                                        [](const BilingualPair& p) { return !provenance_label(p.provenance); });
  PairScorer scorer;
  if (needs_scorer) {
    auto s = make_statistical_scorer(cfg);
    scorer = [s](const BilingualPair& p) { return (*s)(p); };
  }
  auto ds = label_pairs(pairs, scorer, cfg.fusion, cfg.strict_loose, cfg.target_lang);
  std::ostringstream lab, disc;
  write_labeled_tsv(lab, ds.samples);
  write_discarded_tsv(disc, ds.discarded);
  write_file(out, lab.str());
  write_file(out + ".discarded.tsv", disc.str());
  write_file(out + ".report.txt", ds.report.to_text());
  return ds;
}

struct RfcSummary {
  RfcCorpusReport corpus;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::array<double, 4> importance{};
};

inline TrainingSet feature_set(const std::vector<RfcSample>& samples, const FeatureResources& res) {
  TrainingSet set;
  set.n_features = kFeatureCount;
  for (const auto& s : samples) set.add(extract_features(s.pair, res), s.positive);
  return set;
}

inline double forest_accuracy(const RandomForestModel& m, const TrainingSet& set) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < set.size(); ++i) ok += m.predict(set.row(i)) == static_cast<bool>(set.labels[i]);
  return set.size() ? static_cast<double>(ok) / static_cast<double>(set.size()) : 0.0;
}

/// Builds the corrupted corpus from a parallel corpus, trains the forest on
/// 80% and reports accuracy on both parts.
inline RfcSummary train_rfc_on(const std::vector<BilingualPair>& parallel, const EmbeddingTable& src_emb,
                               const EmbeddingTable& tgt_emb, const ForestParams& params, std::uint64_t seed,
                               RandomForestModel* model_out) {
  RfcSummary s;
  const auto tables = CorruptionTables::from_sources(parallel);
  SeededRng rng(derive_seed(seed, "rfc-corpus"));
  auto corpus = build_rfc_corpus(parallel, tables, rng, &s.corpus);
  SeededRng split_rng(derive_seed(seed, "rfc-split"));
  auto [train, test] = split_train_test(std::move(corpus), split_rng);
  std::vector<TokenSequence> src, tgt;
  for (const auto& p : parallel) {
    src.push_back(tokenize(p.source_text));
    tgt.push_back(tokenize(p.target_text));
  }
  const auto src_ng = NgramModel::from_corpus(src), tgt_ng = NgramModel::from_corpus(tgt);
  const FeatureResources res{src_emb, tgt_emb, src_ng, tgt_ng};
  const TrainingSet train_set = feature_set(train, res), test_set = feature_set(test, res);
  auto model = train_rfc(train_set, params, derive_seed(seed, "rfc-forest"));
  s.train_size = train_set.size();
  s.test_size = test_set.size();
  s.train_accuracy = forest_accuracy(model, train_set);
  s.test_accuracy = forest_accuracy(model, test_set);
  s.importance = grouped_importance(model.feature_importance());
  if (model_out) *model_out = std::move(model);
  return s;
}

inline RfcSummary cmd_train_rfc(const PipelineConfig& cfg, const std::string& corpus_path, const std::string& out) {
  const auto parallel = read_parallel_file(corpus_path.empty() ? rfc_corpus_path(cfg) : corpus_path, cfg);
  const auto src = load_embedding_file(require_path(cfg.source_embeddings, "source_embeddings"), cfg.model.embed_dim,
                                       cfg.source_lang);
  const auto tgt = load_embedding_file(require_path(cfg.target_embeddings, "target_embeddings"), cfg.model.embed_dim,
                                       cfg.target_lang);
  RandomForestModel model;
  auto s = train_rfc_on(parallel, src, tgt, cfg.forest, cfg.seed, &model);
  std::ostringstream os;
  save_forest(os, model);
  write_file(out, os.str());
  return s;
}

inline std::vector<nn::Example> read_examples(const std::string& path) {
  auto in = open_in(path);
  std::vector<nn::Example> out;
  for (const auto& lp : read_labeled_tsv(in)) out.push_back(nn::make_example(lp));
  return out;
}

struct QeResources {
  EmbeddingTable source;
  EmbeddingTable target;
};

inline QeResources load_qe_resources(const PipelineConfig& cfg, std::size_t dim) {
  return {load_embedding_file(require_path(cfg.source_embeddings, "source_embeddings"), dim, cfg.source_lang),
          load_embedding_file(require_path(cfg.target_embeddings, "target_embeddings"), dim, cfg.target_lang)};
}

/// Trains from scratch and writes a resumable checkpoint. Epoch lines go to `log`.
inline nn::TrainResult cmd_train_qe(const PipelineConfig& cfg, const std::string& dataset, const std::string& out,
                                    std::ostream* log = nullptr) {
  const auto examples = read_examples(dataset);
  const auto res = load_qe_resources(cfg, cfg.model.embed_dim);
  const nn::PairEncoder encoder(res.source, res.target, cfg.model.seq_len);
  nn::QeModel model(cfg.model, derive_seed(cfg.seed, "qe-model"));
  auto state = nn::make_trainer_state(cfg.train, cfg.seed);
  auto result = nn::train(model, examples, encoder, cfg.train, state, [log](const nn::EpochLog& e) {
    if (log) *log << nn::format_epoch(e) << '\n' << std::flush;
  });
  std::ostringstream os;
  nn::save_checkpoint(os, model, &state);
  write_file(out, os.str());
  return result;
}

inline nn::QeModel load_model(const std::string& path) {
  auto in = open_in(path);
  return nn::load_checkpoint(in).model;
}

struct EvalOutput {
  ConfusionMatrix confusion;
  MetricsReport metrics;
  std::optional<double> miss_rate;
  std::string text;
  std::string tsv;
};

inline EvalOutput evaluate_model(const nn::QeModel& model, const std::vector<nn::Example>& data,
                                 const nn::PairEncoder& encoder, bool positives_only) {
  const auto preds = nn::predict_all(model, data, encoder);
  std::vector<QeLabel> p, t;
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < data.size(); ++i) {
    p.push_back(preds[i].label);
    t.push_back(data[i].label);
    lengths.push_back(data[i].target.size());
  }
  EvalOutput o;
  o.confusion = confusion(p, t);
  o.metrics = metrics(o.confusion);
  o.metrics.by_length = length_buckets(lengths, p, t);
  o.text = metrics_text(o.metrics, o.confusion);
  o.tsv = metrics_tsv(o.metrics);
  if (positives_only) {
    o.miss_rate = miss_rate(p, t, true);
    const std::vector<MissRateRow> rows{{"model", {{data.size(), *o.miss_rate}}}};
    o.text += "\n" + miss_rate_table({"Positives"}, rows);
    char buf[48];
    std::snprintf(buf, sizeof buf, "miss_rate\t%.6f\n", *o.miss_rate);
    o.tsv += buf;
  }
  return o;
}

/// Writes `out` (text tables) and `out.tsv`.
inline EvalOutput cmd_eval(const PipelineConfig& cfg, const std::string& checkpoint, const std::string& dataset,
                           const std::string& out, bool positives_only) {
  const auto model = load_model(checkpoint);
  const auto res = load_qe_resources(cfg, model.config().embed_dim);
  const nn::PairEncoder encoder(res.source, res.target, model.config().seq_len);
  auto o = evaluate_model(model, read_examples(dataset), encoder, positives_only);
  write_file(out, o.text);
  write_file(out + ".tsv", o.tsv);
  return o;
}

/// One TSV line per pair: texts, label, then probabilities (or the score) and,
/// optionally, the penultimate activations.
inline std::string cmd_score(const PipelineConfig& cfg, const std::string& checkpoint,
                             const std::vector<std::pair<std::string, std::string>>& pairs, bool dump_activations) {
  const auto model = load_model(checkpoint);
  const auto res = load_qe_resources(cfg, model.config().embed_dim);
  const nn::PairEncoder encoder(res.source, res.target, model.config().seq_len);
  const bool cls = model.config().head == nn::Head::Classification;
  std::string out = "source_text\ttarget_text\tlabel";
  out += cls ? "\tp_bad\tp_loose\tp_good" : "\tscore";
  if (dump_activations) out += "\tactivations";
  out += "\n";
  for (const auto& [s, t] : pairs) {
    const auto batch = encoder.encode_one(tokenize(s), tokenize(t));
    const auto pred = model.predict(batch).front();
    out += tsv_clean(s) + "\t" + tsv_clean(t) + "\t" + std::string(to_string(pred.label));
    char buf[40];
    if (cls) {
      for (double p : pred.probabilities) {
        std::snprintf(buf, sizeof buf, "\t%.6f", p);
        out += buf;
      }
    } else {
      std::snprintf(buf, sizeof buf, "\t%.6f", *pred.score);
      out += buf;
    }
    if (dump_activations) {
      const auto act = model.penultimate_activations(batch);
      out += "\t";
      for (std::size_t i = 0; i < act.size(); ++i) {
        std::snprintf(buf, sizeof buf, i ? ",%.9g" : "%.9g", act[i]);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

/// Writes a self-contained toy corpus: subtitle directories, embeddings, a
/// good-pairs file and a config pointing at them.
inline PipelineConfig cmd_toy(const std::string& dir, std::uint64_t seed, std::size_t episodes,
                              std::size_t blocks_per_episode, std::size_t embed_dim = 16) {
  ToyConfig tc;
  tc.seed = seed;
  tc.embed_dim = embed_dim;
  const ToyLanguage lang(tc);
  const auto corpus = make_toy_corpus(lang, episodes, blocks_per_episode, seed);
  const fs::path root(dir);
  fs::create_directories(root / "src");
  fs::create_directories(root / "tgt");
  std::vector<BilingualPair> good;
  for (std::size_t e = 0; e < corpus.episodes.size(); ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "episode%03zu.srt", e + 1);
    write_file((root / "src" / name).string(), serialize_srt(corpus.episodes[e].source));
    write_file((root / "tgt" / name).string(), serialize_srt(corpus.episodes[e].target));
    good.insert(good.end(), corpus.episodes[e].pairs.begin(), corpus.episodes[e].pairs.end());
  }
  std::ostringstream es, et, gp;
  write_embeddings(es, corpus.source_embeddings);
  write_embeddings(et, corpus.target_embeddings);
  gp << "source\ttarget\n";
  for (const auto& p : good) gp << tsv_clean(p.source_text) << '\t' << tsv_clean(p.target_text) << '\n';
  write_file((root / "emb.src.txt").string(), es.str());
  write_file((root / "emb.tgt.txt").string(), et.str());
  write_file((root / "good_pairs.tsv").string(), gp.str());

  PipelineConfig cfg;
  cfg.source_lang = "src";
  cfg.target_lang = "tgt";
  cfg.bow.language = "tgt";
  cfg.seed = seed;
  cfg.source_embeddings = (root / "emb.src.txt").string();
  cfg.target_embeddings = (root / "emb.tgt.txt").string();
  cfg.source_subtitles = (root / "src").string();
  cfg.target_subtitles = (root / "tgt").string();
  cfg.good_pairs = (root / "good_pairs.tsv").string();
  cfg.rfc_model = (root / "forest.txt").string();
  cfg.model.embed_dim = embed_dim;
  cfg.model.lstm_hidden = 16;
  cfg.train.batch_size = 64;
  cfg.train.max_epochs = 30;
  write_file((root / "subqe.conf").string(), emit_config(cfg));
  return cfg;
}

}  // namespace subqe
