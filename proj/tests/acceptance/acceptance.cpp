// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is 0 only when every selected criterion passes.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "../gradcheck.hpp"
#include "../nn_fixtures.hpp"
#include "../oracles.hpp"
#include "subqe/subqe.hpp"

using namespace subqe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void log(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("subqe-acceptance-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// ---- 1: gradients ----

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto ops = test::gradient_operators();
  double worst = 0.0;
  std::string worst_op;
  std::size_t failures = 0, cases = 0;
  for (const auto& [name, factory] : ops) {
    SeededRng rng(derive_seed(99, name));
    for (std::size_t i = 0; i < 20; ++i) {
      const auto c = factory(rng, i);
      const auto r = test::check_gradients(c, rng);
      ++cases;
      if (r.checked == 0 || !(r.max_rel_error < test::kFdTolerance)) {
        ++failures;
        log(name + " shape " + c.shape + fmt(" rel error %.3g", r.max_rel_error));
      }
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_op = name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 120.0,
          fmt("%zu operators x 20 shapes, %zu failures, worst rel error %.2e (%s), %.1fs", ops.size(), failures, worst,
              worst_op.c_str(), secs)};
}

// ---- 2: fusion grid ----

Outcome fusion_grid() {
  const auto t0 = Clock::now();
  int agree = 0, cells = 0, overlaps = 0;
  for (int b = 0; b <= 20; ++b) {
    for (int r = 0; r <= 20; ++r) {
      ++cells;
      overlaps += test::fusion_grid_overlaps(b, r) > 1;
      agree += fuse_labels(b / 20.0, r / 20.0) == test::fusion_grid_oracle(b, r);
    }
  }
  const double secs = seconds_since(t0);
  return {agree == 441 && cells == 441 && overlaps == 0 && secs < 1.0,
          fmt("%d/%d cells agree, %d overlapping cells, %.4fs", agree, cells, overlaps, secs)};
}

// ---- 3: bag-of-words score ----

SimilarityMatrix random_matrix(SeededRng& rng) {
  std::vector<std::vector<double>> rows(1 + rng.uniform_index(8), std::vector<double>(1 + rng.uniform_index(8)));
  for (auto& r : rows)
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return SimilarityMatrix::from_rows(rows);
}

Outcome bow() {
  const auto s = SimilarityMatrix::from_rows({{0.9, 0.2}, {0.1, 0.7}});
  const auto sc = bow_sentence_scores(s, 0.6);
  const double worked = bow_score(s, BowParams{0.6, 0.3, ""});
  const bool worked_ok =
      std::abs(sc.source - 0.8) < 1e-12 && std::abs(sc.target - 0.8) < 1e-12 && std::abs(worked - 0.8) < 1e-12;

  bool identity_ok = true;
  for (std::size_t n = 1; n <= 20; ++n) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1.0;
    identity_ok &= bow_score(SimilarityMatrix::from_rows(rows), BowParams{}) == 1.0;
  }

  SeededRng rng(303);
  std::size_t violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto m = random_matrix(rng);
    auto up = m;
    for (auto& v : up.values) v = std::min(1.0, v + rng.uniform(0.0, 0.3));
    const BowParams p{rng.uniform(0.0, 0.9), 0.3, ""};
    violations += bow_score(up, p) < bow_score(m, p);
  }
  return {worked_ok && identity_ok && violations == 0,
          fmt("worked example %.15g, identity %s, monotonicity violations %zu/1000", worked,
              identity_ok ? "1.0" : "WRONG", violations)};
}

// ---- 4: scoring loss ----

Outcome scoring_loss_values() {
  auto one = [](double s, QeLabel l) { return nn::scoring_loss(nn::parameter(nn::Tensor({1, 1}, {s})), {l})->value[0]; };
  const double a = one(0.5, QeLabel::Loose), b = one(0.2, QeLabel::Good), c = one(0.9, QeLabel::Bad);
  const bool ok = std::abs(a) <= 1e-12 && std::abs(b - 0.2025) <= 1e-12 && std::abs(c - 0.3025) <= 1e-12;
  return {ok, fmt("(0.5, loose) %.15g, (0.2, good) %.15g, (0.9, bad) %.15g", a, b, c)};
}

// ---- 5: random forest ----

Outcome rfc() {
  const auto t0 = Clock::now();
  const ToyLanguage lang{ToyConfig{}};
  const auto corpus = make_toy_corpus(lang, 100, 50, 11);
  std::vector<BilingualPair> parallel;
  for (const auto& e : corpus.episodes) parallel.insert(parallel.end(), e.pairs.begin(), e.pairs.end());
  const auto s = train_rfc_on(parallel, corpus.source_embeddings, corpus.target_embeddings, ForestParams{}, 5, nullptr);
  const double secs = seconds_since(t0);
  const std::size_t negatives = s.corpus.negatives[0] + s.corpus.negatives[1] + s.corpus.negatives[2];
  const std::size_t total = s.corpus.positives + negatives;
  const bool ratio_ok =
      std::abs(static_cast<double>(negatives) - 1.2 * static_cast<double>(s.corpus.positives)) <= 1.0;
  return {total >= 10000 && ratio_ok && s.train_accuracy >= 0.99 && s.test_accuracy >= 0.85 && secs < 600.0,
          fmt("%zu pairs (%zu pos / %zu neg), train %.2f%%, test %.2f%%, %.1fs", total, s.corpus.positives, negatives,
              100 * s.train_accuracy, 100 * s.test_accuracy, secs)};
}

// ---- 6-8: toy quality estimation ----

struct ToyQe {
  ToyCorpus corpus;
  std::vector<LabeledPair> train_pairs, test_pairs;
  std::vector<nn::Example> train, test;

  ToyQe() {
    const ToyLanguage lang{ToyConfig{}};
    corpus = make_toy_corpus(lang, 240, 50, 11);
    // disjoint episodes for train and test
    const std::size_t n_train = corpus.episodes.size() * 13 / 16;
    const std::vector<AlignedEpisode> tr(corpus.episodes.begin(), corpus.episodes.begin() + n_train);
    const std::vector<AlignedEpisode> te(corpus.episodes.begin() + n_train, corpus.episodes.end());
    train_pairs = toy_dataset(tr, 12000, 1).samples;
    test_pairs = toy_dataset(te, 1200, 2).samples;
    for (const auto& p : train_pairs) train.push_back(nn::make_example(p));
    for (const auto& p : test_pairs) test.push_back(nn::make_example(p));
  }
};

struct QeRun {
  nn::QeModel model;
  double accuracy = 0.0;
  double seconds = 0.0;
  std::size_t epochs = 0;
};

QeRun train_toy(const ToyQe& data, nn::Architecture arch, nn::Head head) {
  const auto t0 = Clock::now();
  nn::ModelConfig mc;
  mc.embed_dim = 16;
  mc.lstm_hidden = 16;
  mc.architecture = arch;
  mc.head = head;
  nn::TrainConfig tc;
  tc.batch_size = 64;
  tc.max_epochs = 40;
  const nn::PairEncoder enc(data.corpus.source_embeddings, data.corpus.target_embeddings, mc.seq_len);
  QeRun run{nn::QeModel(mc, 5)};
  auto state = nn::make_trainer_state(tc, 5);
  const auto r = nn::train(run.model, data.train, enc, tc, state);
  const auto preds = nn::predict_all(run.model, data.test, enc);
  std::size_t right = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) right += preds[i].label == data.test[i].label;
  run.accuracy = static_cast<double>(right) / static_cast<double>(preds.size());
  run.seconds = seconds_since(t0);
  run.epochs = r.log.size();
  log(fmt("%s/%s: test %.2f%% after %zu epochs, %.1fs", std::string(nn::to_string(arch)).c_str(),
          std::string(nn::to_string(head)).c_str(), 100 * run.accuracy, run.epochs, run.seconds));
  return run;
}

/// Shared by criteria 6-8; the corpus is built on first use.
struct ToyResults {
  std::optional<ToyQe> corpus;
  std::optional<QeRun> hybrid, cnn, lstm, scoring;

  const ToyQe& data() {
    if (!corpus) corpus.emplace();
    return *corpus;
  }
};

Outcome architectures(ToyResults& t) {
  t.hybrid = train_toy(t.data(), nn::Architecture::Hybrid, nn::Head::Classification);
  t.cnn = train_toy(t.data(), nn::Architecture::CnnOnly, nn::Head::Classification);
  t.lstm = train_toy(t.data(), nn::Architecture::LstmOnly, nn::Head::Classification);
  const double h = t.hybrid->accuracy, c = t.cnn->accuracy, l = t.lstm->accuracy;
  const double secs = t.hybrid->seconds + t.cnn->seconds + t.lstm->seconds;
  const bool ok = t.data().train.size() >= 5000 && t.data().test.size() >= 1000 && h >= 0.90 && h >= c && c >= l &&
                  h - c >= 0.01 && secs < 1800.0;
  return {ok, fmt("%zu train / %zu test; hybrid %.2f%%, cnn %.2f%%, lstm %.2f%% (need hybrid >= 90, "
                  "hybrid >= cnn >= lstm, hybrid - cnn >= 1); %.1fs",
                  t.data().train.size(), t.data().test.size(), 100 * h, 100 * c, 100 * l, secs)};
}

Outcome heads(ToyResults& t) {
  if (!t.hybrid) t.hybrid = train_toy(t.data(), nn::Architecture::Hybrid, nn::Head::Classification);
  t.scoring = train_toy(t.data(), nn::Architecture::Hybrid, nn::Head::Scoring);
  return {t.hybrid->accuracy >= t.scoring->accuracy,
          fmt("classification %.2f%%, scoring %.2f%%", 100 * t.hybrid->accuracy, 100 * t.scoring->accuracy)};
}

Outcome miss_rate_mode(ToyResults& t) {
  if (!t.hybrid) t.hybrid = train_toy(t.data(), nn::Architecture::Hybrid, nn::Head::Classification);
  ScratchDir dir("fnr");
  std::vector<LabeledPair> positives;
  for (const auto& p : t.data().test_pairs)
    if (p.label != QeLabel::Bad) positives.push_back(p);
  {
    std::ofstream out(dir.file("positives.tsv"));
    write_labeled_tsv(out, positives);
    std::ofstream es(dir.file("emb.src.txt")), et(dir.file("emb.tgt.txt")), ck(dir.file("qe.ckpt"));
    write_embeddings(es, t.data().corpus.source_embeddings);
    write_embeddings(et, t.data().corpus.target_embeddings);
    nn::save_checkpoint(ck, t.hybrid->model);
  }
  PipelineConfig cfg;
  cfg.source_lang = "src";
  cfg.target_lang = "tgt";
  cfg.source_embeddings = dir.file("emb.src.txt");
  cfg.target_embeddings = dir.file("emb.tgt.txt");
  const auto o = cmd_eval(cfg, dir.file("qe.ckpt"), dir.file("positives.tsv"), dir.file("report.txt"), true);

  // counting oracle over the in-memory pairs
  const nn::PairEncoder enc(t.data().corpus.source_embeddings, t.data().corpus.target_embeddings);
  std::size_t missed = 0;
  for (const auto& p : positives) {
    const auto pred = t.hybrid->model.predict(
        enc.encode_one(tokenize(p.pair.source_text), tokenize(p.pair.target_text)));
    missed += pred.front().label == QeLabel::Bad;
  }
  const double oracle = static_cast<double>(missed) / static_cast<double>(positives.size());
  std::ifstream tsv(dir.file("report.txt.tsv"));
  std::stringstream ss;
  ss << tsv.rdbuf();
  const bool reported = ss.str().find(fmt("miss_rate\t%.6f\n", oracle)) != std::string::npos;
  const bool ok = o.miss_rate && *o.miss_rate == oracle && reported && oracle <= 0.15;
  return {ok, fmt("%zu positives, %zu missed; reported %.6f, oracle %.6f, tsv %s (need <= 15%%)", positives.size(),
                  missed, o.miss_rate.value_or(-1.0), oracle, reported ? "matches" : "MISMATCH")};
}

// ---- 9: formats and reproducibility ----

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const auto t0 = Clock::now();
  std::vector<std::string> problems;

  std::size_t files = 0, round_trips = 0;
  for (const auto& e : fs::directory_iterator(std::string(SUBQE_TEST_DATA) + "/srt")) {
    std::string text = slurp(e.path().string());
    ++files;
    const std::string out = serialize_srt(parse_srt(text));
    text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
    round_trips += out == text;
  }
  if (files < 50 || round_trips != files) problems.push_back(fmt("srt %zu/%zu", round_trips, files));

  SeededRng rng(909);
  std::size_t multiset_errors = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::string> toks(2 + rng.uniform_index(20));
    for (auto& tok : toks) tok = "w" + std::to_string(rng.uniform_index(12));
    auto out = scramble_tokens(toks, rng);
    std::sort(out.begin(), out.end());
    std::sort(toks.begin(), toks.end());
    multiset_errors += out != toks;
  }
  if (multiset_errors) problems.push_back(fmt("scramble %zu", multiset_errors));

  std::size_t drift_errors = 0, draws = 0;
  while (draws < 10000) {
    const std::size_t n = 2 + rng.uniform_index(30), window = 1 + rng.uniform_index(5);
    SubtitleFile tgt{"tgt", {}};
    for (std::size_t k = 0; k < n; ++k) {
      const auto t = static_cast<std::int64_t>(k) * 1000;
      tgt.blocks.push_back(TextBlock{static_cast<std::int64_t>(k + 1), {t}, {t + 900}, {"b" + std::to_string(k + 1)}});
    }
    BilingualPair p;
    p.source_text = "s";
    const auto j = static_cast<std::int64_t>(1 + rng.uniform_index(n));
    p.target_block_id = j;
    for (const auto& d : drift_align(SubtitleFile{}, tgt, {p}, window, rng)) {
      const auto dist = std::abs(*d.target_block_id - j);
      drift_errors += dist < 1 || dist > static_cast<std::int64_t>(window) || d.target_text != "b" + std::to_string(*d.target_block_id);
      ++draws;
    }
  }
  if (drift_errors) problems.push_back(fmt("drift %zu", drift_errors));

  ScratchDir dir("repro");
  auto cfg = cmd_toy(dir.file("toy"), 3, 10, 40);
  cfg.forest.n_trees = 30;
  cmd_train_rfc(cfg, "", cfg.rfc_model);
  cfg.synth_samples = 2000;
  cmd_synth(cfg, dir.file("a.tsv"));
  cmd_synth(cfg, dir.file("b.tsv"));
  const bool synth_same = slurp(dir.file("a.tsv")) == slurp(dir.file("b.tsv"));
  if (!synth_same) problems.push_back("synth differs");
  cmd_label(cfg, dir.file("a.tsv"), dir.file("labeled.tsv"));
  cfg.train.max_epochs = 2;
  cfg.model.lstm_hidden = 8;
  cfg.model.conv_channels = {16, 16};
  cfg.model.fc_width = 32;
  cmd_train_qe(cfg, dir.file("labeled.tsv"), dir.file("a.ckpt"));
  cmd_train_qe(cfg, dir.file("labeled.tsv"), dir.file("b.ckpt"));
  const bool qe_same = slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt"));
  if (!qe_same) problems.push_back("train-qe differs");

  std::string summary = problems.empty() ? "no violations" : "violations:";
  for (const auto& p : problems) summary += " " + p;
  return {problems.empty(),
          fmt("srt %zu/%zu, scramble 10000 sentences, drift %zu draws, synth %s, train-qe %s; %s; %.1fs", round_trips,
              files, draws, synth_same ? "identical" : "DIFFERENT", qe_same ? "identical" : "DIFFERENT",
              summary.c_str(), seconds_since(t0))};
}

// ---- 10: learning-rate schedule ----

Outcome schedule() {
  // Each input carries all three labels, so the loss cannot fall below ln 3 and plateaus.
  const auto src = test::tiny_table("en", 40, 21), tgt = test::tiny_table("de", 40, 22);
  const nn::PairEncoder enc(src, tgt);
  SeededRng rng(42);
  std::vector<nn::Example> data;
  for (auto& [s, t] : test::random_pairs(60, rng, 40))
    for (QeLabel l : kAllLabels) data.push_back({s, t, l});
  auto mc = test::tiny_config(nn::Architecture::Hybrid);
  mc.dropout_p = 0.0;
  nn::QeModel m(mc, 41);
  nn::TrainConfig tc;
  tc.batch_size = data.size();
  auto state = nn::make_trainer_state(tc, 43);
  const auto r = nn::train(m, data, enc, tc, state);
  std::vector<double> rates;
  for (const auto& e : r.log)
    if (rates.empty() || e.lr != rates.back()) rates.push_back(e.lr);
  const double expected[3] = {1e-3, 1e-4, 1e-5};
  bool ok = r.stopped_by_schedule && rates.size() == 3 && r.log.size() < tc.max_epochs;
  for (std::size_t i = 0; ok && i < 3; ++i) ok = std::abs(rates[i] - expected[i]) <= 1e-12 * expected[i];
  std::string traj;
  for (double v : rates) traj += fmt("%g -> ", v);
  traj += r.stopped_by_schedule ? "stop" : "no stop";
  return {ok, fmt("%s after %zu epochs, final loss %.4f", traj.c_str(), r.log.size(), r.log.back().loss)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int n) { return selected.empty() || selected.contains(n); };

  ToyResults toy;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient checks", gradients},
      {"fusion grid", fusion_grid},
      {"bag-of-words score", bow},
      {"scoring loss values", scoring_loss_values},
      {"random forest on synthetic corpus", rfc},
      {"toy QE architectures", [&] { return architectures(toy); }},
      {"classification vs scoring head", [&] { return heads(toy); }},
      {"positives-only miss rate", [&] { return miss_rate_mode(toy); }},
      {"formats and reproducibility", reproducibility},
      {"learning-rate schedule", schedule},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
