#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "subqe/pipeline.hpp"
#include "test_util.hpp"

using namespace subqe;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small model settings shared by every training command here.
const char* kSmallModel =
    " --set model.lstm_hidden=8 --set model.conv1_channels=16 --set model.conv2_channels=16 --set model.fc_width=32";

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("pipeline");
    ASSERT_EQ(run("toy --out " + dir_->str() + " --episodes 10 --blocks 40 --seed 3").code, 0);
    conf_ = " --config " + dir_->file("subqe.conf");
    ASSERT_EQ(run("train-rfc" + conf_ + " --out " + dir_->file("forest.txt") + " --set forest.n_trees=30").code, 0);
    ASSERT_EQ(run("synth" + conf_ + " --out " + dir_->file("synth.tsv") + " --set synth.samples=3000").code, 0);
    ASSERT_EQ(run("label" + conf_ + " --pairs " + dir_->file("synth.tsv") + " --out " + dir_->file("labeled.tsv")).code,
              0);
    const auto r = run("train-qe" + conf_ + " --dataset " + dir_->file("labeled.tsv") + " --out " +
                       dir_->file("qe.ckpt") + " --set train.max_epochs=12" + kSmallModel);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static RunResult run(const std::string& args) {
    static int counter = 0;
    const std::string base = std::filesystem::temp_directory_path().string() + "/subqe-run-" +
                             std::to_string(::getpid()) + "-" + std::to_string(counter++);
    const std::string cmd = std::string(SUBQE_CLI) + " " + args + " >" + base + ".out 2>" + base + ".err";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(base + ".out");
    r.err = slurp(base + ".err");
    std::filesystem::remove(base + ".out");
    std::filesystem::remove(base + ".err");
    return r;
  }

  static PipelineConfig config() { return parse_config(read_file(dir_->file("subqe.conf"))); }

  static test::TempDir* dir_;
  static std::string conf_;
};

test::TempDir* Pipeline::dir_ = nullptr;
std::string Pipeline::conf_;

std::vector<LabeledPair> read_labeled(const std::string& path) {
  std::ifstream in(path);
  return read_labeled_tsv(in);
}

}  // namespace

TEST_F(Pipeline, ConfigCommandRoundTrips) {
  const auto r = run("config" + conf_ + " --seed 11 --set train.lr=0.002");
  ASSERT_EQ(r.code, 0) << r.err;
  auto expected = config();
  expected.seed = 11;
  expected.train.lr = 0.002;
  EXPECT_EQ(parse_config(r.out), expected);
}

TEST_F(Pipeline, AlignRecoversEveryToyPair) {
  const auto r = run("align" + conf_ + " --src-dir " + dir_->file("src") + " --tgt-dir " + dir_->file("tgt") +
                     " --out " + dir_->file("aligned.tsv"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_->file("aligned.tsv"));
  const auto pairs = read_pairs_tsv(in);
  EXPECT_EQ(pairs.size(), 400u);
  std::ifstream gp(dir_->file("good_pairs.tsv"));
  const auto good = read_good_pairs_tsv(gp, "src", "tgt");
  ASSERT_EQ(good.size(), pairs.size());
  for (std::size_t i = 0; i < good.size(); ++i) EXPECT_EQ(pairs[i].target_text, good[i].target_text);
}

TEST_F(Pipeline, SynthIsByteIdenticalForSameSeed) {
  const std::string a = dir_->file("s_a.tsv"), b = dir_->file("s_b.tsv"), c = dir_->file("s_c.tsv");
  ASSERT_EQ(run("synth" + conf_ + " --out " + a + " --set synth.samples=500").code, 0);
  ASSERT_EQ(run("synth" + conf_ + " --out " + b + " --set synth.samples=500").code, 0);
  ASSERT_EQ(run("synth" + conf_ + " --out " + c + " --set synth.samples=500 --seed 4").code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(Pipeline, RandomlyAlignedOnlyLabelsEverythingBad) {
  const std::string pairs = dir_->file("random_only.tsv"), out = dir_->file("random_only.labeled.tsv");
  std::string only_random = " --set synth.samples=300";
  for (const char* k : {"statistical", "good_pairs", "added_captions", "scrambled_text", "drifted_aligned"})
    only_random += std::string(" --set weights.") + k + "=0";
  ASSERT_EQ(run("synth" + conf_ + " --out " + pairs + only_random).code, 0);
  const auto r = run("label" + conf_ + " --pairs " + pairs + " --out " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_labeled(out);
  ASSERT_EQ(rows.size(), 300u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.label, QeLabel::Bad);
    EXPECT_EQ(row.pair.provenance, Provenance::RandomlyAligned);
  }
  EXPECT_NE(r.out.find("Dataset label distribution"), std::string::npos);
}

TEST_F(Pipeline, TrainQeIsByteIdenticalForSameSeed) {
  const std::string a = dir_->file("q_a.ckpt"), b = dir_->file("q_b.ckpt"), c = dir_->file("q_c.ckpt");
  const std::string args = "train-qe" + conf_ + " --dataset " + dir_->file("labeled.tsv") +
                           " --set train.max_epochs=2" + kSmallModel + " --out ";
  ASSERT_EQ(run(args + a).code, 0);
  ASSERT_EQ(run(args + b).code, 0);
  ASSERT_EQ(run(args + c + " --seed 99").code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(Pipeline, TrainQeLogsOneLinePerEpoch) {
  const auto r = run("train-qe" + conf_ + " --dataset " + dir_->file("labeled.tsv") + " --out " +
                     dir_->file("q_log.ckpt") + " --arch cnn --head scoring --set train.max_epochs=3" + kSmallModel);
  ASSERT_EQ(r.code, 0) << r.err;
  for (int e = 1; e <= 3; ++e) EXPECT_NE(r.err.find("epoch " + std::to_string(e) + "\tloss "), std::string::npos);
  EXPECT_EQ(load_model(dir_->file("q_log.ckpt")).config().architecture, nn::Architecture::CnnOnly);
}

TEST_F(Pipeline, PositivesOnlyMissRateMatchesCountingOracle) {
  std::vector<LabeledPair> positives;
  for (const auto& row : read_labeled(dir_->file("labeled.tsv")))
    if (row.label != QeLabel::Bad) positives.push_back(row);
  ASSERT_GT(positives.size(), 100u);
  {
    std::ofstream out(dir_->file("positives.tsv"));
    write_labeled_tsv(out, positives);
  }
  const std::string report = dir_->file("fnr.txt");
  const auto r = run("eval" + conf_ + " --checkpoint " + dir_->file("qe.ckpt") + " --dataset " +
                     dir_->file("positives.tsv") + " --out " + report + " --positives-only");
  ASSERT_EQ(r.code, 0) << r.err;

  // Oracle: score every pair through the library and count Bad predictions.
  const auto cfg = config();
  const auto model = load_model(dir_->file("qe.ckpt"));
  const auto res = load_qe_resources(cfg, model.config().embed_dim);
  const nn::PairEncoder enc(res.source, res.target);
  std::size_t missed = 0;
  for (const auto& p : positives) {
    const auto pred =
        model.predict(enc.encode_one(tokenize(p.pair.source_text), tokenize(p.pair.target_text))).front();
    missed += pred.label == QeLabel::Bad;
  }
  const double oracle = static_cast<double>(missed) / static_cast<double>(positives.size());
  char expected[48];
  std::snprintf(expected, sizeof expected, "miss_rate\t%.6f\n", oracle);
  EXPECT_NE(slurp(report + ".tsv").find(expected), std::string::npos) << slurp(report + ".tsv");
  const auto lib = cmd_eval(cfg, dir_->file("qe.ckpt"), dir_->file("positives.tsv"), dir_->file("fnr2.txt"), true);
  ASSERT_TRUE(lib.miss_rate);
  EXPECT_EQ(*lib.miss_rate, oracle);

  const auto mixed = run("eval" + conf_ + " --checkpoint " + dir_->file("qe.ckpt") + " --dataset " +
                         dir_->file("labeled.tsv") + " --out " + report + " --positives-only");
  EXPECT_EQ(mixed.code, 1);
  EXPECT_NE(mixed.err.find("error InvalidArgument:"), std::string::npos);
}

TEST_F(Pipeline, ScoreLabelsAGoodTrainingPairGood) {
  const auto rows = read_labeled(dir_->file("labeled.tsv"));
  const auto it = std::find_if(rows.begin(), rows.end(), [](const LabeledPair& p) {
    return p.label == QeLabel::Good && p.pair.provenance == Provenance::GoodPairsFile;
  });
  ASSERT_NE(it, rows.end());
  const auto r = run("score" + conf_ + " --checkpoint " + dir_->file("qe.ckpt") + " --source '" +
                     it->pair.source_text + "' --target '" + it->pair.target_text + "' --dump-activations");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, line;
  std::getline(lines, header);
  std::getline(lines, line);
  EXPECT_EQ(header, "source_text\ttarget_text\tlabel\tp_bad\tp_loose\tp_good\tactivations");
  const auto f = split_tabs(line);
  ASSERT_EQ(f.size(), 7u);
  EXPECT_EQ(f[2], "good");
  const double pb = std::stod(f[3]), pl = std::stod(f[4]), pg = std::stod(f[5]);
  EXPECT_GT(pg, pb);
  EXPECT_GT(pg, pl);
  EXPECT_NEAR(pb + pl + pg, 1.0, 3e-6);
  EXPECT_EQ(std::count(f[6].begin(), f[6].end(), ',') + 1, 32);
}

TEST_F(Pipeline, ScoreReadsTsvFromStdin) {
  const std::string input = dir_->file("score_in.tsv");
  std::ofstream(input) << "source_text\ttarget_text\nfoo .\tbar .\r\n\nbaz\tqux\n";
  const auto r = run("score" + conf_ + " --checkpoint " + dir_->file("qe.ckpt") + " --input - < " + input);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
  std::ofstream(input) << "only one column\n";
  const auto bad = run("score" + conf_ + " --checkpoint " + dir_->file("qe.ckpt") + " --input " + input);
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.err.rfind("error MalformedRow:", 0), 0u);
}

TEST_F(Pipeline, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth" + conf_).code, 2);  // --out missing
  const auto bad_value = run("synth" + conf_ + " --out x --set bow.theta1=7");
  EXPECT_EQ(bad_value.code, 2);
  EXPECT_EQ(bad_value.err.rfind("error Config:", 0), 0u);
  EXPECT_EQ(std::count(bad_value.err.begin(), bad_value.err.end(), '\n'), 1);
  EXPECT_EQ(run("synth" + conf_ + " --out x --set nonsense=1").code, 2);
  EXPECT_EQ(run("train-qe" + conf_ + " --out x --dataset y --arch rnn").code, 2);
  EXPECT_EQ(run("score" + conf_ + " --checkpoint " + dir_->file("qe.ckpt")).code, 2);
  const auto missing = run("eval" + conf_ + " --checkpoint " + dir_->file("nope.ckpt") + " --dataset " +
                           dir_->file("labeled.tsv") + " --out " + dir_->file("r.txt"));
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("error ", 0), 0u);
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);
  EXPECT_EQ(run("config --help").code, 0);
}
