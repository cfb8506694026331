// subqe: command-line entry point for the subtitle QE pipeline.
//
// Exit codes: 0 success, 1 runtime error, 2 usage or config validation error.
// Errors are printed as a single line: "error <Code>: <message>".

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subqe/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string lang_pair;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "Pipeline config file (key = value)");
  cmd->add_option("--seed", c.seed, "Override the config seed")->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--lang-pair", c.lang_pair, "Language pair, e.g. en-de");
  cmd->add_option("--set", c.overrides, "Config override key=value (repeatable)");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (needs_out) out->required();
}

subqe::PipelineConfig load_config(const Common& c) {
  subqe::PipelineConfig cfg;
  if (!c.config.empty()) {
    cfg = subqe::parse_config(subqe::read_file(c.config));
  }
  if (!c.lang_pair.empty()) subqe::set_config_value(cfg, "lang_pair", c.lang_pair);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw subqe::Error(subqe::ErrorCode::Config, "--set expects key=value, got " + o);
    subqe::set_config_value(cfg, std::string(subqe::trim(o.substr(0, eq))), std::string(subqe::trim(o.substr(eq + 1))));
  }
  if (c.seed_set) cfg.seed = c.seed;
  subqe::validate_config(cfg);
  return cfg;
}

int fail(const subqe::Error& e) {
  std::string msg = e.what();
  for (char& ch : msg) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "error " << msg << '\n';
  return e.code() == subqe::ErrorCode::Config ? 2 : 1;
}

std::vector<std::pair<std::string, std::string>> read_score_input(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istream* in = &std::cin;
  std::ifstream file;
  if (path != "-") {
    file = subqe::open_in(path);
    in = &file;
  }
  std::string line;
  bool first = true;
  while (std::getline(*in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = subqe::split_tabs(line);
    if (first && f.size() >= 2 && f[0] == "source_text") {
      first = false;
      continue;
    }
    first = false;
    if (f.size() < 2) throw subqe::Error(subqe::ErrorCode::MalformedRow, "score input needs source<TAB>target");
    pairs.emplace_back(f[0], f[1]);
  }
  return pairs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subqe: quality estimation for subtitle translations"};
  app.require_subcommand(1);

  Common align_c, synth_c, label_c, rfc_c, qe_c, eval_c, score_c, toy_c, cfg_c;

  auto* align = app.add_subcommand("align", "Align two directories of .srt files into a pairs TSV");
  std::string src_dir, tgt_dir;
  add_common(align, align_c, true);
  align->add_option("--src-dir", src_dir, "Source-language subtitle directory")->required();
  align->add_option("--tgt-dir", tgt_dir, "Target-language subtitle directory")->required();

  auto* synth = app.add_subcommand("synth", "Sample training pairs from all configured generators");
  add_common(synth, synth_c, true);

  auto* label = app.add_subcommand("label", "Label a pairs TSV (provenance rules plus score fusion)");
  std::string label_pairs_path;
  add_common(label, label_c, true);
  label->add_option("--pairs", label_pairs_path, "Pairs TSV from align or synth")->required();

  auto* train_rfc = app.add_subcommand("train-rfc", "Train the random-forest translation classifier");
  std::string rfc_corpus;
  add_common(train_rfc, rfc_c, true);
  train_rfc->add_option("--corpus", rfc_corpus, "Parallel corpus (source<TAB>target); default from config");

  auto* train_qe = app.add_subcommand("train-qe", "Train a neural QE model from a labeled TSV");
  std::string qe_dataset, qe_arch, qe_head;
  add_common(train_qe, qe_c, true);
  train_qe->add_option("--dataset", qe_dataset, "Labeled TSV")->required();
  train_qe->add_option("--arch", qe_arch, "Architecture")->check(CLI::IsMember({"hybrid", "lstm", "cnn"}));
  train_qe->add_option("--head", qe_head, "Output head")->check(CLI::IsMember({"classification", "scoring"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled TSV");
  std::string eval_ckpt, eval_dataset;
  bool positives_only = false;
  add_common(eval, eval_c, true);
  eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--dataset", eval_dataset, "Labeled TSV")->required();
  eval->add_flag("--positives-only", positives_only, "Dataset holds only Good/Loose pairs; report the miss rate");

  auto* score = app.add_subcommand("score", "Label individual pairs with a checkpoint");
  std::string score_ckpt, score_input, score_src, score_tgt;
  bool dump = false;
  add_common(score, score_c, false);
  score->add_option("--checkpoint", score_ckpt, "Model checkpoint")->required();
  score->add_option("--input", score_input, "TSV of source<TAB>target pairs, '-' for stdin");
  score->add_option("--source", score_src, "Single source sentence");
  score->add_option("--target", score_tgt, "Single target sentence");
  score->add_flag("--dump-activations", dump, "Append the penultimate-layer activations");

  auto* toy = app.add_subcommand("toy", "Write a synthetic bilingual toy corpus and its config");
  std::size_t toy_episodes = 40, toy_blocks = 50, toy_dim = 16;
  add_common(toy, toy_c, true);
  toy->add_option("--episodes", toy_episodes, "Number of episodes");
  toy->add_option("--blocks", toy_blocks, "Subtitle blocks per episode");
  toy->add_option("--dim", toy_dim, "Embedding dimension");

  auto* show = app.add_subcommand("config", "Print the effective configuration");
  add_common(show, cfg_c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*align) {
      const auto cfg = load_config(align_c);
      const auto s = subqe::cmd_align(src_dir, tgt_dir, cfg, align_c.out);
      std::cerr << "aligned " << s.pairs << " pairs from " << s.episodes << " episodes (unmatched source "
                << s.report.unmatched_source << ", target " << s.report.unmatched_target << ")\n";
    } else if (*synth) {
      const auto cfg = load_config(synth_c);
      const auto s = subqe::cmd_synth(cfg, synth_c.out);
      std::cerr << "wrote " << s.pairs.size() << " pairs (" << s.failures << " failed draws)\n";
    } else if (*label) {
      const auto cfg = load_config(label_c);
      const auto ds = subqe::cmd_label(cfg, label_pairs_path, label_c.out);
      std::cout << ds.report.to_text();
    } else if (*train_rfc) {
      const auto cfg = load_config(rfc_c);
      const auto s = subqe::cmd_train_rfc(cfg, rfc_corpus, rfc_c.out);
      std::printf("train %zu accuracy %.2f\ntest %zu accuracy %.2f\n", s.train_size, 100.0 * s.train_accuracy,
                  s.test_size, 100.0 * s.test_accuracy);
      std::printf("importance: average %.3f similarity %.3f ngram %.3f structural %.3f\n", s.importance[0],
                  s.importance[1], s.importance[2], s.importance[3]);
    } else if (*train_qe) {
      auto cfg = load_config(qe_c);
      if (!qe_arch.empty()) cfg.model.architecture = subqe::nn::parse_architecture(qe_arch);
      if (!qe_head.empty()) cfg.model.head = subqe::nn::parse_head(qe_head);
      const auto r = subqe::cmd_train_qe(cfg, qe_dataset, qe_c.out, &std::cerr);
      std::cerr << (r.stopped_by_schedule ? "stopped by schedule" : "reached max_epochs") << " after "
                << r.log.size() << " epochs\n";
    } else if (*eval) {
      const auto cfg = load_config(eval_c);
      const auto o = subqe::cmd_eval(cfg, eval_ckpt, eval_dataset, eval_c.out, positives_only);
      std::cout << o.text;
    } else if (*score) {
      const auto cfg = load_config(score_c);
      std::vector<std::pair<std::string, std::string>> pairs;
      if (!score_input.empty()) pairs = read_score_input(score_input);
      if (!score_src.empty() || !score_tgt.empty()) pairs.emplace_back(score_src, score_tgt);
      if (pairs.empty()) throw subqe::Error(subqe::ErrorCode::Config, "score needs --input or --source/--target");
      const auto text = subqe::cmd_score(cfg, score_ckpt, pairs, dump);
      if (score_c.out.empty()) std::cout << text;
      else subqe::write_file(score_c.out, text);
    } else if (*toy) {
      const std::uint64_t seed = toy_c.seed_set ? toy_c.seed : 7;
      subqe::cmd_toy(toy_c.out, seed, toy_episodes, toy_blocks, toy_dim);
      std::cerr << "toy corpus written to " << toy_c.out << '\n';
    } else if (*show) {
      const auto cfg = load_config(cfg_c);
      const auto text = subqe::emit_config(cfg);
      if (cfg_c.out.empty()) std::cout << text;
      else subqe::write_file(cfg_c.out, text);
    }
  } catch (const subqe::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << "error Io: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
