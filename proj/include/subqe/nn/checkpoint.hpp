#pragma once

#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/nn/model.hpp"
#include "subqe/nn/train.hpp"

namespace subqe::nn {

inline constexpr std::string_view kCheckpointMagic = "subqe-checkpoint v1";

namespace detail {

inline void put_values(std::ostream& out, const double* v, std::size_t n) {
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", v[i]);
    out << buf;
  }
}

inline std::vector<double> get_values(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> v(n);
  std::string tok;
  for (auto& x : v) {
    if (!(in >> tok)) throw Error(ErrorCode::MalformedRow, "checkpoint: short " + what);
    try {
      x = std::stod(tok);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedRow, "checkpoint: bad number in " + what);
    }
  }
  return v;
}

}  // namespace detail

inline void write_config(std::ostream& out, const ModelConfig& c) {
  out << "config embed_dim " << c.embed_dim << '\n'
      << "config seq_len " << c.seq_len << '\n'
      << "config lstm_hidden " << c.lstm_hidden << '\n'
      << "config conv_channels " << c.conv_channels[0] << ' ' << c.conv_channels[1] << '\n'
      << "config conv_kernels " << c.conv_kernels[0] << ' ' << c.conv_kernels[1] << '\n'
      << "config fc_width " << c.fc_width << '\n';
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", c.dropout_p);
  out << "config dropout_p " << buf << '\n'
      << "config n_classes " << c.n_classes << '\n'
      << "config architecture " << to_string(c.architecture) << '\n'
      << "config head " << to_string(c.head) << '\n'
      << "config pooling " << to_string(c.pooling) << '\n';
}

/// Model plus (optionally) the trainer state needed to resume.
struct Checkpoint {
  QeModel model;
  std::optional<TrainerState> trainer;
};

inline void save_checkpoint(std::ostream& out, const QeModel& model, const TrainerState* trainer = nullptr) {
  out << kCheckpointMagic << '\n';
  write_config(out, model.config());
  for (const auto& [name, p] : model.parameters()) {
    out << "param " << name << ' ' << p->value.rank();
    for (auto d : p->value.shape) out << ' ' << d;
    detail::put_values(out, p->value.ptr(), p->value.size());
    out << '\n';
  }
  for (const auto& [name, s] : model.bn_stats()) {
    out << "bn " << name << ' ' << s.mean.size();
    detail::put_values(out, s.mean.data(), s.mean.size());
    detail::put_values(out, s.var.data(), s.var.size());
    out << '\n';
  }
  if (trainer) {
    const AdamState& a = trainer->adam;
    out << "adam";
    const double hp[4] = {a.lr, a.beta1, a.beta2, a.eps};
    detail::put_values(out, hp, 4);
    out << ' ' << a.step << '\n';
    const auto& params = model.parameters();
    for (std::size_t k = 0; k < a.m.size(); ++k) {
      out << "adam_m " << params[k].first;
      detail::put_values(out, a.m[k].ptr(), a.m[k].size());
      out << "\nadam_v " << params[k].first;
      detail::put_values(out, a.v[k].ptr(), a.v[k].size());
      out << '\n';
    }
    const PlateauSchedule& s = trainer->schedule;
    out << "schedule";
    const double sv[2] = {s.tolerance, s.factor};
    detail::put_values(out, sv, 2);
    out << ' ' << s.max_drops << ' ' << s.drops << ' ' << (s.previous ? 1 : 0);
    const double prev = s.previous.value_or(0.0);
    detail::put_values(out, &prev, 1);
    out << '\n' << "epoch " << trainer->epoch << '\n' << "rng " << trainer->rng.state() << '\n';
  }
  out << "end\n";
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw Error(ErrorCode::MalformedRow, "not a subqe checkpoint");
  }
  ModelConfig cfg;
  std::vector<std::string> body;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind != "config") {
      body.push_back(line);
      continue;
    }
    std::string key;
    ls >> key;
    if (key == "embed_dim") ls >> cfg.embed_dim;
    else if (key == "seq_len") ls >> cfg.seq_len;
    else if (key == "lstm_hidden") ls >> cfg.lstm_hidden;
    else if (key == "conv_channels") ls >> cfg.conv_channels[0] >> cfg.conv_channels[1];
    else if (key == "conv_kernels") ls >> cfg.conv_kernels[0] >> cfg.conv_kernels[1];
    else if (key == "fc_width") ls >> cfg.fc_width;
    else if (key == "dropout_p") cfg.dropout_p = detail::get_values(ls, 1, "dropout_p")[0];
    else if (key == "n_classes") ls >> cfg.n_classes;
    else if (key == "architecture" || key == "head" || key == "pooling") {
      std::string v;
      ls >> v;
      if (key == "architecture") cfg.architecture = parse_architecture(v);
      else if (key == "head") cfg.head = parse_head(v);
      else cfg.pooling = parse_pooling(v);
    } else {
      throw Error(ErrorCode::MalformedRow, "checkpoint: unknown config key " + key);
    }
    if (!ls) throw Error(ErrorCode::MalformedRow, "checkpoint: bad config line '" + line + "'");
  }
  if (!ended) throw Error(ErrorCode::MalformedRow, "checkpoint: missing end marker");

  Checkpoint ck{QeModel(cfg, 0), std::nullopt};
  QeModel& model = ck.model;
  std::size_t params_seen = 0, stats_seen = 0;
  TrainerState ts;
  bool has_trainer = false;
  std::size_t moments = 0;
  for (const auto& l : body) {
    std::istringstream ls(l);
    std::string kind, name;
    ls >> kind;
    if (kind == "param") {
      ls >> name;
      std::size_t rank = 0;
      ls >> rank;
      Shape shape(rank);
      for (auto& d : shape) ls >> d;
      Var p = model.param(name);
      if (shape != p->value.shape) {
        throw Error(ErrorCode::ShapeMismatch, "checkpoint: parameter " + name + " has shape " + shape_string(shape) +
                                                  ", config expects " + shape_string(p->value.shape));
      }
      p->value.data = detail::get_values(ls, p->value.size(), name);
      ++params_seen;
    } else if (kind == "bn") {
      std::size_t c = 0;
      ls >> name >> c;
      bool found = false;
      for (auto& [n, s] : model.bn_stats()) {
        if (n != name) continue;
        if (s.mean.size() != c) throw Error(ErrorCode::ShapeMismatch, "checkpoint: bn width for " + name);
        s.mean = detail::get_values(ls, c, name);
        s.var = detail::get_values(ls, c, name);
        found = true;
      }
      if (!found) throw Error(ErrorCode::MalformedRow, "checkpoint: unknown bn " + name);
      ++stats_seen;
    } else if (kind == "adam") {
      auto hp = detail::get_values(ls, 4, "adam");
      ts.adam.lr = hp[0];
      ts.adam.beta1 = hp[1];
      ts.adam.beta2 = hp[2];
      ts.adam.eps = hp[3];
      ls >> ts.adam.step;
      ts.adam.init(model.parameters());
      has_trainer = true;
    } else if (kind == "adam_m" || kind == "adam_v") {
      ls >> name;
      const auto& params = model.parameters();
      std::size_t k = 0;
      while (k < params.size() && params[k].first != name) ++k;
      if (k == params.size() || ts.adam.m.size() != params.size()) {
        throw Error(ErrorCode::MalformedRow, "checkpoint: moment for unknown parameter " + name);
      }
      Tensor& t = kind == "adam_m" ? ts.adam.m[k] : ts.adam.v[k];
      t.data = detail::get_values(ls, t.size(), kind);
      ++moments;
    } else if (kind == "schedule") {
      auto sv = detail::get_values(ls, 2, "schedule");
      ts.schedule.tolerance = sv[0];
      ts.schedule.factor = sv[1];
      int has_prev = 0;
      ls >> ts.schedule.max_drops >> ts.schedule.drops >> has_prev;
      const double prev = detail::get_values(ls, 1, "schedule")[0];
      if (has_prev) ts.schedule.previous = prev;
    } else if (kind == "epoch") {
      ls >> ts.epoch;
    } else if (kind == "rng") {
      std::string rest;
      std::getline(ls, rest);
      ts.rng.restore(rest);
    } else {
      throw Error(ErrorCode::MalformedRow, "checkpoint: unknown record " + kind);
    }
    if (ls.fail()) throw Error(ErrorCode::MalformedRow, "checkpoint: bad " + kind + " record");
  }
  if (params_seen != model.parameters().size() || stats_seen != model.bn_stats().size()) {
    throw Error(ErrorCode::MalformedRow, "checkpoint: missing parameters or statistics");
  }
  if (has_trainer) {
    if (moments != 2 * model.parameters().size()) throw Error(ErrorCode::MalformedRow, "checkpoint: missing moments");
    ck.trainer = std::move(ts);
  }
  return ck;
}

}  // namespace subqe::nn
