#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "subqe/error.hpp"
#include "subqe/text.hpp"

namespace subqe {

/// Word vectors for one language, stored contiguously.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, std::string language) : dim_(dim), language_(std::move(language)) {
    if (dim_ == 0) throw Error(ErrorCode::DimMismatch, "embedding dim must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& language() const noexcept { return language_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Returns false (and keeps the existing vector) when `token` is already present.
  bool add(const std::string& token, std::span<const double> vec) {
    if (vec.size() != dim_) throw Error(ErrorCode::DimMismatch, "vector for '" + token + "' has wrong length");
    if (index_.contains(token)) return false;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    data_.insert(data_.end(), vec.begin(), vec.end());
    return true;
  }

  bool contains(const std::string& token) const { return index_.contains(token); }

  /// Empty span for out-of-vocabulary tokens.
  std::span<const double> find(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return {};
    return {data_.data() + it->second * dim_, dim_};
  }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.language_ == b.language_ && a.tokens_ == b.tokens_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::string language_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

struct EmbeddingLoadStats {
  std::size_t rows = 0;
  std::size_t duplicates = 0;
  std::size_t header_count = 0;
};

/// word2vec text layout: a "<count> <dim>" header, then "<token> <v1> ... <v_dim>" rows.
inline EmbeddingTable load_embeddings(std::istream& in, std::size_t expected_dim, std::string language = {},
                                      EmbeddingLoadStats* stats = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "missing embedding header");
  std::size_t count = 0, dim = 0;
  {
    std::istringstream header(line);
    if (!(header >> count >> dim)) throw Error(ErrorCode::MalformedRow, "bad embedding header '" + line + "'");
  }
  if (dim != expected_dim) {
    throw Error(ErrorCode::DimMismatch,
                "header dim " + std::to_string(dim) + " != expected " + std::to_string(expected_dim));
  }
  EmbeddingTable table(dim, std::move(language));
  EmbeddingLoadStats local;
  local.header_count = count;
  std::vector<double> vec;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_ws(line);
    if (fields.size() != dim + 1) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(dim) + " values, got " +
                                               std::to_string(fields.size() - 1));
    }
    vec.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      char* end = nullptr;
      vec[k] = std::strtod(fields[k + 1].c_str(), &end);
      if (end == fields[k + 1].c_str() || *end != '\0' || !std::isfinite(vec[k])) {
        throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad value '" + fields[k + 1] + "'");
      }
    }
    ++local.rows;
    if (!table.add(fields[0], vec)) ++local.duplicates;
  }
  if (table.size() == 0) throw Error(ErrorCode::Empty, "embedding file has no rows");
  if (stats) *stats = local;
  return table;
}

inline void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (double v : table.row(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::LengthMismatch, "cosine of vectors with different lengths");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

/// Row-major N x M cosine matrix between in-vocabulary source and target tokens.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  TokenSequence row_tokens;
  TokenSequence col_tokens;
  std::size_t source_oov = 0;
  std::size_t target_oov = 0;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  bool empty() const noexcept { return rows == 0 || cols == 0; }

  SimilarityMatrix transposed() const {
    SimilarityMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.values.resize(values.size());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t.values[j * rows + i] = at(i, j);
    t.row_tokens = col_tokens;
    t.col_tokens = row_tokens;
    t.source_oov = target_oov;
    t.target_oov = source_oov;
    return t;
  }

  static SimilarityMatrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    SimilarityMatrix s;
    s.rows = rows_in.size();
    s.cols = rows_in.empty() ? 0 : rows_in.front().size();
    for (const auto& r : rows_in) {
      if (r.size() != s.cols) throw Error(ErrorCode::ShapeMismatch, "ragged similarity rows");
      s.values.insert(s.values.end(), r.begin(), r.end());
    }
    return s;
  }
};

/// Out-of-vocabulary tokens are dropped and counted.
inline SimilarityMatrix similarity_matrix(const TokenSequence& src, const TokenSequence& tgt,
                                          const EmbeddingTable& src_table, const EmbeddingTable& tgt_table) {
  if (src_table.dim() != tgt_table.dim()) throw Error(ErrorCode::DimMismatch, "embedding tables differ in dim");
  SimilarityMatrix s;
  std::vector<std::span<const double>> src_vecs, tgt_vecs;
  for (const auto& tok : src) {
    const auto v = src_table.find(tok);
    if (v.empty()) {
      ++s.source_oov;
    } else {
      src_vecs.push_back(v);
      s.row_tokens.push_back(tok);
    }
  }
  for (const auto& tok : tgt) {
    const auto v = tgt_table.find(tok);
    if (v.empty()) {
      ++s.target_oov;
    } else {
      tgt_vecs.push_back(v);
      s.col_tokens.push_back(tok);
    }
  }
  if (src_vecs.empty() || tgt_vecs.empty()) {
    throw Error(ErrorCode::EmptyAfterOov, "no in-vocabulary tokens on the " +
                                              std::string(src_vecs.empty() ? "source" : "target") + " side");
  }
  s.rows = src_vecs.size();
  s.cols = tgt_vecs.size();
  s.values.resize(s.rows * s.cols);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) s.values[i * s.cols + j] = cosine(src_vecs[i], tgt_vecs[j]);
  return s;
}

}  // namespace subqe
