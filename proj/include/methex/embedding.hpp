#pragma once

// Word vector tables: lookup with a shared UNK row, and loading of
// GloVe-style text files ("|V| d" header, then "token v1 ... vd").

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "methex/error.hpp"
#include "methex/matrix.hpp"
#include "methex/rng.hpp"
#include "methex/text.hpp"

namespace methex {

inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kPadToken = "<pad>";

class EmbeddingTable {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kPad = 1;

  EmbeddingTable() : EmbeddingTable(0) {}

  // An empty vocabulary of dimension `dim` holding only the UNK and PAD rows.
  explicit EmbeddingTable(std::size_t dim) : vectors_("embedding", 2, dim, true) {
    words_ = {std::string(kUnkToken), std::string(kPadToken)};
    index_.emplace(words_[0], kUnk);
    index_.emplace(words_[1], kPad);
  }

  std::size_t dim() const { return vectors_.value.cols(); }
  std::size_t vocab_size() const { return words_.size(); }
  // Vocabulary size without the UNK and PAD rows.
  std::size_t word_count() const { return words_.size() - 2; }
  const std::vector<std::string>& words() const { return words_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }
  bool lowercase() const { return lowercase_; }
  void set_lowercase(bool l) { lowercase_ = l; }

  Parameter& parameter() { return vectors_; }
  const Parameter& parameter() const { return vectors_; }
  const Matrix& vectors() const { return vectors_.value; }

  bool contains(std::string_view token) const { return index_.count(key(token)) != 0; }

  std::size_t index_of(std::string_view token) const {
    auto it = index_.find(key(token));
    return it == index_.end() ? kUnk : it->second;
  }

  // Appends a word with the given vector. Returns false if it already exists.
  bool add(std::string_view token, std::span<const double> vec) {
    if (vec.size() != dim()) throw DimensionError("vector for '" + std::string(token) + "' has wrong dimension");
    auto k = key(token);
    if (index_.count(k)) return false;
    const std::size_t row = words_.size();
    Matrix grown(row + 1, dim());
    std::copy(vectors_.value.data().begin(), vectors_.value.data().end(), grown.data().begin());
    std::copy(vec.begin(), vec.end(), grown.row(row).begin());
    vectors_.value = std::move(grown);
    vectors_.sync_shape();
    index_.emplace(k, row);
    words_.push_back(k);
    return true;
  }

  // Adds every unseen token with a random vector, in first-seen order.
  template <typename Tokens>
  void extend(const Tokens& tokens, Rng& rng, double scale = 0.1) {
    auto fresh = unseen(tokens);
    append(fresh, [&](std::span<double> row) {
      for (double& x : row) x = rng.uniform(-scale, scale);
    });
  }

  // Adds every unseen token as a copy of the UNK row, so lookups return what
  // they returned before the word was added. Returns the number added.
  template <typename Tokens>
  std::size_t extend_from_unk(const Tokens& tokens) {
    auto fresh = unseen(tokens);
    const std::vector<double> unk(vectors_.value.row(kUnk).begin(), vectors_.value.row(kUnk).end());
    append(fresh, [&](std::span<double> row) { std::copy(unk.begin(), unk.end(), row.begin()); });
    return fresh.size();
  }

  void randomize(Rng& rng, double scale = 0.1) { vectors_.value.randomize(rng, scale); }

  // Rebuilds a table from serialized words and vectors.
  static EmbeddingTable from_parts(std::vector<std::string> words, Matrix vectors, bool trainable, bool lowercase) {
    if (words.size() != vectors.rows() || words.size() < 2 || words[0] != kUnkToken || words[1] != kPadToken)
      throw ParseError("embedding table is malformed");
    EmbeddingTable t(vectors.cols());
    t.words_ = std::move(words);
    t.index_.clear();
    for (std::size_t i = 0; i < t.words_.size(); ++i) t.index_.emplace(t.words_[i], i);
    t.vectors_.value = std::move(vectors);
    t.vectors_.sync_shape();
    t.trainable_ = trainable;
    t.lowercase_ = lowercase;
    return t;
  }

 private:
  template <typename Tokens>
  std::vector<std::string> unseen(const Tokens& tokens) const {
    std::vector<std::string> fresh;
    std::unordered_map<std::string, char> pending;
    for (const auto& t : tokens) {
      auto k = key(t);
      if (index_.count(k) || pending.count(k)) continue;
      pending.emplace(k, 1);
      fresh.push_back(std::move(k));
    }
    return fresh;
  }

  template <typename Fill>
  void append(std::vector<std::string>& fresh, Fill&& fill) {
    if (fresh.empty()) return;
    const std::size_t old = words_.size();
    Matrix grown(old + fresh.size(), dim());
    std::copy(vectors_.value.data().begin(), vectors_.value.data().end(), grown.data().begin());
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      fill(grown.row(old + i));
      index_.emplace(fresh[i], old + i);
      words_.push_back(std::move(fresh[i]));
    }
    vectors_.value = std::move(grown);
    vectors_.sync_shape();
  }

  std::string key(std::string_view token) const {
    return lowercase_ ? detail::to_lower(token) : std::string(token);
  }

  Parameter vectors_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  bool trainable_ = true;
  bool lowercase_ = false;
};

// Row i is the vector of tokens[i], or the UNK row when it is unknown.
template <typename Tokens>
Matrix embed(const Tokens& tokens, const EmbeddingTable& table) {
  Matrix out(tokens.size(), table.dim());
  std::size_t i = 0;
  for (const auto& t : tokens) {
    auto src = table.vectors().row(table.index_of(t));
    std::copy(src.begin(), src.end(), out.row(i++).begin());
  }
  return out;
}

namespace detail {

inline double parse_double(std::string_view s, std::size_t line_no) {
  // std::from_chars for double is not available on every libstdc++ we target.
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size())
    throw ParseError("line " + std::to_string(line_no) + ": '" + tmp + "' is not a number");
  return v;
}

}  // namespace detail

// Reads a vector file. A row named "<unk>" supplies the UNK vector; otherwise
// UNK and PAD start at zero.
inline EmbeddingTable load_vectors(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("line 1: missing '<vocab size> <dim>' header");
  auto header = detail::split_ws(line);
  std::size_t declared = 0, dim = 0;
  if (header.size() != 2 ||
      std::from_chars(header[0].data(), header[0].data() + header[0].size(), declared).ec != std::errc{} ||
      std::from_chars(header[1].data(), header[1].data() + header[1].size(), dim).ec != std::errc{} || dim == 0)
    throw ParseError("line 1: malformed header '" + line + "'");

  std::vector<std::string> words = {std::string(kUnkToken), std::string(kPadToken)};
  std::vector<double> values(2 * dim, 0.0);
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t data_rows = 0;
  values.reserve((declared + 2) * dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_ws(line);
    if (fields.size() != dim + 1)
      throw DimensionError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                           " values, got " + std::to_string(fields.size() - 1));
    std::string word(fields[0]);
    ++data_rows;
    std::size_t row;
    if (word == kUnkToken) {
      row = EmbeddingTable::kUnk;
    } else if (word == kPadToken) {
      row = EmbeddingTable::kPad;
    } else {
      if (!seen.emplace(word, words.size()).second)
        throw ParseError("line " + std::to_string(line_no) + ": duplicate token '" + word + "'");
      row = words.size();
      words.push_back(word);
      values.resize(values.size() + dim);
    }
    for (std::size_t k = 0; k < dim; ++k) values[row * dim + k] = detail::parse_double(fields[k + 1], line_no);
  }
  if (data_rows != declared)
    throw ParseError("header declares " + std::to_string(declared) + " vectors but the file holds " +
                     std::to_string(data_rows));
  Matrix m(words.size(), dim);
  m.data() = std::move(values);
  return EmbeddingTable::from_parts(std::move(words), std::move(m), true, false);
}

inline EmbeddingTable load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vector file '" + path.string() + "'");
  try {
    return load_vectors(in);
  } catch (const DimensionError& e) {
    throw DimensionError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace methex
