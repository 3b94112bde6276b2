#pragma once

// Column dataset files: one token per line, tab-separated
//   token  label  category  paper_year  paper_id
// with a blank line after every sentence. An optional sixth column carries
// the sentence index within its paper; without it the index is the ordinal
// of the sentence among the file's sentences from the same paper.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "methex/corpus.hpp"
#include "methex/error.hpp"

namespace methex {

inline void write_dataset(std::ostream& os, const std::vector<LabeledSentence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      os << s.tokens[i] << '\t' << to_string(s.labels[i]) << '\t' << to_string(s.category) << '\t'
         << s.paper_year << '\t' << s.paper_id << '\n';
    }
    os << '\n';
  }
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

// Fine labels ("B-NLP") are accepted and read back as their coarse indicator.
inline std::vector<LabeledSentence> read_dataset(std::istream& is) {
  std::vector<LabeledSentence> out;
  std::unordered_map<std::string, int> ordinal;
  LabeledSentence cur;
  bool explicit_index = false;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (cur.tokens.empty()) return;
    if (!is_bio_valid(std::span<const CoarseLabel>(cur.labels)))
      throw ParseError("line " + std::to_string(line_no) + ": sentence labels are not valid BIO");
    if (!explicit_index) cur.sentence_index = ordinal[cur.paper_id]++;
    out.push_back(std::move(cur));
    cur = LabeledSentence{};
    explicit_index = false;
  };

  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 5 && cols.size() != 6)
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 or 6 tab-separated columns, got " +
                       std::to_string(cols.size()));
    try {
      if (cols[0].empty()) throw ParseError("empty token");
      auto category = parse_category(cols[2]);
      int year = std::stoi(cols[3]);
      if (cur.tokens.empty()) {
        cur.category = category;
        cur.paper_year = year;
        cur.paper_id = cols[4];
        if (cols.size() == 6) {
          cur.sentence_index = std::stoi(cols[5]);
          explicit_index = true;
        }
      } else if (category != cur.category || year != cur.paper_year || cols[4] != cur.paper_id) {
        throw ParseError("sentence metadata changes mid-sentence");
      }
      cur.tokens.push_back(cols[0]);
      cur.labels.push_back(parse_fine_label(cols[1]).indicator);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  flush();
  return out;
}

inline std::vector<LabeledSentence> read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_dataset_file(const std::filesystem::path& path, const std::vector<LabeledSentence>& sentences) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset '" + path.string() + "'");
  write_dataset(out, sentences);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Tag index sidecar: "normalized surface<TAB>first_year" per line, sorted.
inline std::filesystem::path tag_index_path(const std::filesystem::path& dataset) {
  return std::filesystem::path(dataset.string() + ".tags.tsv");
}

inline void write_tag_index(const std::filesystem::path& path, const std::map<std::string, int>& index) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tag index '" + path.string() + "'");
  for (const auto& [key, year] : index) out << key << '\t' << year << '\n';
}

inline std::map<std::string, int> read_tag_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read tag index '" + path.string() + "'");
  std::map<std::string, int> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    index[cols[0]] = std::stoi(cols[1]);
  }
  return index;
}

// Loads a dataset and, when present, its tag index sidecar.
inline Corpus load_corpus(const std::filesystem::path& dataset) {
  Corpus c;
  c.sentences = read_dataset_file(dataset);
  if (auto tags = tag_index_path(dataset); std::filesystem::exists(tags)) c.tag_index = read_tag_index(tags);
  return c;
}

inline void save_corpus(const std::filesystem::path& dataset, const Corpus& corpus) {
  write_dataset_file(dataset, corpus.sentences);
  write_tag_index(tag_index_path(dataset), corpus.tag_index);
}

}  // namespace methex
