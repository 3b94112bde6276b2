#pragma once

// Section selection, sentence segmentation, tokenization and the
// normalization used when matching method names against text.

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace methex {

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// ASCII punctuation that tokenization peels off a word's edges. '+', '#' and
// '_' are kept so names such as "C++" survive intact.
inline bool is_edge_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0 && c != '+' && c != '#' && c != '_';
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool is_roman(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c == 'i' || c == 'v' || c == 'x';
  });
}

// Section numbering such as "3", "3.1", "3.1.", "iv." or "a.".
inline bool is_numbering(std::string_view w) {
  if (w.empty()) return false;
  bool dotted = w.back() == '.' || w.back() == ')';
  std::string_view core = dotted ? w.substr(0, w.size() - 1) : w;
  if (core.empty()) return false;
  if (std::all_of(core.begin(), core.end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; }))
    return true;
  if (dotted && is_roman(core)) return true;
  return dotted && core.size() == 1 && std::isalpha(static_cast<unsigned char>(core[0]));
}

// True when `phrase` occurs in `words` as a contiguous run of whole words.
inline bool contains_phrase(const std::vector<std::string_view>& words, std::string_view phrase) {
  auto parts = split_ws(phrase);
  if (parts.empty() || parts.size() > words.size()) return false;
  for (std::size_t i = 0; i + parts.size() <= words.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < parts.size() && ok; ++k) ok = words[i + k] == parts[k];
    if (ok) return true;
  }
  return false;
}

}  // namespace detail

// Lowercases, drops leading section numbering and replaces punctuation with
// spaces: "3.1 Method:" -> "method", "IV. RESULTS" -> "results".
inline std::string normalize_heading(std::string_view heading) {
  std::string lowered = detail::to_lower(detail::trim(heading));
  auto words = detail::split_ws(lowered);
  std::size_t first = 0;
  while (first < words.size() && detail::is_numbering(words[first])) ++first;
  std::string out;
  for (std::size_t i = first; i < words.size(); ++i) {
    for (char c : words[i]) {
      if (detail::is_alnum(c) || static_cast<unsigned char>(c) >= 0x80) {
        out += c;
      } else if (!out.empty() && out.back() != ' ') {
        out += ' ';
      }
    }
    if (!out.empty() && out.back() != ' ') out += ' ';
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

struct SectionFilter {
  std::vector<std::string> keep = {"abstract",   "introduction", "methodology",
                                   "method",     "methods",      "approach",
                                   "experiments", "experiment",  "experimental setup",
                                   "results"};
  std::vector<std::string> exclude = {"background", "related work", "conclusion",
                                      "conclusions", "future work", "acknowledgements",
                                      "acknowledgments", "acknowledgement", "acknowledgment",
                                      "references", "appendix"};

  bool accepts(std::string_view heading) const {
    std::string norm = normalize_heading(heading);
    auto words = detail::split_ws(norm);
    for (const auto& e : exclude)
      if (detail::contains_phrase(words, e)) return false;
    for (const auto& k : keep)
      if (detail::contains_phrase(words, k)) return true;
    return false;
  }
};

struct Section {
  std::string heading;
  std::string body;
};

inline std::vector<std::string> select_sections(const std::vector<Section>& sections,
                                                const SectionFilter& filter = {}) {
  std::vector<std::string> out;
  for (const auto& s : sections)
    if (filter.accepts(s.heading)) out.push_back(s.body);
  return out;
}

// Lowercased words (without the final period) after which a period does not end a sentence.
inline const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> list = {
      "al", "fig", "figs", "eq", "eqs", "e.g", "i.e", "etc", "vs", "cf",
      "sec", "secs", "tab", "no", "approx", "resp", "dr", "prof", "mr", "ms"};
  return list;
}

// Splits at '.', '!' or '?' (plus any closing brackets or quotes) followed by
// whitespace and an uppercase letter, unless the period ends a known
// abbreviation.
inline std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  const auto& abbrev = default_abbreviations();
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto piece = detail::trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == ')' || text[j] == ']' || text[j] == '"' || text[j] == '\''))
      ++j;
    if (j >= text.size() || !detail::is_space(text[j])) continue;
    std::size_t k = j;
    while (k < text.size() && detail::is_space(text[k])) ++k;
    if (k >= text.size() || !detail::is_upper(text[k])) continue;
    if (c == '.') {
      std::size_t w = i;
      while (w > start && !detail::is_space(text[w - 1])) --w;
      std::string word = detail::to_lower(text.substr(w, i - w));
      while (!word.empty() && (word.front() == '(' || word.front() == '[')) word.erase(0, 1);
      if (std::find(abbrev.begin(), abbrev.end(), word) != abbrev.end()) continue;
    }
    emit(j);
    i = j - 1;
  }
  emit(text.size());
  return out;
}

// Whitespace split, then leading and trailing punctuation become separate
// one-character tokens. Inner hyphens, digits and '+' stay inside the token.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  for (std::string_view w : detail::split_ws(sentence)) {
    std::size_t b = 0, e = w.size();
    while (b < e && detail::is_edge_punct(w[b])) ++b;
    while (e > b && detail::is_edge_punct(w[e - 1])) --e;
    for (std::size_t i = 0; i < b; ++i) out.emplace_back(1, w[i]);
    if (e > b) out.emplace_back(w.substr(b, e - b));
    for (std::size_t i = e; i < w.size(); ++i) out.emplace_back(1, w[i]);
  }
  return out;
}

// Matching key for a single token: lowercase with edge punctuation removed.
// Pure punctuation normalizes to the empty string.
inline std::string normalize_token(std::string_view token) {
  std::size_t b = 0, e = token.size();
  while (b < e && detail::is_edge_punct(token[b])) ++b;
  while (e > b && detail::is_edge_punct(token[e - 1])) --e;
  return detail::to_lower(token.substr(b, e - b));
}

// Matching key for a method name: its tokens, normalized, punctuation dropped.
inline std::vector<std::string> normalize_surface(std::string_view surface) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(surface)) {
    auto n = normalize_token(t);
    if (!n.empty()) out.push_back(std::move(n));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string surface_key(std::string_view surface) { return join(normalize_surface(surface)); }

}  // namespace methex
