#pragma once

// Exact-match span scoring, per-category and zero-shot breakdowns, the
// paired t-test and context-term counts.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "methex/corpus.hpp"
#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/text.hpp"

namespace methex {

struct Span {
  std::size_t sentence = 0;  // index of the sentence within the evaluated set
  std::size_t start = 0;     // inclusive
  std::size_t end = 0;       // exclusive
  std::string surface;

  auto key() const { return std::tie(sentence, start, end); }
  friend bool operator<(const Span& a, const Span& b) { return a.key() < b.key(); }
  friend bool operator==(const Span& a, const Span& b) { return a.key() == b.key(); }
};

// Maximal B I* runs. Throws InvalidBio on an I that does not continue a span.
inline std::vector<Span> extract_spans(std::span<const CoarseLabel> labels, std::size_t sentence = 0,
                                       const std::vector<std::string>* tokens = nullptr) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == CoarseLabel::I)
      throw InvalidBio("I at position " + std::to_string(i) + " does not continue a span");
    if (labels[i] == CoarseLabel::O) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < labels.size() && labels[j] == CoarseLabel::I) ++j;
    Span s{sentence, i, j, {}};
    if (tokens) {
      std::vector<std::string> parts((*tokens).begin() + static_cast<std::ptrdiff_t>(i),
                                     (*tokens).begin() + static_cast<std::ptrdiff_t>(j));
      s.surface = join(parts);
    }
    out.push_back(std::move(s));
    i = j;
  }
  return out;
}

// Inverse of extract_spans for non-overlapping spans.
inline std::vector<CoarseLabel> spans_to_labels(const std::vector<Span>& spans, std::size_t n) {
  std::vector<CoarseLabel> out(n, CoarseLabel::O);
  for (const Span& s : spans) {
    out[s.start] = CoarseLabel::B;
    for (std::size_t k = s.start + 1; k < s.end; ++k) out[k] = CoarseLabel::I;
  }
  return out;
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;  // support
};

inline double f_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline PRF prf_from_counts(std::size_t tp, std::size_t predicted, std::size_t gold) {
  PRF m;
  m.true_positives = tp;
  m.predicted = predicted;
  m.gold = gold;
  m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  m.recall = gold ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
  m.f_score = f_score(m.precision, m.recall);
  return m;
}

// Exact match on (sentence, start, end). Empty denominators score 0.
inline PRF span_prf(const std::vector<Span>& predicted, const std::vector<Span>& gold) {
  std::set<Span> p(predicted.begin(), predicted.end()), g(gold.begin(), gold.end());
  std::size_t tp = 0;
  for (const Span& s : p) tp += g.count(s);
  return prf_from_counts(tp, p.size(), g.size());
}

struct EvalReport {
  PRF overall;
  std::map<Category, PRF> per_category;
  std::size_t sentences = 0;
};

inline nlohmann::json to_json(const PRF& m) {
  return {{"precision", m.precision}, {"recall", m.recall},   {"f_score", m.f_score},
          {"tp", m.true_positives},   {"predicted", m.predicted}, {"gold", m.gold}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["sentences"] = r.sentences;
  j["overall"] = to_json(r.overall);
  j["per_category"] = nlohmann::json::object();
  for (const auto& [c, m] : r.per_category) j["per_category"][std::string(to_string(c))] = to_json(m);
  return j;
}

// Span sets for aligned prediction / gold label sequences.
struct SpanSets {
  std::vector<Span> predicted;
  std::vector<Span> gold;
};

inline SpanSets collect_spans(const std::vector<std::vector<CoarseLabel>>& predicted,
                              const std::vector<LabeledSentence>& gold) {
  if (predicted.size() != gold.size()) throw Error("prediction and gold sentence counts differ");
  SpanSets s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].size() != gold[i].labels.size())
      throw Error("sentence " + std::to_string(i) + ": prediction length differs from gold");
    auto p = extract_spans(predicted[i], i, &gold[i].tokens);
    auto g = extract_spans(gold[i].labels, i, &gold[i].tokens);
    s.predicted.insert(s.predicted.end(), p.begin(), p.end());
    s.gold.insert(s.gold.end(), g.begin(), g.end());
  }
  return s;
}

// Groups sentences by category and scores each group separately. Only
// categories that occur in `gold` appear.
inline std::map<Category, PRF> per_category_report(const std::vector<std::vector<CoarseLabel>>& predicted,
                                                   const std::vector<LabeledSentence>& gold) {
  auto spans = collect_spans(predicted, gold);
  std::map<Category, std::vector<Span>> p, g;
  for (const auto& s : gold) p[s.category], g[s.category];
  for (const Span& s : spans.predicted) p[gold[s.sentence].category].push_back(s);
  for (const Span& s : spans.gold) g[gold[s.sentence].category].push_back(s);
  std::map<Category, PRF> out;
  for (auto& [c, gs] : g) out[c] = span_prf(p[c], gs);
  return out;
}

// Micro-averaged overall scores plus the per-category breakdown.
inline EvalReport evaluate(const std::vector<std::vector<CoarseLabel>>& predicted,
                           const std::vector<LabeledSentence>& gold) {
  EvalReport r;
  auto spans = collect_spans(predicted, gold);
  r.overall = span_prf(spans.predicted, spans.gold);
  r.per_category = per_category_report(predicted, gold);
  r.sentences = gold.size();
  return r;
}

// ---------------------------------------------------------------------------
// Zero-shot subset

struct ZeroShotResult {
  std::vector<Span> kept;
  std::size_t unresolved = 0;  // surfaces missing from the tag index, dropped
};

// Keeps spans whose method first appeared strictly after `cutoff`.
inline ZeroShotResult zero_shot_filter(const std::vector<Span>& spans, const std::map<std::string, int>& tag_index,
                                       int cutoff) {
  ZeroShotResult r;
  for (const Span& s : spans) {
    auto it = tag_index.find(surface_key(s.surface));
    if (it == tag_index.end()) {
      ++r.unresolved;
      continue;
    }
    if (it->second > cutoff) r.kept.push_back(s);
  }
  return r;
}

// Scores against zero-shot gold spans only. Predicted spans naming a method
// known at or before the cutoff are set aside, since their gold counterparts
// were removed; every other prediction counts.
inline PRF zero_shot_prf(const SpanSets& spans, const std::map<std::string, int>& tag_index, int cutoff) {
  auto gold = zero_shot_filter(spans.gold, tag_index, cutoff).kept;
  std::vector<Span> pred;
  for (const Span& s : spans.predicted) {
    auto it = tag_index.find(surface_key(s.surface));
    if (it != tag_index.end() && it->second <= cutoff) continue;
    pred.push_back(s);
  }
  return span_prf(pred, gold);
}

// ---------------------------------------------------------------------------
// Significance

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t degrees_of_freedom = 0;
  bool significant = false;
};

// Paired two-tailed t-test on matched score lists.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b, double alpha = 0.05) {
  if (a.size() != b.size()) throw Error("paired t-test needs equal-length score lists");
  if (a.size() < 2) throw Error("paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.degrees_of_freedom = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    throw DegenerateVariance("all paired differences equal " + std::to_string(mean) + "; t is undefined");
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  r.significant = r.p_value < alpha;
  return r;
}

// Per-paper span F-scores for a prediction set, keyed by paper id.
inline std::map<std::string, double> per_paper_f(const std::vector<std::vector<CoarseLabel>>& predicted,
                                                 const std::vector<LabeledSentence>& gold) {
  auto spans = collect_spans(predicted, gold);
  std::map<std::string, std::vector<Span>> p, g;
  for (const auto& s : gold) p[s.paper_id], g[s.paper_id];
  for (const Span& s : spans.predicted) p[gold[s.sentence].paper_id].push_back(s);
  for (const Span& s : spans.gold) g[gold[s.sentence].paper_id].push_back(s);
  std::map<std::string, double> out;
  for (auto& [id, gs] : g) out[id] = span_prf(p[id], gs).f_score;
  return out;
}

// ---------------------------------------------------------------------------
// Context terms

inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",   "the",  "of",   "in",   "on",    "for",   "to",   "and",  "or",    "with", "by",
      "is",   "are",  "was",  "were", "be",   "been",  "being", "as",   "at",   "from",  "that", "this",
      "these", "those", "it",  "its",  "we",   "our",   "us",    "they", "their", "which", "than", "then",
      "also", "can",  "has",  "have", "had",  "not",   "but",   "such", "into", "using", "use",  "used",
      "based", "via", "each", "both", "all",  "other", "more",  "most", "other", "will",  "may",  "i"};
  return words;
}

// Counts tokens within +-window of each occurrence of `target` (matched on
// normalized tokens), skipping the occurrence itself, stopwords and
// punctuation. Keys are lowercased.
inline std::map<std::string, std::size_t> context_frequencies(const std::vector<LabeledSentence>& sentences,
                                                              std::string_view target, std::size_t window,
                                                              const std::unordered_set<std::string>& stopwords =
                                                                  default_stopwords()) {
  if (window < 1) throw Error("context window must be at least 1");
  const auto key = normalize_surface(target);
  std::map<std::string, std::size_t> counts;
  if (key.empty()) return counts;
  for (const auto& s : sentences) {
    std::vector<std::string> norm;
    norm.reserve(s.tokens.size());
    for (const auto& t : s.tokens) norm.push_back(normalize_token(t));
    for (std::size_t i = 0; i + key.size() <= norm.size(); ++i) {
      if (!std::equal(key.begin(), key.end(), norm.begin() + static_cast<std::ptrdiff_t>(i))) continue;
      const std::size_t end = i + key.size();
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(norm.size(), end + window);
      for (std::size_t k = lo; k < hi; ++k) {
        if (k >= i && k < end) continue;
        if (norm[k].empty() || stopwords.count(norm[k])) continue;
        ++counts[norm[k]];
      }
    }
  }
  return counts;
}

// CSV "term,count", most frequent first, ties alphabetical.
inline void write_frequencies_csv(std::ostream& os, const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  os << "term,count\n";
  for (const auto& [term, n] : rows) {
    bool quote = term.find_first_of(",\"") != std::string::npos;
    if (quote) {
      os << '"';
      for (char c : term) os << (c == '"' ? "\"\"" : std::string(1, c));
      os << '"';
    } else {
      os << term;
    }
    os << ',' << n << '\n';
  }
}

}  // namespace methex
