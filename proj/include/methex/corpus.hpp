#pragma once

// Turns parsed papers into distantly supervised, BIO-labeled sentence
// datasets and splits them by time or by ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/rng.hpp"
#include "methex/text.hpp"

namespace methex {

struct MethodTag {
  std::string surface;
  int first_year = 0;
};

struct RawPaper {
  std::string paper_id;
  std::string title;
  std::vector<Section> sections;
  std::vector<MethodTag> tags;
  Category category = Category::GEN;
};

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<CoarseLabel> labels;
  Category category = Category::GEN;
  int paper_year = 0;
  std::string paper_id;
  int sentence_index = 0;  // position among the paper's sentences

  std::size_t size() const { return tokens.size(); }
};

struct Corpus {
  std::vector<LabeledSentence> sentences;
  std::map<std::string, int> tag_index;  // normalized surface -> first year

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }

  // Records a tag, keeping the earliest year when the normalized key repeats.
  void add_tag(const MethodTag& tag) {
    auto key = surface_key(tag.surface);
    if (key.empty()) return;
    auto [it, inserted] = tag_index.emplace(key, tag.first_year);
    if (!inserted) it->second = std::min(it->second, tag.first_year);
  }

  Corpus with_sentences(std::vector<LabeledSentence> s) const {
    Corpus c;
    c.sentences = std::move(s);
    c.tag_index = tag_index;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Paper input (JSON lines)

inline MethodTag parse_method_tag(const nlohmann::json& j) {
  MethodTag t{j.at("surface").get<std::string>(), j.at("first_year").get<int>()};
  if (detail::trim(t.surface).empty()) throw ParseError("tag surface is empty");
  if (t.first_year < 1950 || t.first_year > 2100)
    throw ParseError("tag '" + t.surface + "' has first_year " + std::to_string(t.first_year) +
                     " outside [1950, 2100]");
  return t;
}

inline RawPaper parse_raw_paper(const nlohmann::json& j) {
  RawPaper p;
  p.paper_id = j.at("paper_id").get<std::string>();
  if (p.paper_id.empty()) throw ParseError("paper_id is empty");
  p.title = j.value("title", std::string{});
  for (const auto& s : j.value("sections", nlohmann::json::array()))
    p.sections.push_back({s.at("heading").get<std::string>(), s.at("body").get<std::string>()});
  for (const auto& t : j.value("tags", nlohmann::json::array())) p.tags.push_back(parse_method_tag(t));
  p.category = parse_category(j.at("category").get<std::string>());
  return p;
}

inline RawPaper parse_raw_paper(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  try {
    return parse_raw_paper(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
}

inline nlohmann::json to_json(const RawPaper& p) {
  nlohmann::json j;
  j["paper_id"] = p.paper_id;
  j["title"] = p.title;
  j["sections"] = nlohmann::json::array();
  for (const auto& s : p.sections) j["sections"].push_back({{"heading", s.heading}, {"body", s.body}});
  j["tags"] = nlohmann::json::array();
  for (const auto& t : p.tags) j["tags"].push_back({{"surface", t.surface}, {"first_year", t.first_year}});
  j["category"] = std::string(to_string(p.category));
  return j;
}

// ---------------------------------------------------------------------------
// Weak labeling

// Greedy longest-match tagger over normalized token sequences.
class TagMatcher {
 public:
  TagMatcher() = default;
  explicit TagMatcher(const std::vector<MethodTag>& tags) {
    for (const auto& t : tags) add(t.surface);
  }

  void add(std::string_view surface) {
    auto key = normalize_surface(surface);
    if (key.empty()) return;
    auto& bucket = by_first_[key.front()];
    if (std::find(bucket.begin(), bucket.end(), key) != bucket.end()) return;
    bucket.push_back(std::move(key));
    std::stable_sort(bucket.begin(), bucket.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
  }

  std::vector<CoarseLabel> label(const std::vector<std::string>& tokens) const {
    std::vector<std::string> norm;
    norm.reserve(tokens.size());
    for (const auto& t : tokens) norm.push_back(normalize_token(t));

    std::vector<CoarseLabel> out(tokens.size(), CoarseLabel::O);
    std::size_t i = 0;
    while (i < norm.size()) {
      std::size_t matched = 0;
      if (!norm[i].empty()) {
        if (auto it = by_first_.find(norm[i]); it != by_first_.end()) {
          for (const auto& key : it->second) {
            if (i + key.size() > norm.size()) continue;
            if (std::equal(key.begin(), key.end(), norm.begin() + static_cast<std::ptrdiff_t>(i))) {
              matched = key.size();
              break;
            }
          }
        }
      }
      if (matched == 0) {
        ++i;
        continue;
      }
      out[i] = CoarseLabel::B;
      for (std::size_t k = 1; k < matched; ++k) out[i + k] = CoarseLabel::I;
      i += matched;
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> by_first_;
};

inline std::vector<CoarseLabel> weak_label(const std::vector<std::string>& tokens,
                                           const std::vector<MethodTag>& tags) {
  return TagMatcher(tags).label(tokens);
}

// The paper's date: the latest first-appearance year among its tags.
inline int assign_timestamp(const RawPaper& paper) {
  if (paper.tags.empty()) throw EmptyTags("paper '" + paper.paper_id + "' has no method tags");
  int year = paper.tags.front().first_year;
  for (const auto& t : paper.tags) year = std::max(year, t.first_year);
  return year;
}

// ---------------------------------------------------------------------------
// Corpus assembly

struct BuildOptions {
  SectionFilter sections;
  double negative_keep_rate = 1.0;  // fraction of all-O sentences kept
  std::uint64_t seed = 13;
};

struct BuildStats {
  std::size_t papers_read = 0;
  std::size_t papers_kept = 0;
  std::size_t papers_without_tags = 0;
  std::size_t papers_without_sections = 0;
  std::size_t duplicate_ids = 0;
  std::size_t malformed_lines = 0;
  std::size_t sentences = 0;
  std::size_t spans = 0;
  std::size_t negatives_dropped = 0;
};

inline std::size_t count_spans(const std::vector<CoarseLabel>& labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), CoarseLabel::B));
}

// Sentences of one paper, labeled against that paper's own tags. Negative
// sampling is the caller's business.
inline std::vector<LabeledSentence> label_paper(const RawPaper& paper, const SectionFilter& filter = {}) {
  const int year = assign_timestamp(paper);
  TagMatcher matcher(paper.tags);
  std::vector<LabeledSentence> out;
  int index = 0;
  for (const auto& body : select_sections(paper.sections, filter)) {
    for (const auto& sentence : segment_sentences(body)) {
      auto tokens = tokenize(sentence);
      if (tokens.empty()) continue;
      LabeledSentence s;
      s.labels = matcher.label(tokens);
      s.tokens = std::move(tokens);
      s.category = paper.category;
      s.paper_year = year;
      s.paper_id = paper.paper_id;
      s.sentence_index = index++;
      out.push_back(std::move(s));
    }
  }
  return out;
}

class CorpusBuilder {
 public:
  explicit CorpusBuilder(BuildOptions options = {}) : options_(std::move(options)), rng_(options_.seed) {}

  void add(const RawPaper& paper) {
    ++stats_.papers_read;
    if (!seen_.insert(paper.paper_id).second) {
      ++stats_.duplicate_ids;
      return;
    }
    if (paper.tags.empty()) {
      ++stats_.papers_without_tags;
      return;
    }
    auto sentences = label_paper(paper, options_.sections);
    if (sentences.empty()) ++stats_.papers_without_sections;
    ++stats_.papers_kept;
    for (const auto& t : paper.tags) corpus_.add_tag(t);
    for (auto& s : sentences) {
      std::size_t spans = count_spans(s.labels);
      if (spans == 0 && options_.negative_keep_rate < 1.0 && !rng_.bernoulli(options_.negative_keep_rate)) {
        ++stats_.negatives_dropped;
        continue;
      }
      stats_.spans += spans;
      ++stats_.sentences;
      corpus_.sentences.push_back(std::move(s));
    }
  }

  void note_malformed() { ++stats_.malformed_lines; }

  const BuildStats& stats() const { return stats_; }
  const Corpus& corpus() const { return corpus_; }
  Corpus take() { return std::move(corpus_); }

 private:
  BuildOptions options_;
  Rng rng_;
  std::set<std::string> seen_;
  Corpus corpus_;
  BuildStats stats_;
};

inline Corpus build_corpus(const std::vector<RawPaper>& papers, const BuildOptions& options = {},
                           BuildStats* stats = nullptr) {
  CorpusBuilder builder(options);
  for (const auto& p : papers) builder.add(p);
  if (stats) *stats = builder.stats();
  return builder.take();
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
  Corpus train;
  Corpus test;
};

inline Split chronological_split(const Corpus& corpus, int cutoff) {
  Split s{corpus.with_sentences({}), corpus.with_sentences({})};
  for (const auto& sentence : corpus.sentences)
    (sentence.paper_year <= cutoff ? s.train : s.test).sentences.push_back(sentence);
  return s;
}

// Seeded shuffle, then the first round(ratio * n) sentences form the train side.
inline Split percentage_split(const Corpus& corpus, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must lie strictly between 0 and 1");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(corpus.size())));
  Split s{corpus.with_sentences({}), corpus.with_sentences({})};
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_train ? s.train : s.test).sentences.push_back(corpus.sentences[order[k]]);
  return s;
}

// Sentences grouped by paper year.
inline std::map<int, Corpus> by_year(const Corpus& corpus) {
  std::map<int, Corpus> out;
  for (const auto& s : corpus.sentences) {
    auto [it, inserted] = out.try_emplace(s.paper_year);
    if (inserted) it->second.tag_index = corpus.tag_index;
    it->second.sentences.push_back(s);
  }
  return out;
}

}  // namespace methex
