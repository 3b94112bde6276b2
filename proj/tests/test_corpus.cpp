#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace methex;
using L = CoarseLabel;
using Strings = std::vector<std::string>;

namespace {

std::vector<std::string> bodies(const std::vector<Section>& s) { return select_sections(s); }

RawPaper paper(std::string id, std::vector<MethodTag> tags, std::vector<Section> sections,
               Category c = Category::NLP) {
  RawPaper p;
  p.paper_id = std::move(id);
  p.tags = std::move(tags);
  p.sections = std::move(sections);
  p.category = c;
  return p;
}

LabeledSentence sentence_of_year(int year, std::string id) {
  LabeledSentence s;
  s.tokens = {"x"};
  s.labels = {L::O};
  s.paper_year = year;
  s.paper_id = std::move(id);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sections

TEST(SelectSections, KeepsDocumentSectionsAndDropsExcluded) {
  std::vector<Section> s = {{"Abstract", "a"}, {"Related Work", "r"}, {"Experiments", "e"}};
  EXPECT_EQ(bodies(s), (Strings{"a", "e"}));
  EXPECT_TRUE(bodies({}).empty());
}

TEST(SelectSections, NormalizesCaseAndNumbering) {
  std::vector<Section> s = {{"INTRODUCTION", "i"}, {"3. Method", "m"}, {"Appendix A", "x"}};
  EXPECT_EQ(bodies(s), (Strings{"i", "m"}));
}

TEST(SelectSections, ExclusionWinsOverKeep) {
  std::vector<Section> s = {{"Conclusions and Future Work", "c"}, {"Results and Conclusion", "rc"},
                            {"4.2 Experimental Setup", "x"}, {"IV. RESULTS", "r"}, {"Methodology:", "m"}};
  EXPECT_EQ(bodies(s), (Strings{"x", "r", "m"}));
}

TEST(NormalizeHeading, StripsNumberingAndPunctuation) {
  EXPECT_EQ(normalize_heading("3.1 Method:"), "method");
  EXPECT_EQ(normalize_heading("IV. RESULTS"), "results");
  EXPECT_EQ(normalize_heading("  Related-Work "), "related work");
}

// ---------------------------------------------------------------------------
// Segmentation and tokens

TEST(SegmentSentences, SplitsPlainSentences) {
  EXPECT_EQ(segment_sentences("We use BERT. It works."), (Strings{"We use BERT.", "It works."}));
  EXPECT_TRUE(segment_sentences("").empty());
}

TEST(SegmentSentences, AbbreviationGuard) {
  EXPECT_EQ(segment_sentences("See Fig. 2 for details. Next."), (Strings{"See Fig. 2 for details.", "Next."}));
  EXPECT_EQ(segment_sentences("As shown by Smith et al. The results hold."),
            (Strings{"As shown by Smith et al. The results hold."}));
  EXPECT_EQ(segment_sentences("Compare (cf. Table 1) and Eq. Two."), (Strings{"Compare (cf. Table 1) and Eq. Two."}));
}

TEST(SegmentSentences, NeedsUppercaseAfterTheBreak) {
  EXPECT_EQ(segment_sentences("We use v2.0 here. lower case continues."),
            (Strings{"We use v2.0 here. lower case continues."}));
  EXPECT_EQ(segment_sentences("Is it? Yes! (Really.) Done."), (Strings{"Is it?", "Yes! (Really.)", "Done."}));
}

TEST(SegmentSentences, ReconstructsTheInput) {
  const std::string text = "A first one.  Then B (x). \"Quoted.\" Last?";
  auto parts = segment_sentences(text);
  std::string joined, squeezed;
  for (const auto& p : parts) joined += p;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) squeezed += c;
  std::string j2;
  for (char c : joined)
    if (!std::isspace(static_cast<unsigned char>(c))) j2 += c;
  EXPECT_EQ(j2, squeezed);
  EXPECT_EQ(parts.size(), 3u);
}

TEST(Tokenize, PeelsEdgePunctuation) {
  EXPECT_EQ(tokenize("We use GPT-2."), (Strings{"We", "use", "GPT-2", "."}));
  EXPECT_EQ(tokenize("BERT, RoBERTa"), (Strings{"BERT", ",", "RoBERTa"}));
  EXPECT_EQ(tokenize("state-of-the-art (SOTA)"), (Strings{"state-of-the-art", "(", "SOTA", ")"}));
  EXPECT_EQ(tokenize("C++ and C# ([3])."), (Strings{"C++", "and", "C#", "(", "[", "3", "]", ")", "."}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Normalize, TokenAndSurface) {
  EXPECT_EQ(normalize_token("BERT,"), "bert");
  EXPECT_EQ(normalize_token("("), "");
  EXPECT_EQ(normalize_surface("Faster R-CNN"), (Strings{"faster", "r-cnn"}));
  EXPECT_EQ(surface_key("  Graph Attention Network "), "graph attention network");
}

// ---------------------------------------------------------------------------
// Weak labels

TEST(WeakLabel, SingleExactMatch) {
  EXPECT_EQ(weak_label({"We", "use", "BERT", "embeddings"}, {{"BERT", 2018}}),
            (std::vector<L>{L::O, L::O, L::B, L::O}));
}

TEST(WeakLabel, LongestMatchWins) {
  EXPECT_EQ(weak_label({"a", "Graph", "Attention", "Network", "model"},
                       {{"Graph", 2010}, {"Graph Attention Network", 2017}}),
            (std::vector<L>{L::O, L::B, L::I, L::I, L::O}));
}

TEST(WeakLabel, NoMatches) {
  EXPECT_EQ(weak_label({"no", "mentions", "here"}, {{"BERT", 2018}}), (std::vector<L>{L::O, L::O, L::O}));
}

TEST(WeakLabel, CaseAndPunctuationInsensitive) {
  EXPECT_EQ(weak_label(tokenize("we use bert, then (BERT)."), {{"BERT", 2018}}),
            (std::vector<L>{L::O, L::O, L::B, L::O, L::O, L::O, L::B, L::O, L::O}));
}

TEST(WeakLabel, AdjacentMentionsStaySeparate) {
  EXPECT_EQ(weak_label({"BERT", "BERT"}, {{"BERT", 2018}}), (std::vector<L>{L::B, L::B}));
}

// Greedy longest match, written independently: at each position try every
// tag and keep the longest one whose normalized tokens line up.
TEST(WeakLabel, MatchesExhaustiveLongestMatchOracle) {
  Rng rng(11);
  const Strings alphabet = {"a", "b", "c", "A", "b,", "(c)"};
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<MethodTag> tags;
    std::vector<Strings> keys;
    const std::size_t n_tags = 1 + rng.below(4);
    for (std::size_t k = 0; k < n_tags; ++k) {
      Strings words;
      for (std::size_t w = 0, len = 1 + rng.below(3); w < len; ++w) words.push_back(std::string(1, "abc"[rng.below(3)]));
      tags.push_back({join(words), 2000});
      keys.push_back(words);
    }
    Strings tokens;
    for (std::size_t i = 0, n = 1 + rng.below(10); i < n; ++i) tokens.push_back(alphabet[rng.below(alphabet.size())]);
    Strings norm;
    for (const auto& t : tokens) {
      std::string s;
      for (char c : t)
        if (std::isalpha(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(c));
      norm.push_back(s);
    }
    std::vector<L> want(tokens.size(), L::O);
    for (std::size_t i = 0; i < tokens.size();) {
      std::size_t best = 0;
      for (const auto& key : keys) {
        if (i + key.size() > tokens.size() || key.size() <= best) continue;
        bool ok = true;
        for (std::size_t k = 0; k < key.size(); ++k) ok = ok && norm[i + k] == key[k];
        if (ok) best = key.size();
      }
      if (!best) {
        ++i;
        continue;
      }
      want[i] = L::B;
      for (std::size_t k = 1; k < best; ++k) want[i + k] = L::I;
      i += best;
    }
    auto got = weak_label(tokens, tags);
    ASSERT_EQ(got, want) << join(tokens) << " / " << tags.size() << " tags";
    ASSERT_TRUE(is_bio_valid(got));
    // Every produced span equals some tag under normalization.
    for (const auto& span : extract_spans(got, 0, &tokens)) {
      bool found = false;
      for (const auto& t : tags) found = found || surface_key(span.surface) == surface_key(t.surface);
      ASSERT_TRUE(found) << span.surface;
    }
  }
}

// ---------------------------------------------------------------------------
// Timestamps and splits

TEST(AssignTimestamp, MaxTagYear) {
  EXPECT_EQ(assign_timestamp(paper("a", {{"x", 2015}, {"y", 2018}}, {})), 2018);
  EXPECT_EQ(assign_timestamp(paper("a", {{"x", 2010}}, {})), 2010);
  EXPECT_EQ(assign_timestamp(paper("a", {{"x", 2017}, {"y", 2017}, {"z", 2016}}, {})), 2017);
  EXPECT_THROW(assign_timestamp(paper("a", {}, {})), EmptyTags);
}

TEST(ChronologicalSplit, CutoffIsInclusive) {
  Corpus c;
  for (int y : {2016, 2017, 2018}) c.sentences.push_back(sentence_of_year(y, std::to_string(y)));
  auto s = chronological_split(c, 2017);
  ASSERT_EQ(s.train.size(), 2u);
  ASSERT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.test.sentences[0].paper_year, 2018);
  EXPECT_EQ(chronological_split(c, 2000).train.size(), 0u);
  EXPECT_EQ(chronological_split(c, 2100).test.size(), 0u);
  auto again = chronological_split(s.train, 2017);
  EXPECT_EQ(again.train.size(), 2u);
  EXPECT_EQ(again.test.size(), 0u);
}

TEST(PercentageSplit, SizesAndDeterminism) {
  Corpus c;
  for (int i = 0; i < 10; ++i) c.sentences.push_back(sentence_of_year(2015, "p" + std::to_string(i)));
  auto a = percentage_split(c, 0.9, 5), b = percentage_split(c, 0.9, 5);
  EXPECT_EQ(a.train.size(), 9u);
  EXPECT_EQ(a.test.size(), 1u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.sentences[i].paper_id, b.train.sentences[i].paper_id);
  Corpus one;
  one.sentences.push_back(sentence_of_year(2015, "only"));
  auto s = percentage_split(one, 0.9, 1);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.test.size(), 0u);
  EXPECT_THROW(percentage_split(c, 1.0, 1), Error);
  for (double r : {0.1, 0.33, 0.5, 0.77}) {
    auto p = percentage_split(c, r, 3);
    EXPECT_LE(std::fabs(static_cast<double>(p.train.size()) - r * 10.0), 1.0);
    EXPECT_EQ(p.train.size() + p.test.size(), 10u);
  }
}

// ---------------------------------------------------------------------------
// Assembly

TEST(BuildCorpus, CountsAndDropsTaglessPapers) {
  std::vector<RawPaper> papers = {
      paper("a", {{"BERT", 2018}}, {{"Abstract", "We use BERT. Nothing else here."}}),
      paper("b", {}, {{"Abstract", "Untagged paper."}}),
      paper("c", {{"GCN", 2016}}, {{"Related Work", "GCN is old."}}),
      paper("a", {{"BERT", 2018}}, {{"Abstract", "Duplicate id."}}),
  };
  BuildStats st;
  Corpus c = build_corpus(papers, {}, &st);
  EXPECT_EQ(st.papers_read, 4u);
  EXPECT_EQ(st.papers_kept, 2u);
  EXPECT_EQ(st.papers_without_tags, 1u);
  EXPECT_EQ(st.papers_without_sections, 1u);
  EXPECT_EQ(st.duplicate_ids, 1u);
  EXPECT_EQ(st.sentences, 2u);
  EXPECT_EQ(st.spans, 1u);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.sentences[0].paper_year, 2018);
  EXPECT_EQ(c.sentences[0].category, Category::NLP);
  EXPECT_EQ(c.sentences[1].sentence_index, 1);
  EXPECT_EQ(c.tag_index.at("bert"), 2018);
  EXPECT_EQ(c.tag_index.at("gcn"), 2016);
}

TEST(BuildCorpus, NegativeSamplingIsSeeded) {
  std::vector<RawPaper> papers;
  for (int i = 0; i < 20; ++i)
    papers.push_back(paper("p" + std::to_string(i), {{"BERT", 2018}}, {{"Abstract", "BERT helps. Plain text. More text."}}));
  BuildOptions opt;
  opt.negative_keep_rate = 0.5;
  BuildStats a, b;
  Corpus ca = build_corpus(papers, opt, &a), cb = build_corpus(papers, opt, &b);
  EXPECT_EQ(ca.size(), cb.size());
  EXPECT_EQ(a.spans, 20u);
  EXPECT_GT(a.negatives_dropped, 0u);
  EXPECT_EQ(a.sentences + a.negatives_dropped, 60u);
}

TEST(BuildCorpus, EveryProducedSentenceIsWellFormed) {
  auto papers = oracle::read_papers(std::string(METHEX_FIXTURES) + "/annotated_papers.jsonl");
  Corpus c = build_corpus(papers);
  ASSERT_FALSE(c.empty());
  for (const auto& s : c.sentences) {
    ASSERT_EQ(s.tokens.size(), s.labels.size());
    ASSERT_TRUE(is_bio_valid(s.labels));
    for (const auto& t : s.tokens) ASSERT_FALSE(t.empty());
  }
}

TEST(RawPaperInput, RejectsBadRecords) {
  EXPECT_THROW(parse_raw_paper(std::string_view("{not json")), ParseError);
  EXPECT_THROW(parse_raw_paper(std::string_view(R"({"paper_id": "", "category": "CV"})")), ParseError);
  EXPECT_THROW(parse_raw_paper(std::string_view(R"({"paper_id": "x", "category": "ROBOTICS"})")), UnknownCategory);
  EXPECT_THROW(parse_raw_paper(std::string_view(
                   R"({"paper_id": "x", "category": "CV", "tags": [{"surface": " ", "first_year": 2000}]})")),
               ParseError);
  EXPECT_THROW(parse_raw_paper(std::string_view(
                   R"({"paper_id": "x", "category": "CV", "tags": [{"surface": "A", "first_year": 1900}]})")),
               ParseError);
  auto p = parse_raw_paper(std::string_view(R"({"paper_id": "x", "category": "CV"})"));
  EXPECT_TRUE(p.sections.empty());
  EXPECT_EQ(parse_raw_paper(to_json(p)).paper_id, "x");
}

// ---------------------------------------------------------------------------
// Dataset files

TEST(DatasetFile, RoundTrip) {
  std::vector<LabeledSentence> s(2);
  s[0].tokens = {"We", "use", "BERT"};
  s[0].labels = {L::O, L::O, L::B};
  s[0].category = Category::NLP;
  s[0].paper_year = 2018;
  s[0].paper_id = "a";
  s[1] = s[0];
  s[1].sentence_index = 1;
  std::stringstream ss;
  write_dataset(ss, s);
  auto back = read_dataset(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].tokens, s[0].tokens);
  EXPECT_EQ(back[0].labels, s[0].labels);
  EXPECT_EQ(back[1].sentence_index, 1);
  EXPECT_EQ(back[1].paper_year, 2018);
}

TEST(DatasetFile, ReportsLineNumbers) {
  std::stringstream bad("tok\tB\tNLP\t2018\ta\ntok\tQ\tNLP\t2018\ta\n");
  try {
    read_dataset(bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::stringstream orphan("tok\tI\tNLP\t2018\ta\n\n");
  EXPECT_THROW(read_dataset(orphan), ParseError);
  std::stringstream fine("tok\tB-NLP\tNLP\t2018\ta\n\n");
  EXPECT_EQ(read_dataset(fine).at(0).labels, (std::vector<L>{L::B}));
}
