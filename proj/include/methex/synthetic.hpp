#pragma once

// Seeded synthetic corpora: a token-separable toy set and a yearly stream
// whose method names and phrasing drift over time.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "methex/chrono.hpp"
#include "methex/corpus.hpp"
#include "methex/label_space.hpp"
#include "methex/rng.hpp"

namespace methex {

namespace detail {

// Lowercase pseudo-words built from consonant-vowel syllables.
inline std::string pseudo_word(Rng& rng, std::size_t syllables) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "kl", "st"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "eo"};
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += onsets[rng.below(std::size(onsets))];
    w += vowels[rng.below(std::size(vowels))];
  }
  return w;
}

inline void append_words(std::vector<std::string>& tokens, std::vector<CoarseLabel>& labels, std::string_view text) {
  for (auto& w : detail::split_ws(text)) {
    tokens.emplace_back(w);
    labels.push_back(CoarseLabel::O);
  }
}

inline void append_entity(std::vector<std::string>& tokens, std::vector<CoarseLabel>& labels,
                          const std::vector<std::string>& name) {
  for (std::size_t k = 0; k < name.size(); ++k) {
    tokens.push_back(name[k]);
    labels.push_back(k == 0 ? CoarseLabel::B : CoarseLabel::I);
  }
}

}  // namespace detail

// 200 sentences whose labels are a function of token identity alone: method
// names (one or two tokens) never occur outside a span and filler words never
// inside one.
inline Corpus separable_corpus(std::uint64_t seed = 17, std::size_t n_sentences = 200) {
  Rng rng(seed);
  static const char* filler[] = {"we",      "use",     "the",    "model",  "data",     "train",   "results", "show",
                                 "improved", "accuracy", "on",     "with",   "for",      "our",     "method",  "task",
                                 "large",   "small",   "and",    "in",     "baseline", "compare", "strong",  "features"};
  std::set<std::string> used(std::begin(filler), std::end(filler));
  std::vector<std::vector<std::string>> names;
  while (names.size() < 24) {
    std::vector<std::string> name{detail::pseudo_word(rng, 2)};
    if (rng.bernoulli(0.4)) name.push_back(detail::pseudo_word(rng, 1) + "x");
    bool fresh = true;
    for (const auto& t : name) fresh = fresh && !used.count(t);
    if (!fresh) continue;
    used.insert(name.begin(), name.end());
    names.push_back(std::move(name));
  }

  Corpus c;
  for (const auto& n : names) c.add_tag({join(n), 2015});
  for (std::size_t i = 0; i < n_sentences; ++i) {
    LabeledSentence s;
    const std::size_t len = 4 + rng.below(6);
    const std::size_t n_entities = rng.below(3);
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < n_entities; ++k) slots.push_back(rng.below(len));
    std::sort(slots.begin(), slots.end());
    slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
    for (std::size_t p = 0; p < len; ++p) {
      detail::append_words(s.tokens, s.labels, filler[rng.below(std::size(filler))]);
      if (std::binary_search(slots.begin(), slots.end(), p))
        detail::append_entity(s.tokens, s.labels, names[rng.below(names.size())]);
    }
    s.category = kCategories[i % kCategories.size()];
    s.paper_year = 2015;
    s.paper_id = "toy-" + std::to_string(i / 5);
    s.sentence_index = i % 5;
    c.sentences.push_back(std::move(s));
  }
  return c;
}

// Settings for learning the separable corpus: the defaults, except a
// learning rate of 1e-3 (the 5e-5 default is tuned for long real-data runs
// and barely moves a randomly initialized model in 200 epochs).
inline TrainConfig separable_train_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.max_epochs = 200;
  return c;
}

// ---------------------------------------------------------------------------
// Drift stream

struct DriftOptions {
  int first_year = 2014;
  int cutoff = 2017;     // last year of the initial training corpus
  int last_year = 2021;  // last stream year
  std::size_t entities_per_year = 26;
  std::size_t papers_per_year = 100;
  std::size_t sentences_per_paper = 6;
  std::size_t distractors_per_year = 8;  // new ordinary words entering the vocabulary each year
  double strong_when_new = 0.9;     // explicit phrasing for a method in its introduction year
  double strong_when_known = 0.15;  // explicit phrasing once a method is established
  double distractor_rate = 0.6;     // ambiguous sentences about an ordinary word instead
  double negative_rate = 0.15;      // sentences without any method
  double recency = 0.5;             // chance a mention picks a method introduced the year before
  double multi_token_rate = 0.3;
  double fashion = 0.4;             // share of explicit mentions using the year's fashionable phrasing
  std::uint64_t seed = 1;
};

struct DriftBenchmark {
  Corpus train;                 // papers up to the cutoff
  YearlyStream stream;          // one slice per later year
  std::vector<std::string> vocabulary;  // every token the generator can emit
  int cutoff = 0;
};

namespace detail {

struct Frame {
  const char* before;
  const char* after;
  int since;  // first year the phrasing occurs
};

// Phrasings that only ever surround a method name.
inline const std::vector<Frame>& strong_frames() {
  static const std::vector<Frame> frames = {
      {"we train", "on the benchmark .", 0},
      {"we apply", "to the raw data .", 0},
      {"results obtained with", "are listed in the table .", 0},
      {"our encoder is built on", "and a decoder .", 0},
      {"we fine-tune", "on each target task .", 2015},
      {"knowledge is distilled from", "into a student .", 2016},
      {"we prompt", "with a few examples .", 2017},
  };
  return frames;
}

// Phrasings shared by method names and ordinary words.
inline const std::vector<Frame>& ambiguous_frames() {
  static const std::vector<Frame> frames = {
      {"the", "approach is strong .", 0},
      {"we observe that", "improves the results .", 0},
      {"performance of", "is high .", 0},
      {"compared to", ", ours is faster .", 0},
  };
  return frames;
}

inline const std::vector<std::string>& distractors() {
  static const std::vector<std::string> words = {"proposed", "simple", "standard", "novel",   "baseline",
                                                 "larger",   "deeper", "sparse",   "hybrid",  "classic",
                                                 "modular",  "robust", "shallow",  "compact", "naive"};
  return words;
}

inline const std::vector<std::string>& negative_sentences() {
  static const std::vector<std::string> s = {
      "the dataset contains many labeled images .", "all experiments run on a single machine .",
      "we report the mean over five runs .",        "training takes about one day .",
      "the results are summarized below .",         "hyperparameters are tuned on the validation set ."};
  return s;
}

inline const std::vector<std::string>& name_suffixes() {
  static const std::vector<std::string> s = {"v2", "xl", "lite", "plus", "net"};
  return s;
}

struct DriftEntity {
  std::vector<std::string> name;
  int year;
  Category category;
};

}  // namespace detail

// Method names and ordinary words are introduced year by year and reused
// with a bias toward recent ones. A method is mostly written about with
// explicit phrasing in its first year and casually afterwards, in frames it
// shares with ordinary words. Each paper of year Y mentions at least one
// name introduced in Y, so its timestamp (latest first-appearance year) is
// Y. Explicit phrasings appear up to the cutoff and their popularity
// shifts from year to year.
inline DriftBenchmark drift_benchmark(const DriftOptions& opt) {
  if (opt.first_year > opt.cutoff || opt.cutoff >= opt.last_year) throw Error("drift years out of order");
  Rng rng(mix_seed(opt.seed, 0xd1f7));

  std::set<std::string> reserved;
  auto reserve_text = [&](std::string_view t) {
    for (auto& w : detail::split_ws(t)) reserved.insert(std::string(w));
  };
  for (const auto& f : detail::strong_frames()) reserve_text(std::string(f.before) + " " + f.after);
  for (const auto& f : detail::ambiguous_frames()) reserve_text(std::string(f.before) + " " + f.after);
  for (const auto& s : detail::negative_sentences()) reserve_text(s);
  reserved.insert(detail::distractors().begin(), detail::distractors().end());
  reserved.insert(detail::name_suffixes().begin(), detail::name_suffixes().end());

  auto fresh_word = [&](std::size_t syllables) {
    for (;;) {
      std::string w = detail::pseudo_word(rng, syllables);
      if (reserved.insert(w).second) return w;
    }
  };

  std::vector<detail::DriftEntity> entities;
  std::map<int, std::vector<std::size_t>> by_year;
  std::map<int, std::vector<std::string>> ordinary;  // distractor words by first year
  ordinary[opt.first_year] = detail::distractors();
  for (int y = opt.first_year; y <= opt.last_year; ++y) {
    for (std::size_t k = 0; k < opt.entities_per_year; ++k) {
      detail::DriftEntity e{{fresh_word(2 + rng.below(2))}, y, kCategories[rng.below(kCategories.size())]};
      if (rng.bernoulli(opt.multi_token_rate)) e.name.push_back(rng.pick(detail::name_suffixes()));
      by_year[y].push_back(entities.size());
      entities.push_back(std::move(e));
    }
    for (std::size_t k = 0; k < opt.distractors_per_year; ++k) ordinary[y].push_back(fresh_word(2 + rng.below(2)));
  }

  Corpus all;
  for (const auto& e : entities) all.add_tag({join(e.name), e.year});

  // Year of origin for a mention in `year`: usually the previous year's
  // methods, otherwise any year so far.
  auto origin = [&](int year) {
    if (year > opt.first_year && rng.bernoulli(opt.recency)) return year - 1;
    return opt.first_year + static_cast<int>(rng.below(static_cast<std::size_t>(year - opt.first_year + 1)));
  };
  auto frames_for = [&](int year) {
    std::vector<const detail::Frame*> out;
    for (const auto& f : detail::strong_frames())
      if (f.since <= year) out.push_back(&f);
    return out;
  };

  for (int y = opt.first_year; y <= opt.last_year; ++y) {
    const auto strong = frames_for(y);
    // One phrasing is in fashion each year, rotating through those known.
    const detail::Frame* fashionable = strong[static_cast<std::size_t>(y - opt.first_year) % strong.size()];
    // Categories rotate in a shuffled order, so every year of 7+ papers covers all of them.
    std::vector<Category> order(kCategories.begin(), kCategories.end());
    rng.shuffle(order);
    for (std::size_t p = 0; p < opt.papers_per_year; ++p) {
      const std::string id = "synth-" + std::to_string(y) + "-" + std::to_string(p);
      const Category cat = order[p % order.size()];
      for (std::size_t i = 0; i < opt.sentences_per_paper; ++i) {
        LabeledSentence s;
        s.category = cat;
        s.paper_year = y;
        s.paper_id = id;
        s.sentence_index = i;
        const bool introduce = i == 0;
        if (!introduce && rng.bernoulli(opt.negative_rate)) {
          detail::append_words(s.tokens, s.labels, rng.pick(detail::negative_sentences()));
        } else if (!introduce && rng.bernoulli(opt.distractor_rate)) {
          const auto& f = rng.pick(detail::ambiguous_frames());
          detail::append_words(s.tokens, s.labels, f.before);
          detail::append_words(s.tokens, s.labels, rng.pick(ordinary.at(origin(y))));
          detail::append_words(s.tokens, s.labels, f.after);
        } else {
          const auto& e = entities[rng.pick(by_year.at(introduce ? y : origin(y)))];
          const double p_strong = e.year == y ? opt.strong_when_new : opt.strong_when_known;
          if (rng.bernoulli(p_strong)) {
            const detail::Frame* f = rng.bernoulli(opt.fashion) ? fashionable : rng.pick(strong);
            detail::append_words(s.tokens, s.labels, f->before);
            detail::append_entity(s.tokens, s.labels, e.name);
            detail::append_words(s.tokens, s.labels, f->after);
          } else {
            const auto& f = rng.pick(detail::ambiguous_frames());
            detail::append_words(s.tokens, s.labels, f.before);
            detail::append_entity(s.tokens, s.labels, e.name);
            detail::append_words(s.tokens, s.labels, f.after);
          }
        }
        all.sentences.push_back(std::move(s));
      }
    }
  }

  DriftBenchmark b;
  b.cutoff = opt.cutoff;
  auto split = chronological_split(all, opt.cutoff);
  b.train = std::move(split.train);
  b.stream = YearlyStream::from_corpus(split.test);
  std::set<std::string> vocab;
  for (const auto& s : all.sentences) vocab.insert(s.tokens.begin(), s.tokens.end());
  for (const auto& e : entities) vocab.insert(e.name.begin(), e.name.end());
  for (const auto& [y, words] : ordinary) vocab.insert(words.begin(), words.end());
  b.vocabulary.assign(vocab.begin(), vocab.end());
  return b;
}

// No drift: the initial years' papers are dealt alternately into training
// and into the stream years, so every year follows the same distribution.
inline DriftBenchmark stationary_benchmark(DriftOptions opt) {
  DriftBenchmark full = drift_benchmark(opt);
  DriftBenchmark b;
  b.cutoff = opt.cutoff;
  b.vocabulary = full.vocabulary;
  std::map<int, Corpus> slices;
  const int span = opt.cutoff - opt.first_year + 1;
  for (const auto& s : full.train.sentences) {
    // Even-numbered papers stay in training; odd ones move to a stream year.
    const auto dash = s.paper_id.rfind('-');
    const int paper = std::stoi(s.paper_id.substr(dash + 1));
    if (paper % 2 == 0) {
      b.train.sentences.push_back(s);
      continue;
    }
    const int year = opt.cutoff + 1 + ((s.paper_year - opt.first_year) + paper / 2) % std::min(span, opt.last_year - opt.cutoff);
    LabeledSentence moved = s;
    moved.paper_year = year;
    slices[year].sentences.push_back(std::move(moved));
  }
  b.train.tag_index = full.train.tag_index;
  for (auto& [y, c] : slices) c.tag_index = full.train.tag_index;
  b.stream = YearlyStream(std::move(slices));
  return b;
}

// Model and protocol settings for the drift benchmark: a small window-linear
// CRF (16-dim embeddings), learning rate 0.01, batches of 8, at most 30
// initial epochs, 10% word dropout so <unk> learns what an unseen word in
// each context usually is, and the default five-epoch updates.
struct DriftFixture {
  ModelSpec spec;
  ChronoConfig chrono;
};

inline DriftFixture drift_fixture(std::uint64_t seed) {
  DriftFixture f;
  f.spec.embedding_dim = 16;
  f.chrono.train.learning_rate = 0.01;
  f.chrono.train.batch_size = 8;
  f.chrono.train.max_epochs = 30;
  f.chrono.train.word_dropout = 0.1;
  f.chrono.train.seed = seed;
  return f;
}

}  // namespace methex
