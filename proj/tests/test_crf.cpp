#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace methex;
using Path = std::vector<std::size_t>;

namespace {

oracle::CrfInstance masked_instance(Rng& rng, std::size_t n, const LabelScheme& scheme) {
  oracle::CrfInstance c{Matrix(n, scheme.size()), TransitionMatrix(scheme.size(), bio_mask(scheme))};
  c.emissions.randomize(rng, 2.0);
  c.transitions.randomize(rng, 2.0);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Partition function

TEST(LogPartition, AllZeroScoresCountPaths) {
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t Y = 1; Y <= 4; ++Y) {
      TransitionMatrix t(Y);
      EXPECT_NEAR(log_partition(Matrix(n, Y), t), static_cast<double>(n) * std::log(static_cast<double>(Y)), 1e-12);
    }
}

TEST(LogPartition, SingleTokenIsLogSumExpOfEntryPlusExit) {
  TransitionMatrix t(2);
  t.scores()(t.start(), 0) = 0.5;
  t.scores()(1, t.stop()) = -1.0;
  Matrix e(1, 2);
  e(0, 0) = 1.0;
  e(0, 1) = 2.0;
  EXPECT_NEAR(log_partition(e, t), std::log(std::exp(1.5) + std::exp(1.0)), 1e-14);
}

TEST(LogPartition, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = oracle::random_instance(rng, 1 + rng.below(4), 1 + rng.below(4));
    EXPECT_LT(oracle::relative_error(log_partition(c.emissions, c.transitions), oracle::enumerate(c).log_z), 1e-10);
  }
}

TEST(LogPartition, MaskedMatchesBruteForceUnderBothPenalties) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = masked_instance(rng, 1 + rng.below(4), LabelScheme::coarse());
    EXPECT_LT(oracle::relative_error(log_partition(c.emissions, c.transitions), oracle::enumerate(c).log_z), 1e-10);
    EXPECT_LT(oracle::relative_error(log_partition(c.emissions, c.transitions, kDefaultMaskPenalty),
                                     oracle::enumerate(c, kDefaultMaskPenalty).log_z),
              1e-10);
  }
}

TEST(LogPartition, EmptySentence) { EXPECT_EQ(log_partition(Matrix(0, 3), TransitionMatrix(3)), 0.0); }

TEST(Marginals, MatchBruteForceAndSumToOne) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = trial % 2 ? oracle::random_instance(rng, 1 + rng.below(4), 1 + rng.below(4))
                       : masked_instance(rng, 1 + rng.below(4), LabelScheme::coarse());
    Matrix p = marginals(c.emissions, c.transitions);
    auto bf = oracle::enumerate(c);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double row = 0.0;
      for (std::size_t y = 0; y < p.cols(); ++y) {
        EXPECT_NEAR(p(i, y), bf.marginals(i, y), 1e-10);
        row += p(i, y);
      }
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Viterbi

TEST(Viterbi, MatchesBruteForce) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = trial % 2 ? oracle::random_instance(rng, 1 + rng.below(4), 1 + rng.below(4))
                       : masked_instance(rng, 1 + rng.below(4), LabelScheme::coarse());
    auto v = viterbi(c.emissions, c.transitions);
    auto bf = oracle::enumerate(c);
    EXPECT_EQ(v.labels, bf.best);
    EXPECT_NEAR(v.score, bf.best_score, 1e-10);
    EXPECT_TRUE(path_allowed(c.transitions.mask(), v.labels));
  }
}

TEST(Viterbi, TiesGoToTheLowestIndex) {
  TransitionMatrix t(3);
  EXPECT_EQ(viterbi(Matrix(4, 3), t).labels, Path(4, 0));
  Matrix e(2, 3);
  e(0, 1) = e(0, 2) = 1.0;
  e(1, 2) = 5.0;
  EXPECT_EQ(viterbi(e, t).labels, (Path{1, 2}));
}

TEST(Viterbi, NeverUsesAMaskedTransition) {
  // Emissions strongly favour O I, which the BIO mask forbids.
  auto scheme = LabelScheme::coarse();
  TransitionMatrix t(3, bio_mask(scheme));
  Matrix e(2, 3);
  e(0, 2) = 10.0;
  e(1, 1) = 10.0;
  auto v = viterbi(e, t);
  EXPECT_TRUE(path_allowed(t.mask(), v.labels));
  EXPECT_NE(v.labels, (Path{2, 1}));
}

TEST(Viterbi, NoValidPath) {
  TransitionMask m(2);
  m.set(m.start(), 0, false);
  m.set(m.start(), 1, false);
  TransitionMatrix t(2, m);
  EXPECT_THROW(viterbi(Matrix(3, 2), t), NoValidPath);
}

TEST(Viterbi, ShiftingARowChangesNothing) {
  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = masked_instance(rng, 1 + rng.below(6), LabelScheme::fine_binary());
    Matrix shifted = c.emissions;
    double total = 0.0;
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
      const double k = rng.uniform(-5, 5);
      total += k;
      for (std::size_t y = 0; y < shifted.cols(); ++y) shifted(i, y) += k;
    }
    EXPECT_EQ(viterbi(shifted, c.transitions).labels, viterbi(c.emissions, c.transitions).labels);
    EXPECT_NEAR(log_partition(shifted, c.transitions), log_partition(c.emissions, c.transitions) + total, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Negative log-likelihood

TEST(Nll, OnlyPathHasZeroLoss) {
  TransitionMatrix t(1);
  Matrix e(3, 1);
  e(1, 0) = 4.0;
  auto g = nll_and_gradients(e, t, Path{0, 0, 0});
  EXPECT_NEAR(g.loss, 0.0, 1e-14);
  for (double v : g.d_emissions.data()) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(Nll, UniformTwoByTwo) {
  TransitionMatrix t(2);
  auto g = nll_and_gradients(Matrix(2, 2), t, Path{0, 1});
  EXPECT_NEAR(g.loss, 2.0 * std::log(2.0), 1e-14);
  EXPECT_NEAR(g.d_emissions(0, 0), -0.5, 1e-14);
  EXPECT_NEAR(g.d_emissions(0, 1), 0.5, 1e-14);
  EXPECT_NEAR(g.d_transitions(0, 1), 0.25 - 1.0, 1e-14);
}

TEST(Nll, EqualsNegativeLogProbabilityByEnumeration) {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = masked_instance(rng, 1 + rng.below(4), LabelScheme::coarse());
    auto bf = oracle::enumerate(c, kDefaultMaskPenalty);
    Path gold = bf.best;
    auto g = nll_and_gradients(c.emissions, c.transitions, gold);
    EXPECT_NEAR(g.loss, bf.log_z - oracle::explicit_score(c, gold, kDefaultMaskPenalty), 1e-9);
  }
}

TEST(Nll, GradientsMatchFiniteDifferences) {
  Rng rng(27);
  for (int trial = 0; trial < 30; ++trial) {
    const auto scheme = trial % 2 ? LabelScheme::coarse() : LabelScheme::fine_binary();
    auto c = masked_instance(rng, 1 + rng.below(4), scheme);
    const Path gold = viterbi(c.emissions, c.transitions).labels;
    auto g = nll_and_gradients(c.emissions, c.transitions, gold);
    auto f = [&] { return nll_and_gradients(c.emissions, c.transitions, gold).loss; };
    for (std::size_t k = 0; k < c.emissions.size(); ++k) {
      double num = oracle::central_difference(&c.emissions.data()[k], f);
      EXPECT_LT(oracle::gradient_error(g.d_emissions.data()[k], num), 1e-4);
    }
    Matrix& t = c.transitions.scores();
    for (std::size_t k = 0; k < t.size(); ++k) {
      const std::size_t a = k / t.cols(), b = k % t.cols();
      if (!c.transitions.mask()(a, b)) {
        EXPECT_EQ(g.d_transitions.data()[k], 0.0);
        continue;
      }
      double num = oracle::central_difference(&t.data()[k], f);
      EXPECT_LT(oracle::gradient_error(g.d_transitions.data()[k], num), 1e-4);
    }
  }
}

TEST(Nll, EmissionGradientRowsSumToZero) {
  Rng rng(28);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = oracle::random_instance(rng, 1 + rng.below(5), 2 + rng.below(3));
    Path gold(c.emissions.rows());
    for (auto& y : gold) y = rng.below(c.emissions.cols());
    auto g = nll_and_gradients(c.emissions, c.transitions, gold);
    EXPECT_GE(g.loss, 0.0);
    for (std::size_t i = 0; i < g.d_emissions.rows(); ++i) {
      double s = 0.0;
      for (double v : g.d_emissions.row(i)) s += v;
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
  }
}

TEST(Nll, InvalidGold) {
  auto scheme = LabelScheme::coarse();
  TransitionMatrix t(3, bio_mask(scheme));
  EXPECT_THROW(nll_and_gradients(Matrix(2, 3), t, Path{2, 1}), InvalidGold);
  EXPECT_THROW(nll_and_gradients(Matrix(2, 3), t, Path{0}), InvalidGold);
  EXPECT_THROW(nll_and_gradients(Matrix(1, 3), t, Path{3}), InvalidGold);
}

TEST(TokenCrossEntropy, UniformRowsAndGradient) {
  auto g = token_cross_entropy(Matrix(2, 3), Path{0, 2});
  EXPECT_NEAR(g.loss, 2.0 * std::log(3.0), 1e-14);
  EXPECT_NEAR(g.d_emissions(1, 2), 1.0 / 3.0 - 1.0, 1e-14);
  EXPECT_NEAR(g.d_emissions(1, 0), 1.0 / 3.0, 1e-14);
}

// ---------------------------------------------------------------------------
// BIO mask and softmax decoding

TEST(BioMask, CoarseEntries) {
  auto scheme = LabelScheme::coarse();
  auto m = bio_mask(scheme);
  const std::size_t B = scheme.index(CoarseLabel::B), I = scheme.index(CoarseLabel::I), O = scheme.index(CoarseLabel::O);
  EXPECT_FALSE(m(O, I));
  EXPECT_FALSE(m(m.start(), I));
  EXPECT_TRUE(m(B, I));
  EXPECT_TRUE(m(I, I));
  EXPECT_TRUE(m(O, B));
  EXPECT_TRUE(m(I, m.stop()));
  EXPECT_TRUE(m(m.start(), O));
  EXPECT_FALSE(m(m.start(), m.stop()));
  EXPECT_FALSE(m(B, m.start()));
}

TEST(BioMask, FineForbidsSwitchingGroupsInsideASpan) {
  auto scheme = LabelScheme::fine();
  auto m = bio_mask(scheme);
  const auto idx = [&](CoarseLabel c, Group g) { return scheme.index(FineLabel{c, g}); };
  EXPECT_TRUE(m(idx(CoarseLabel::B, Group::CV), idx(CoarseLabel::I, Group::CV)));
  EXPECT_FALSE(m(idx(CoarseLabel::B, Group::CV), idx(CoarseLabel::I, Group::NLP)));
  EXPECT_FALSE(m(idx(CoarseLabel::O, Group::CV), idx(CoarseLabel::I, Group::CV)));
  EXPECT_TRUE(m(idx(CoarseLabel::O, Group::CV), idx(CoarseLabel::B, Group::NLP)));
}

TEST(SoftmaxDecode, RepairsLeadingInsideLabels) {
  auto scheme = LabelScheme::coarse();
  const std::size_t B = scheme.index(CoarseLabel::B), I = scheme.index(CoarseLabel::I), O = scheme.index(CoarseLabel::O);
  Matrix e(4, 3);
  for (auto [i, y] : std::vector<std::pair<std::size_t, std::size_t>>{{0, I}, {1, I}, {2, O}, {3, I}}) e(i, y) = 1.0;
  auto d = softmax_decode(e, scheme);
  EXPECT_EQ(d.labels, (Path{B, I, O, B}));
  EXPECT_EQ(d.repairs, 2u);
}

TEST(SoftmaxDecode, GroupSwitchIsRepaired) {
  auto scheme = LabelScheme::fine_binary();
  Path labels = {scheme.index(FineLabel{CoarseLabel::B, Group::GEN}), scheme.index(FineLabel{CoarseLabel::I, Group::REST})};
  EXPECT_EQ(repair_bio(labels, scheme), 1u);
  EXPECT_EQ(labels[1], scheme.index(FineLabel{CoarseLabel::B, Group::REST}));
}

TEST(SoftmaxDecode, ValidInputNeedsNoRepair) {
  auto scheme = LabelScheme::coarse();
  Path labels = {0, 1, 1, 2, 0};
  EXPECT_EQ(repair_bio(labels, scheme), 0u);
}

// ---------------------------------------------------------------------------
// Model files and long sentences

TEST(Serialization, RoundTripIsByteIdentical) {
  Rng rng(29);
  for (auto kind : {ScorerKind::window_linear, ScorerKind::bilstm}) {
    ModelSpec spec;
    spec.scorer = kind;
    spec.embedding_dim = 4;
    spec.hidden = 3;
    EmbeddingTable table(4);
    table.extend(std::vector<std::string>{"a", "b", "c"}, rng);
    TaggerModel m = make_tagger(spec, LabelScheme::fine(), table, 7);
    const std::string bytes = model_bytes(m);
    std::istringstream in(bytes);
    TaggerModel back = load_model(in);
    EXPECT_EQ(model_bytes(back), bytes);
    std::vector<std::string> toks = {"a", "c", "zz", "b"};
    EXPECT_EQ(back.predict_fine({toks}), m.predict_fine({toks}));
  }
}

TEST(Serialization, GarbageIsRejected) {
  std::istringstream junk("not a model");
  EXPECT_THROW(load_model(junk), ParseError);
  TaggerModel m = make_tagger(ModelSpec{.embedding_dim = 2}, LabelScheme::coarse(), EmbeddingTable(2), 1);
  std::string bytes = model_bytes(m);
  std::istringstream cut(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_model(cut), ParseError);
}

TEST(Chunking, BoundsCoverTheSentence) {
  using Bounds = std::vector<std::pair<std::size_t, std::size_t>>;
  EXPECT_EQ(chunk_bounds(10, 4), (Bounds{{0, 4}, {4, 8}, {8, 10}}));
  EXPECT_EQ(chunk_bounds(3, 4), (Bounds{{0, 3}}));
  EXPECT_EQ(chunk_bounds(5, 0), (Bounds{{0, 5}}));
  using L = CoarseLabel;
  std::vector<L> labels = {L::O, L::O, L::B, L::I, L::I, L::O, L::O, L::O};
  EXPECT_EQ(chunk_bounds(8, 4, &labels), (Bounds{{0, 2}, {2, 6}, {6, 8}}));
  std::vector<L> run = {L::B, L::I, L::I, L::I, L::I, L::I};
  EXPECT_EQ(chunk_bounds(6, 3, &run), (Bounds{{0, 3}, {3, 6}}));
}

TEST(Chunking, LongSentencesDecodeAndTrain) {
  Rng rng(30);
  EmbeddingTable table(3);
  table.extend(std::vector<std::string>{"a", "b"}, rng);
  ModelSpec spec{.embedding_dim = 3, .max_length = 4};
  TaggerModel m = make_tagger(spec, LabelScheme::coarse(), table, 2);
  LabeledSentence s;
  s.tokens.assign(11, "a");
  s.labels.assign(11, CoarseLabel::I);
  s.labels[0] = CoarseLabel::B;
  s.category = Category::CV;
  auto labels = m.predict(input_of(s));
  EXPECT_EQ(labels.size(), 11u);
  EXPECT_TRUE(is_bio_valid(labels));
  EXPECT_TRUE(std::isfinite(m.accumulate_gradients(s)));
}
