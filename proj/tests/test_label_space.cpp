#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace methex;

namespace {

std::vector<CoarseLabel> random_bio(Rng& rng, std::size_t n) {
  std::vector<CoarseLabel> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto l = static_cast<CoarseLabel>(rng.below(3));
    if (l == CoarseLabel::I && (out.empty() || out.back() == CoarseLabel::O)) l = CoarseLabel::B;
    out.push_back(l);
  }
  return out;
}

}  // namespace

TEST(LabelScheme, InventorySizesFollowTheCrossProduct) {
  EXPECT_EQ(LabelScheme::coarse().size(), 3u);
  EXPECT_EQ(LabelScheme::fine().size(), 3u * 7u);
  EXPECT_EQ(LabelScheme::fine_binary().size(), 3u * 2u);
  EXPECT_EQ(LabelScheme::fine(true).size(), 2u * 7u + 1u);
  EXPECT_EQ(LabelScheme::fine_binary(true).size(), 2u * 2u + 1u);
}

TEST(LabelScheme, IndexIsABijection) {
  for (const auto& s : {LabelScheme::coarse(), LabelScheme::fine(), LabelScheme::fine_binary(),
                        LabelScheme::fine(true), LabelScheme::fine_binary(true)}) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s.index(s.label(i)), i);
      names.insert(to_string(s.label(i)));
    }
    EXPECT_EQ(names.size(), s.size());
  }
}

TEST(LabelScheme, CategoriesAreOrderedAlphabetically) {
  auto s = LabelScheme::fine();
  EXPECT_EQ(to_string(s.label(0)), "B-AUDIO");
  EXPECT_EQ(to_string(s.label(2)), "O-AUDIO");
  EXPECT_EQ(to_string(s.label(20)), "O-SEQ");
}

TEST(LabelScheme, DescriptorRoundTrip) {
  for (const auto& s : {LabelScheme::coarse(), LabelScheme::fine(), LabelScheme::fine_binary(true)})
    EXPECT_EQ(LabelScheme::from_descriptor(s.descriptor()), s);
}

TEST(ExpandLabels, FineKeepsTheCategory) {
  std::vector<CoarseLabel> in = {CoarseLabel::B, CoarseLabel::I, CoarseLabel::O};
  auto out = expand_labels(in, Category::NLP, LabelScheme::fine());
  std::vector<FineLabel> want = {{CoarseLabel::B, Group::NLP}, {CoarseLabel::I, Group::NLP}, {CoarseLabel::O, Group::NLP}};
  EXPECT_EQ(out, want);
}

TEST(ExpandLabels, BinaryCoarsensNonGeneric) {
  std::vector<CoarseLabel> oo = {CoarseLabel::O, CoarseLabel::O};
  std::vector<FineLabel> want = {{CoarseLabel::O, Group::REST}, {CoarseLabel::O, Group::REST}};
  EXPECT_EQ(expand_labels(oo, Category::CV, LabelScheme::fine_binary()), want);
  std::vector<CoarseLabel> b = {CoarseLabel::B};
  EXPECT_EQ(expand_labels(b, Category::GEN, LabelScheme::fine_binary()),
            (std::vector<FineLabel>{{CoarseLabel::B, Group::GEN}}));
}

TEST(ExpandLabels, CollapsedOCarriesNoCategory) {
  std::vector<CoarseLabel> in = {CoarseLabel::B, CoarseLabel::O};
  auto out = expand_labels(in, Category::RL, LabelScheme::fine(true));
  EXPECT_EQ(out[0], (FineLabel{CoarseLabel::B, Group::RL}));
  EXPECT_EQ(out[1], (FineLabel{CoarseLabel::O, Group::None}));
}

TEST(ExpandLabels, CoarseSchemeIsRejected) {
  std::vector<CoarseLabel> in = {CoarseLabel::O};
  EXPECT_THROW(expand_labels(in, Category::CV, LabelScheme::coarse()), SchemeMismatch);
}

TEST(ProjectLabels, StripsTheCategory) {
  std::vector<FineLabel> in = {{CoarseLabel::B, Group::NLP}, {CoarseLabel::I, Group::GRAPH}};
  EXPECT_EQ(project_labels(in), (std::vector<CoarseLabel>{CoarseLabel::B, CoarseLabel::I}));
  EXPECT_TRUE(project_labels(std::vector<FineLabel>{}).empty());
}

TEST(ProjectLabels, RoundTripOverRandomSequences) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    auto s = random_bio(rng, 1 + rng.below(12));
    for (Category c : kCategories)
      for (const auto& scheme : {LabelScheme::fine(), LabelScheme::fine_binary(), LabelScheme::fine(true)}) {
        auto fine = expand_labels(s, c, scheme);
        ASSERT_EQ(project_labels(fine), s);
        ASSERT_TRUE(is_bio_valid(std::span<const FineLabel>(fine)));
      }
  }
}

TEST(CoarsenCategory, GenStaysEverythingElseMerges) {
  EXPECT_EQ(coarsen_category(Category::GEN), Group::GEN);
  EXPECT_EQ(coarsen_category(Category::CV), Group::REST);
  EXPECT_EQ(coarsen_category(Category::AUDIO), Group::REST);
  for (Category c : kCategories)
    if (c != Category::GEN) EXPECT_EQ(coarsen_category(c), Group::REST);
}

TEST(Labels, ParseAndPrint) {
  EXPECT_EQ(parse_fine_label("B-NLP"), (FineLabel{CoarseLabel::B, Group::NLP}));
  EXPECT_EQ(parse_fine_label("O"), (FineLabel{CoarseLabel::O, Group::None}));
  EXPECT_EQ(parse_fine_label("I-REST"), (FineLabel{CoarseLabel::I, Group::REST}));
  EXPECT_THROW(parse_fine_label("X"), ParseError);
  EXPECT_THROW(parse_category("VISION"), UnknownCategory);
}

TEST(BioValidity, CoarseRules) {
  using L = CoarseLabel;
  EXPECT_TRUE(is_bio_valid(std::vector<L>{L::B, L::I, L::O, L::B}));
  EXPECT_FALSE(is_bio_valid(std::vector<L>{L::I}));
  EXPECT_FALSE(is_bio_valid(std::vector<L>{L::O, L::I}));
  EXPECT_TRUE(is_bio_valid(std::vector<L>{}));
}

TEST(BioValidity, FineRequiresMatchingGroups) {
  std::vector<FineLabel> bad = {{CoarseLabel::B, Group::CV}, {CoarseLabel::I, Group::NLP}};
  std::vector<FineLabel> good = {{CoarseLabel::B, Group::CV}, {CoarseLabel::I, Group::CV}};
  EXPECT_FALSE(is_bio_valid(std::span<const FineLabel>(bad)));
  EXPECT_TRUE(is_bio_valid(std::span<const FineLabel>(good)));
}
