#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace methex;
using Sentences = std::vector<LabeledSentence>;

namespace {

DriftOptions small_drift() {
  DriftOptions o;
  o.papers_per_year = 8;
  o.sentences_per_paper = 3;
  o.entities_per_year = 6;
  o.first_year = 2015;
  o.cutoff = 2016;
  o.last_year = 2019;
  return o;
}

const DriftBenchmark& bench() {
  static const DriftBenchmark b = drift_benchmark(small_drift());
  return b;
}

ChronoConfig small_config() {
  ChronoConfig c;
  c.train.learning_rate = 0.01;
  c.train.batch_size = 8;
  c.train.max_epochs = 3;
  c.retrain_epochs = 2;
  return c;
}

Blueprint small_blueprint() {
  ModelSpec spec;
  spec.embedding_dim = 8;
  return make_blueprint(spec, bench().train.sentences, 5);
}

AnyTagger initial_model(Family f = Family::plain) {
  return train_family(f, bench().train.sentences, small_blueprint(), small_config().train);
}

// A plain model whose output bias makes every token O.
AnyTagger silent_model() {
  TaggerModel m = instantiate(small_blueprint(), LabelScheme::coarse(), 1);
  auto& layer = std::get<WindowLinearScorer>(m.scorer().variant()).layer();
  layer.b.value(0, LabelScheme::coarse().index(CoarseLabel::O)) = 100.0;
  return {Family::plain, std::move(m)};
}

LabeledSentence tagged(std::string id, int year) {
  LabeledSentence s;
  s.tokens = {"a"};
  s.labels = {CoarseLabel::O};
  s.paper_id = std::move(id);
  s.paper_year = year;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stream

TEST(YearlyStream, SlicesByYear) {
  EXPECT_EQ(bench().stream.years(), (std::vector<int>{2017, 2018, 2019}));
  for (int y : bench().stream.years())
    for (const auto& s : bench().stream.at(y).sentences) EXPECT_EQ(s.paper_year, y);
  EXPECT_THROW(bench().stream.at(2030), YearError);
}

TEST(YearlyStream, RejectsGapsAndSharedPapers) {
  std::map<int, Corpus> gap;
  gap[2017].sentences = {tagged("a", 2017)};
  gap[2019].sentences = {tagged("b", 2019)};
  try {
    YearlyStream s(gap);
    FAIL();
  } catch (const YearError& e) {
    EXPECT_EQ(e.year(), 2019);
  }
  std::map<int, Corpus> shared;
  shared[2017].sentences = {tagged("a", 2017)};
  shared[2018].sentences = {tagged("a", 2018)};
  EXPECT_THROW(YearlyStream{shared}, YearError);
}

// ---------------------------------------------------------------------------
// Silver labels

TEST(PredictYear, EmptySlice) { EXPECT_TRUE(predict_year(initial_model(), Corpus{}).empty()); }

TEST(PredictYear, ReplacesLabelsWithPredictions) {
  AnyTagger m = initial_model();
  const Corpus& slice = bench().stream.at(2017);
  auto silver = predict_year(m, slice);
  ASSERT_EQ(silver.size(), slice.size());
  for (std::size_t i = 0; i < silver.size(); ++i) {
    EXPECT_EQ(silver[i].tokens, slice.sentences[i].tokens);
    EXPECT_EQ(silver[i].paper_id, slice.sentences[i].paper_id);
    EXPECT_EQ(silver[i].labels, m.predict(slice.sentences[i]));
  }
}

TEST(PredictYear, SilentModelAndNegativeSampling) {
  AnyTagger m = silent_model();
  const Corpus& slice = bench().stream.at(2018);
  auto all = predict_year(m, slice);
  ASSERT_EQ(all.size(), slice.size());
  for (const auto& s : all) EXPECT_EQ(count_spans(s.labels), 0u);
  EXPECT_TRUE(predict_year(m, slice, 0.0).empty());
  auto half = predict_year(m, slice, 0.5, 0.0, 3);
  EXPECT_LT(half.size(), slice.size());
  EXPECT_EQ(predict_year(m, slice, 0.5, 0.0, 3).size(), half.size());
}

TEST(PredictYear, PathProbabilityThreshold) {
  AnyTagger m = initial_model();
  const Corpus& slice = bench().stream.at(2017);
  EXPECT_EQ(predict_year(m, slice, 1.0, 1e-300).size(), slice.size());
  EXPECT_TRUE(predict_year(m, slice, 1.0, 1.5).empty());
}

TEST(PredictYear, PerfectModelReproducesGold) {
  // Once trained to fit its own data, the separable toy set comes back unchanged.
  const Corpus& toy = separable_corpus(17, 40);
  auto bp = make_blueprint(ModelSpec{.embedding_dim = 8}, toy.sentences, 1);
  TrainConfig c;
  c.learning_rate = 0.02;
  c.batch_size = 4;
  c.max_epochs = 60;
  c.patience = 0;
  c.dev_fraction = 0.0;
  AnyTagger m = train_family(Family::plain, toy.sentences, bp, c);
  std::vector<std::vector<CoarseLabel>> pred;
  for (const auto& s : predict_year(m, toy)) pred.push_back(s.labels);
  ASSERT_DOUBLE_EQ(evaluate(pred, toy.sentences).overall.f_score, 1.0);
  for (std::size_t i = 0; i < pred.size(); ++i) EXPECT_EQ(pred[i], toy.sentences[i].labels);
}

// ---------------------------------------------------------------------------
// Updates

TEST(Retrain, ZeroEpochsChangesNothing) {
  AnyTagger m = initial_model();
  const std::string before = model_bytes(std::get<TaggerModel>(m.variant()));
  TrainConfig c = small_config().train;
  c.max_epochs = 0;
  m.retrain(bench().stream.at(2017).sentences, c);
  EXPECT_EQ(model_bytes(std::get<TaggerModel>(m.variant())), before);
}

TEST(Retrain, OwnPredictionsDoNotRaiseTheirLoss) {
  for (Family f : {Family::plain, Family::lfgb}) {
    AnyTagger m = initial_model(f);
    auto silver = predict_year(m, bench().stream.at(2017));
    const auto& before = f == Family::plain ? std::get<TaggerModel>(m.variant()) : std::get<LfgModel>(m.variant()).model;
    std::vector<const LabeledSentence*> ptrs;
    for (const auto& s : silver) ptrs.push_back(&s);
    const double loss_before = mean_loss(before, ptrs);
    TrainConfig c = small_config().train;
    c.dev_fraction = 0.0;
    m.retrain(silver, c);
    const auto& after = f == Family::plain ? std::get<TaggerModel>(m.variant()) : std::get<LfgModel>(m.variant()).model;
    EXPECT_LE(mean_loss(after, ptrs), loss_before + 1e-12);
  }
}

TEST(Retrain, DfgUpdatesOnlyGroupsWithData) {
  AnyTagger m = initial_model(Family::dfg);
  const auto& ens = std::get<DfgEnsemble>(m.variant());
  std::map<Group, std::string> before;
  for (const auto& [g, model] : ens.models) before[g] = model_bytes(model);
  Sentences cv;
  for (const auto& s : bench().stream.at(2017).sentences)
    if (s.category == Category::CV) cv.push_back(s);
  ASSERT_FALSE(cv.empty());
  m.retrain(cv, small_config().train);
  for (const auto& [g, model] : std::get<DfgEnsemble>(m.variant()).models) {
    if (g == Group::CV)
      EXPECT_NE(model_bytes(model), before[g]);
    else
      EXPECT_EQ(model_bytes(model), before[g]);
  }
}

// ---------------------------------------------------------------------------
// Protocol

TEST(Protocol, FrozenScoresComeFromTheInitialModel) {
  AnyTagger m = initial_model();
  auto run = run_protocol(m, 2016, bench().train, bench().stream, FeedbackMode::frozen, small_config());
  EXPECT_EQ(run.checkpoints.size(), 1u);
  auto series = run.latest_series();
  ASSERT_EQ(series.size(), 3u);
  for (const auto& [year, entry] : series) {
    EXPECT_EQ(entry.first, 2016);
    const auto& gold = bench().stream.at(year).sentences;
    std::vector<std::vector<CoarseLabel>> pred;
    for (const auto& s : gold) pred.push_back(m.predict(s));
    EXPECT_DOUBLE_EQ(entry.second.f_score, evaluate(pred, gold).overall.f_score);
  }
}

TEST(Protocol, NoStepReadsTheFuture) {
  for (FeedbackMode mode : {FeedbackMode::silver, FeedbackMode::gold}) {
    auto run = run_protocol(initial_model(), 2016, bench().train, bench().stream, mode, small_config());
    EXPECT_EQ(run.checkpoints.size(), 3u);  // 2016, 2017, 2018
    for (const auto& e : run.events) {
      switch (e.kind) {
        case ProtocolEvent::predict: EXPECT_LT(e.model_year, e.data_year); break;
        case ProtocolEvent::train: EXPECT_EQ(e.model_year, e.data_year); break;
        case ProtocolEvent::evaluate: EXPECT_GT(e.data_year, e.model_year); break;
      }
    }
    // Every checkpoint is evaluated on each later year only.
    for (const auto& [key, report] : run.reports) EXPECT_GT(key.second, key.first);
    EXPECT_EQ(run.reports.size(), 3u + 2u + 1u);
    EXPECT_EQ(run.silver_data.empty(), mode == FeedbackMode::gold);
  }
}

TEST(Protocol, LatestSeriesUsesTheNewestEarlierCheckpoint) {
  auto run = run_protocol(initial_model(), 2016, bench().train, bench().stream, FeedbackMode::gold, small_config());
  auto series = run.latest_series();
  EXPECT_EQ(series.at(2017).first, 2016);
  EXPECT_EQ(series.at(2018).first, 2017);
  EXPECT_EQ(series.at(2019).first, 2018);
  auto zs = run.latest_series(true);
  EXPECT_EQ(zs.at(2019).second.f_score, run.zero_shot.at({2018, 2019}).f_score);
}

TEST(Protocol, ManifestIsDeterministic) {
  auto bp = small_blueprint();
  auto a = run_protocol(bench().train, bench().stream, FeedbackMode::silver, Family::plain, bp, small_config());
  auto b = run_protocol(bench().train, bench().stream, FeedbackMode::silver, Family::plain, bp, small_config());
  EXPECT_EQ(manifest(a, small_config()).dump(), manifest(b, small_config()).dump());
  std::ostringstream ca, cb;
  write_series_csv(ca, a);
  write_series_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.initial_year, 2016);
}

TEST(Protocol, CsvHasOneRowPerReport) {
  auto run = run_protocol(initial_model(), 2016, bench().train, bench().stream, FeedbackMode::gold, small_config());
  std::ostringstream csv;
  write_series_csv(csv, run);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("mode,model_year,eval_year,latest,", 0), 0u);
  std::size_t rows = 0, latest = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find("gold,") == 0 && line.find(",1,") != std::string::npos) ++latest;
  }
  EXPECT_EQ(rows, run.reports.size());
  EXPECT_EQ(latest, 3u);
}

TEST(Protocol, CheckpointsCanBeWrittenToDisk) {
  oracle::TempDir dir("ckpt");
  ChronoConfig c = small_config();
  c.checkpoint_dir = dir.path();
  auto run = run_protocol(initial_model(), 2016, bench().train, bench().stream, FeedbackMode::gold, c);
  for (const auto& [year, name] : run.checkpoint_paths) EXPECT_TRUE(std::filesystem::exists(dir / name));
  EXPECT_EQ(run.checkpoint_paths.size(), 3u);
}

TEST(Protocol, FailuresNameTheYear) {
  ChronoConfig c = small_config();
  c.silver_negative_keep = 0.0;
  try {
    run_protocol(silent_model(), 2016, bench().train, bench().stream, FeedbackMode::silver, c);
    FAIL() << "expected YearError";
  } catch (const YearError& e) {
    EXPECT_EQ(e.year(), 2017);
  }
  EXPECT_THROW(run_protocol(silent_model(), 2017, bench().train, bench().stream, FeedbackMode::frozen, c), YearError);
  EXPECT_THROW(parse_feedback_mode("bronze"), Error);
}
