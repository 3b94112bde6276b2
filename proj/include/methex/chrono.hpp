#pragma once

// Chronological feedback protocol: a model trained on papers up to year t
// tags year t+1, is optionally retrained on those predictions (silver) or on
// the year's true labels (gold), and is scored on every later year.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "methex/corpus.hpp"
#include "methex/error.hpp"
#include "methex/evaluator.hpp"
#include "methex/factored.hpp"
#include "methex/rng.hpp"

namespace methex {

// Year-keyed corpus slices over a contiguous range, disjoint by paper.
class YearlyStream {
 public:
  YearlyStream() = default;

  explicit YearlyStream(std::map<int, Corpus> slices) : slices_(std::move(slices)) { validate(); }

  // Slices a corpus by paper year.
  static YearlyStream from_corpus(const Corpus& corpus) { return YearlyStream(by_year(corpus)); }

  const std::map<int, Corpus>& slices() const { return slices_; }
  const Corpus& at(int year) const {
    auto it = slices_.find(year);
    if (it == slices_.end()) throw YearError(year, "no slice for this year");
    return it->second;
  }
  bool empty() const { return slices_.empty(); }
  int first_year() const { return slices_.begin()->first; }
  int last_year() const { return slices_.rbegin()->first; }
  std::vector<int> years() const {
    std::vector<int> out;
    for (const auto& [y, c] : slices_) out.push_back(y);
    return out;
  }

 private:
  void validate() const {
    std::map<std::string, int> owner;
    int prev = 0;
    bool first = true;
    for (const auto& [year, corpus] : slices_) {
      if (!first && year != prev + 1)
        throw YearError(year, "stream years must be contiguous (previous was " + std::to_string(prev) + ")");
      first = false;
      prev = year;
      for (const auto& s : corpus.sentences) {
        auto [it, inserted] = owner.emplace(s.paper_id, year);
        if (!inserted && it->second != year)
          throw YearError(year, "paper '" + s.paper_id + "' also appears in " + std::to_string(it->second));
      }
    }
  }

  std::map<int, Corpus> slices_;
};

enum class FeedbackMode { frozen, silver, gold };

inline std::string_view to_string(FeedbackMode m) {
  switch (m) {
    case FeedbackMode::frozen: return "frozen";
    case FeedbackMode::silver: return "silver";
    case FeedbackMode::gold: return "gold";
  }
  return "?";
}

inline FeedbackMode parse_feedback_mode(std::string_view s) {
  for (FeedbackMode m : {FeedbackMode::frozen, FeedbackMode::silver, FeedbackMode::gold})
    if (to_string(m) == s) return m;
  throw Error("unknown feedback mode '" + std::string(s) + "' (expected frozen, silver or gold)");
}

struct ChronoConfig {
  TrainConfig train;              // optimizer settings for every update
  std::size_t retrain_epochs = 5;
  // Held-out share for checkpoint selection during updates. Silver labels
  // agree with the model that produced them, so a silver dev split favors the
  // unchanged model; by default updates monitor their own training loss.
  double retrain_dev_fraction = 0.0;
  bool mix_gold = false;          // replay the initial gold corpus with each update
  double min_path_prob = 0.0;     // silver sentences below this Viterbi path probability are dropped
  double silver_negative_keep = 1.0;  // keep rate for silver sentences with no predicted span
  std::optional<int> zero_shot_cutoff;  // defaults to the initial model year
  std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory only
};

inline nlohmann::json to_json(const ChronoConfig& c) {
  nlohmann::json j;
  j["learning_rate"] = c.train.learning_rate;
  j["batch_size"] = c.train.batch_size;
  j["max_epochs"] = c.train.max_epochs;
  j["patience"] = c.train.patience;
  j["seed"] = c.train.seed;
  j["weight_decay"] = c.train.weight_decay;
  j["dev_fraction"] = c.train.dev_fraction;
  j["retrain_epochs"] = c.retrain_epochs;
  j["retrain_dev_fraction"] = c.retrain_dev_fraction;
  j["word_dropout"] = c.train.word_dropout;
  j["mix_gold"] = c.mix_gold;
  j["min_path_prob"] = c.min_path_prob;
  j["silver_negative_keep"] = c.silver_negative_keep;
  j["zero_shot_cutoff"] = c.zero_shot_cutoff ? nlohmann::json(*c.zero_shot_cutoff) : nlohmann::json(nullptr);
  return j;
}

// Replaces gold labels with the model's predictions. Sentences with no
// predicted span are kept with probability `negative_keep`; sentences whose
// decoded path probability is below `min_path_prob` are dropped.
inline std::vector<LabeledSentence> predict_year(const AnyTagger& model, const Corpus& slice, double negative_keep = 1.0,
                                                 double min_path_prob = 0.0, std::uint64_t seed = 0) {
  Rng rng(seed);
  std::vector<LabeledSentence> out;
  out.reserve(slice.sentences.size());
  for (const auto& s : slice.sentences) {
    LabeledSentence silver = s;
    silver.labels = model.predict(s);
    if (min_path_prob > 0.0 && std::exp(model.prediction_log_prob(s)) < min_path_prob) continue;
    if (count_spans(silver.labels) == 0 && negative_keep < 1.0 && !rng.bernoulli(negative_keep)) continue;
    out.push_back(std::move(silver));
  }
  return out;
}

// One entry per protocol step, in execution order.
struct ProtocolEvent {
  enum Kind { predict, train, evaluate } kind;
  int data_year;   // year whose data the step reads
  int model_year;  // checkpoint the step uses or produces
};

struct FeedbackRun {
  FeedbackMode mode = FeedbackMode::frozen;
  int initial_year = 0;
  int zero_shot_cutoff = 0;
  std::map<int, AnyTagger> checkpoints;
  std::map<int, std::string> checkpoint_paths;
  std::map<std::pair<int, int>, EvalReport> reports;  // (model year, eval year)
  std::map<std::pair<int, int>, PRF> zero_shot;
  std::map<int, std::vector<LabeledSentence>> silver_data;
  std::map<int, TrainLog> train_logs;
  std::vector<ProtocolEvent> events;

  // Score on each eval year from the newest checkpoint trained before it.
  std::map<int, std::pair<int, PRF>> latest_series(bool zero_shot_subset = false) const {
    std::map<int, std::pair<int, PRF>> out;
    for (const auto& [key, report] : reports) {
      auto [model_year, eval_year] = key;
      auto it = out.find(eval_year);
      if (it != out.end() && it->second.first > model_year) continue;
      out[eval_year] = {model_year, zero_shot_subset ? zero_shot.at(key) : report.overall};
    }
    return out;
  }
};

namespace detail {

inline void evaluate_checkpoint(FeedbackRun& run, const AnyTagger& model, int model_year, const YearlyStream& stream,
                                const std::map<std::string, int>& tags, std::size_t jobs) {
  std::vector<int> years;
  for (int y : stream.years())
    if (y > model_year) years.push_back(y);
  std::vector<EvalReport> reports(years.size());
  std::vector<PRF> zs(years.size());
  parallel_for(years.size(), jobs, [&](std::size_t k) {
    const auto& gold = stream.at(years[k]).sentences;
    std::vector<std::vector<CoarseLabel>> pred;
    pred.reserve(gold.size());
    for (const auto& s : gold) pred.push_back(model.predict(s));
    reports[k] = evaluate(pred, gold);
    zs[k] = zero_shot_prf(collect_spans(pred, gold), tags, run.zero_shot_cutoff);
  });
  for (std::size_t k = 0; k < years.size(); ++k) {
    run.events.push_back({ProtocolEvent::evaluate, years[k], model_year});
    run.reports[{model_year, years[k]}] = reports[k];
    run.zero_shot[{model_year, years[k]}] = zs[k];
  }
}

inline void keep_checkpoint(FeedbackRun& run, const AnyTagger& model, int year, const ChronoConfig& config) {
  run.checkpoints.emplace(year, model);
  if (config.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(config.checkpoint_dir);
  auto name = std::string(to_string(run.mode)) + "-" + std::to_string(year) + ".model";
  save_tagger(config.checkpoint_dir / name, model);
  run.checkpoint_paths[year] = name;
}

}  // namespace detail

// Runs the protocol from an already trained model for `initial_year`.
// `initial_gold` is only read when mix_gold replay is on.
inline FeedbackRun run_protocol(AnyTagger initial, int initial_year, const Corpus& initial_gold,
                                const YearlyStream& stream, FeedbackMode mode, const ChronoConfig& config) {
  if (stream.empty()) throw Error("empty yearly stream");
  if (stream.first_year() <= initial_year)
    throw YearError(stream.first_year(), "stream must start after the initial year " + std::to_string(initial_year));

  FeedbackRun run;
  run.mode = mode;
  run.initial_year = initial_year;
  run.zero_shot_cutoff = config.zero_shot_cutoff.value_or(initial_year);

  std::map<std::string, int> tags = initial_gold.tag_index;
  for (const auto& [y, c] : stream.slices())
    for (const auto& [k, v] : c.tag_index) {
      auto [it, inserted] = tags.emplace(k, v);
      if (!inserted) it->second = std::min(it->second, v);
    }

  AnyTagger current = std::move(initial);
  detail::keep_checkpoint(run, current, initial_year, config);
  detail::evaluate_checkpoint(run, current, initial_year, stream, tags, config.train.jobs);
  if (mode == FeedbackMode::frozen) return run;

  const auto years = stream.years();
  for (std::size_t i = 0; i + 1 < years.size(); ++i) {
    const int year = years[i];
    try {
      std::vector<LabeledSentence> data;
      if (mode == FeedbackMode::silver) {
        run.events.push_back({ProtocolEvent::predict, year, run.checkpoints.rbegin()->first});
        data = predict_year(current, stream.at(year), config.silver_negative_keep, config.min_path_prob,
                            mix_seed(config.train.seed, 500 + static_cast<std::uint64_t>(year)));
        run.silver_data[year] = data;
      } else {
        data = stream.at(year).sentences;
      }
      if (config.mix_gold) data.insert(data.end(), initial_gold.sentences.begin(), initial_gold.sentences.end());
      if (data.empty()) throw EmptyData("no retraining sentences");

      TrainConfig tc = config.train;
      tc.max_epochs = config.retrain_epochs;
      tc.dev_fraction = config.retrain_dev_fraction;
      tc.seed = mix_seed(config.train.seed, 1000 + static_cast<std::uint64_t>(year));
      run.events.push_back({ProtocolEvent::train, year, year});
      current.retrain(data, tc);
      if (auto* m = std::get_if<LfgModel>(&current.variant())) run.train_logs[year] = m->log;
    } catch (const YearError&) {
      throw;
    } catch (const Error& e) {
      throw YearError(year, e.what());
    }
    detail::keep_checkpoint(run, current, year, config);
    detail::evaluate_checkpoint(run, current, year, stream, tags, config.train.jobs);
  }
  return run;
}

// Trains the initial model on `train` and runs the protocol. The initial
// year is the latest paper year in `train`.
inline FeedbackRun run_protocol(const Corpus& train, const YearlyStream& stream, FeedbackMode mode, Family family,
                                const Blueprint& bp, const ChronoConfig& config) {
  if (train.empty()) throw EmptyData("empty initial training corpus");
  int initial_year = train.sentences.front().paper_year;
  for (const auto& s : train.sentences) initial_year = std::max(initial_year, s.paper_year);
  AnyTagger initial = train_family(family, train.sentences, bp, config.train);
  return run_protocol(std::move(initial), initial_year, train, stream, mode, config);
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json manifest(const FeedbackRun& run, const ChronoConfig& config) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(run.mode));
  j["initial_year"] = run.initial_year;
  j["zero_shot_cutoff"] = run.zero_shot_cutoff;
  j["config"] = to_json(config);
  j["checkpoints"] = nlohmann::json::array();
  for (const auto& [year, model] : run.checkpoints) {
    nlohmann::json c{{"year", year}, {"family", std::string(to_string(model.family()))}};
    auto p = run.checkpoint_paths.find(year);
    c["path"] = p == run.checkpoint_paths.end() ? nlohmann::json(nullptr) : nlohmann::json(p->second);
    j["checkpoints"].push_back(c);
  }
  j["silver_sizes"] = nlohmann::json::object();
  for (const auto& [year, data] : run.silver_data) j["silver_sizes"][std::to_string(year)] = data.size();
  j["reports"] = nlohmann::json::array();
  for (const auto& [key, report] : run.reports) {
    nlohmann::json r = to_json(report);
    r["model_year"] = key.first;
    r["eval_year"] = key.second;
    r["zero_shot"] = to_json(run.zero_shot.at(key));
    j["reports"].push_back(r);
  }
  return j;
}

// One row per (model year, eval year); `latest` marks the row a line plot of
// the eval-year series uses.
inline void write_series_csv(std::ostream& os, const FeedbackRun& run) {
  auto latest = run.latest_series();
  os << "mode,model_year,eval_year,latest,precision,recall,f_score,tp,predicted,gold,"
        "zero_shot_precision,zero_shot_recall,zero_shot_f_score\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& [key, report] : run.reports) {
    const PRF& m = report.overall;
    const PRF& z = run.zero_shot.at(key);
    const bool is_latest = latest.at(key.second).first == key.first;
    os << to_string(run.mode) << ',' << key.first << ',' << key.second << ',' << (is_latest ? 1 : 0) << ','
       << num(m.precision) << ',' << num(m.recall) << ',' << num(m.f_score) << ',' << m.true_positives << ','
       << m.predicted << ',' << m.gold << ',' << num(z.precision) << ',' << num(z.recall) << ',' << num(z.f_score)
       << '\n';
  }
}

}  // namespace methex
