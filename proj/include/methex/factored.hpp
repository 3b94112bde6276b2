#pragma once

// Training and the five model families:
//
//   plain  one coarse {B, I, O} tagger over the whole corpus
//   dfg    one coarse tagger per category partition of the data (7 models);
//          inference routes each sentence by its document category
//   dfgb   as dfg with GEN vs. REST routing (2 models)
//   lfg    one tagger over <indicator, category> labels (21, or 15 with
//          collapsed O); predictions are projected back to B/I/O
//   lfgb   as lfg with GEN vs. REST label groups (6, or 4)

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "methex/corpus.hpp"
#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/optimizer.hpp"
#include "methex/parallel.hpp"
#include "methex/rng.hpp"
#include "methex/tagger.hpp"

namespace methex {

struct TrainConfig {
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;  // epochs without dev improvement before stopping; 0 disables
  std::uint64_t seed = 1;
  double weight_decay = 0.01;
  double dev_fraction = 0.1;
  double word_dropout = 0.0;  // chance a training token is read as <unk>
  std::size_t jobs = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double initial_dev_loss = 0.0;
  double best_dev_loss = 0.0;
  std::size_t best_epoch = 0;  // 0 means the starting parameters were never beaten
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
};

inline nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json j;
  j["train_size"] = log.train_size;
  j["dev_size"] = log.dev_size;
  j["initial_dev_loss"] = log.initial_dev_loss;
  j["best_dev_loss"] = log.best_dev_loss;
  j["best_epoch"] = log.best_epoch;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : log.epochs)
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}});
  return j;
}

inline double mean_loss(const TaggerModel& m, const std::vector<const LabeledSentence*>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const LabeledSentence* s : data) total += m.eval_loss(*s);
  return total / static_cast<double>(data.size());
}

// Minibatch AdamW on the model's loss with plateau stopping on a seeded dev
// split; returns the checkpoint with the lowest dev loss (possibly the
// starting parameters). Continues from the model's current parameters.
inline TaggerModel train(TaggerModel model, const std::vector<LabeledSentence>& data, const TrainConfig& config,
                         TrainLog* log = nullptr) {
  if (data.empty()) throw EmptyData("no training sentences");
  TrainLog local;
  TrainLog& lg = log ? *log : local;
  lg = TrainLog{};
  if (config.max_epochs == 0) {
    lg.train_size = data.size();
    return model;
  }

  model.extend_vocabulary(data);
  std::vector<const LabeledSentence*> all;
  for (const auto& s : data)
    if (!s.tokens.empty()) all.push_back(&s);
  if (all.empty()) throw EmptyData("every training sentence is empty");

  Rng split_rng(mix_seed(config.seed, 1));
  split_rng.shuffle(all);
  std::size_t n_dev = 0;
  if (config.dev_fraction > 0.0 && all.size() >= 2)
    n_dev = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.dev_fraction * all.size())), 1,
                                    all.size() - 1);
  std::vector<const LabeledSentence*> dev(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_dev));
  std::vector<const LabeledSentence*> train_set(all.begin() + static_cast<std::ptrdiff_t>(n_dev), all.end());
  // Without a dev split the plateau criterion watches the training loss.
  const auto& monitor = dev.empty() ? train_set : dev;
  lg.train_size = train_set.size();
  lg.dev_size = dev.size();

  AdamW& opt = model.optimizer();
  opt.set_config({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng order_rng(mix_seed(config.seed, 2));
  Rng dropout_rng(mix_seed(config.seed, 3));
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

  double best = mean_loss(model, monitor);
  lg.initial_dev_loss = lg.best_dev_loss = best;
  TaggerModel best_model = model;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(train_set);
    double epoch_loss = 0.0;
    auto params = model.parameters();
    for (std::size_t b = 0; b < train_set.size(); b += batch) {
      const std::size_t e = std::min(train_set.size(), b + batch);
      model.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        if (config.word_dropout > 0.0) {
          LabeledSentence noisy = *train_set[k];
          for (auto& t : noisy.tokens)
            if (dropout_rng.bernoulli(config.word_dropout)) t = kUnkToken;
          epoch_loss += model.accumulate_gradients(noisy);
        } else {
          epoch_loss += model.accumulate_gradients(*train_set[k]);
        }
      }
      model.transitions().mask_gradient();
      opt.step(params, 1.0 / static_cast<double>(e - b));
    }
    model.zero_grad();
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train_set.size()), mean_loss(model, monitor)};
    lg.epochs.push_back(rec);
    if (rec.dev_loss < best) {
      best = rec.dev_loss;
      best_model = model;
      lg.best_dev_loss = best;
      lg.best_epoch = epoch;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }
  return best_model;
}

// ---------------------------------------------------------------------------
// Model construction

// Architecture plus the vocabulary every fresh model starts from.
struct Blueprint {
  ModelSpec spec;
  EmbeddingTable vocabulary;
};

// Vocabulary = optional pretrained vectors, extended with every token of
// `sentences` that they do not cover (random rows).
inline EmbeddingTable build_vocabulary(const std::vector<LabeledSentence>& sentences, const ModelSpec& spec,
                                       std::uint64_t seed, const EmbeddingTable* pretrained = nullptr) {
  EmbeddingTable table = pretrained ? *pretrained : EmbeddingTable(spec.embedding_dim);
  table.set_lowercase(spec.lowercase);
  Rng rng(mix_seed(seed, 7));
  if (!pretrained) {
    table.randomize(rng, kInitScale);
  }
  std::vector<std::string> tokens;
  for (const auto& s : sentences) tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
  table.extend(tokens, rng, kInitScale);
  return table;
}

inline Blueprint make_blueprint(const ModelSpec& spec, const std::vector<LabeledSentence>& sentences,
                                std::uint64_t seed, const EmbeddingTable* pretrained = nullptr) {
  Blueprint bp{spec, EmbeddingTable(spec.embedding_dim)};
  if (spec.scorer != ScorerKind::precomputed) bp.vocabulary = build_vocabulary(sentences, spec, seed, pretrained);
  return bp;
}

inline TaggerModel instantiate(const Blueprint& bp, const LabelScheme& scheme, std::uint64_t seed) {
  return make_tagger(bp.spec, scheme, bp.vocabulary, seed);
}

// ---------------------------------------------------------------------------
// Families

enum class Family : std::uint8_t { plain, dfg, dfgb, lfg, lfgb };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::plain: return "plain";
    case Family::dfg: return "dfg";
    case Family::dfgb: return "dfgb";
    case Family::lfg: return "lfg";
    case Family::lfgb: return "lfgb";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : {Family::plain, Family::dfg, Family::dfgb, Family::lfg, Family::lfgb})
    if (to_string(f) == s) return f;
  throw ParseError("unknown model family '" + std::string(s) + "'");
}

// Splits sentences by routing group. Every group of the routing is present,
// possibly empty; the parts are disjoint and together hold every sentence.
inline std::map<Group, std::vector<LabeledSentence>> partition_by_group(const std::vector<LabeledSentence>& data,
                                                                        Routing routing) {
  std::map<Group, std::vector<LabeledSentence>> parts;
  for (Group g : routing_groups(routing)) parts[g];
  for (const auto& s : data) parts[route(s.category, routing)].push_back(s);
  return parts;
}

struct DfgEnsemble {
  Routing routing = Routing::fine7;
  std::map<Group, TaggerModel> models;
  std::set<Group> fallbacks;  // groups without training data; served by the GEN model
  std::map<Group, TrainLog> logs;

  const TaggerModel& model_for(Group g) const {
    if (fallbacks.count(g)) g = Group::GEN;
    auto it = models.find(g);
    if (it == models.end()) throw UnknownCategory("no model for group '" + std::string(to_string(g)) + "'");
    return it->second;
  }
};

struct LfgModel {
  TaggerModel model;
  TrainLog log;
};

inline DfgEnsemble train_dfg(const std::vector<LabeledSentence>& data, Routing routing, const Blueprint& bp,
                             const TrainConfig& config) {
  if (data.empty()) throw EmptyData("no training sentences");
  auto parts = partition_by_group(data, routing);
  DfgEnsemble ens;
  ens.routing = routing;
  std::vector<Group> groups;
  for (auto& [g, part] : parts) {
    if (part.empty())
      ens.fallbacks.insert(g);
    else
      groups.push_back(g);
  }
  if (!ens.fallbacks.empty() && parts[Group::GEN].empty())
    throw EmptyPartition("GEN partition is empty, so empty partitions have no fallback model");

  std::vector<TaggerModel> trained(groups.size());
  std::vector<TrainLog> logs(groups.size());
  parallel_for(groups.size(), config.jobs, [&](std::size_t k) {
    TrainConfig sub = config;
    sub.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(groups[k]));
    sub.jobs = 1;
    TaggerModel init = instantiate(bp, LabelScheme::coarse(), sub.seed);
    trained[k] = train(std::move(init), parts[groups[k]], sub, &logs[k]);
  });
  for (std::size_t k = 0; k < groups.size(); ++k) {
    ens.models.emplace(groups[k], std::move(trained[k]));
    ens.logs.emplace(groups[k], std::move(logs[k]));
  }
  return ens;
}

inline std::vector<CoarseLabel> predict_dfg(const DfgEnsemble& ens, const SentenceInput& in, Category category) {
  if (in.size() == 0) return {};
  return ens.model_for(route(category, ens.routing)).predict(in);
}

inline std::vector<CoarseLabel> predict_dfg(const DfgEnsemble& ens, const SentenceInput& in,
                                            std::string_view category) {
  return predict_dfg(ens, in, parse_category(category));
}

inline LabelScheme lfg_scheme(Routing granularity, bool collapse_o) {
  return granularity == Routing::fine7 ? LabelScheme::fine(collapse_o) : LabelScheme::fine_binary(collapse_o);
}

inline LfgModel train_lfg(const std::vector<LabeledSentence>& data, Routing granularity, const Blueprint& bp,
                          const TrainConfig& config, bool collapse_o = false) {
  if (data.empty()) throw EmptyData("no training sentences");
  LfgModel m;
  m.model = train(instantiate(bp, lfg_scheme(granularity, collapse_o), config.seed), data, config, &m.log);
  return m;
}

// Decodes fine labels and strips their categories; no category input needed.
inline std::vector<CoarseLabel> predict_lfg(const LfgModel& m, const SentenceInput& in) {
  if (in.size() == 0) return {};
  return m.model.predict(in);
}

// ---------------------------------------------------------------------------
// Any family behind one interface, as used by the chronological loop and CLI.

class AnyTagger {
 public:
  AnyTagger() = default;
  AnyTagger(Family family, TaggerModel m) : family_(family), impl_(std::move(m)) {}
  AnyTagger(Family family, DfgEnsemble e) : family_(family), impl_(std::move(e)) {}
  AnyTagger(Family family, LfgModel m) : family_(family), impl_(std::move(m)) {}

  Family family() const { return family_; }
  const std::variant<TaggerModel, DfgEnsemble, LfgModel>& variant() const { return impl_; }

  std::vector<CoarseLabel> predict(const LabeledSentence& s) const {
    const SentenceInput in = input_of(s);
    if (auto* m = std::get_if<TaggerModel>(&impl_)) return in.size() ? m->predict(in) : std::vector<CoarseLabel>{};
    if (auto* e = std::get_if<DfgEnsemble>(&impl_)) return predict_dfg(*e, in, s.category);
    return predict_lfg(std::get<LfgModel>(impl_), in);
  }

  // Path log-probability of the prediction (CRF decoders; 0 otherwise).
  double prediction_log_prob(const LabeledSentence& s) const {
    if (s.tokens.empty()) return 0.0;
    const SentenceInput in = input_of(s);
    if (auto* m = std::get_if<TaggerModel>(&impl_)) return m->decode(in).log_prob;
    if (auto* e = std::get_if<DfgEnsemble>(&impl_))
      return e->model_for(route(s.category, e->routing)).decode(in).log_prob;
    return std::get<LfgModel>(impl_).model.decode(in).log_prob;
  }

  void attach(const std::shared_ptr<const PrecomputedVectors>& v) {
    std::visit(
        [&](auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, TaggerModel>) x.attach(v);
          if constexpr (std::is_same_v<T, LfgModel>) x.model.attach(v);
          if constexpr (std::is_same_v<T, DfgEnsemble>)
            for (auto& [g, m] : x.models) m.attach(v);
        },
        impl_);
  }

  // Incremental update from the current parameters. DFG sub-models see their
  // own partition; a partition without data leaves its model unchanged.
  void retrain(const std::vector<LabeledSentence>& data, const TrainConfig& config) {
    if (data.empty()) throw EmptyData("no retraining sentences");
    if (auto* m = std::get_if<TaggerModel>(&impl_)) {
      *m = train(std::move(*m), data, config);
    } else if (auto* l = std::get_if<LfgModel>(&impl_)) {
      l->model = train(std::move(l->model), data, config, &l->log);
    } else {
      auto& e = std::get<DfgEnsemble>(impl_);
      auto parts = partition_by_group(data, e.routing);
      std::vector<Group> groups;
      for (auto& [g, m] : e.models)
        if (!parts[g].empty()) groups.push_back(g);
      // Data routed to a fallback group trains the model that serves it.
      for (Group g : e.fallbacks) {
        auto& gen = parts[Group::GEN];
        gen.insert(gen.end(), parts[g].begin(), parts[g].end());
        if (!parts[g].empty() && std::find(groups.begin(), groups.end(), Group::GEN) == groups.end())
          groups.push_back(Group::GEN);
      }
      std::sort(groups.begin(), groups.end());
      parallel_for(groups.size(), config.jobs, [&](std::size_t k) {
        TrainConfig sub = config;
        sub.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(groups[k]));
        sub.jobs = 1;
        TaggerModel& m = e.models.at(groups[k]);
        m = train(std::move(m), parts[groups[k]], sub, &e.logs[groups[k]]);
      });
    }
  }

 private:
  Family family_ = Family::plain;
  std::variant<TaggerModel, DfgEnsemble, LfgModel> impl_;
};

inline AnyTagger train_family(Family family, const std::vector<LabeledSentence>& data, const Blueprint& bp,
                              const TrainConfig& config, bool collapse_o = false, TrainLog* log = nullptr) {
  switch (family) {
    case Family::plain: {
      TrainLog local;
      auto m = train(instantiate(bp, LabelScheme::coarse(), config.seed), data, config, log ? log : &local);
      return {family, std::move(m)};
    }
    case Family::dfg: return {family, train_dfg(data, Routing::fine7, bp, config)};
    case Family::dfgb: return {family, train_dfg(data, Routing::binary, bp, config)};
    case Family::lfg: {
      auto m = train_lfg(data, Routing::fine7, bp, config, collapse_o);
      if (log) *log = m.log;
      return {family, std::move(m)};
    }
    case Family::lfgb: {
      auto m = train_lfg(data, Routing::binary, bp, config, collapse_o);
      if (log) *log = m.log;
      return {family, std::move(m)};
    }
  }
  throw Error("unreachable");
}

// ---------------------------------------------------------------------------
// Persistence: plain/LFG models are single files; a DFG ensemble is a
// directory holding manifest.json and one model file per trained group.

inline void save_tagger(const std::filesystem::path& path, const AnyTagger& t) {
  if (auto* e = std::get_if<DfgEnsemble>(&t.variant())) {
    std::filesystem::create_directories(path);
    nlohmann::json manifest;
    manifest["family"] = std::string(to_string(t.family()));
    manifest["routing"] = std::string(to_string(e->routing));
    manifest["models"] = nlohmann::json::object();
    for (const auto& [g, m] : e->models) {
      const std::string file = std::string(to_string(g)) + ".model";
      save_model(path / file, m);
      manifest["models"][std::string(to_string(g))] = file;
    }
    manifest["fallbacks"] = nlohmann::json::array();
    for (Group g : e->fallbacks) manifest["fallbacks"].push_back(std::string(to_string(g)));
    std::ofstream out(path / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("cannot write ensemble manifest in '" + path.string() + "'");
    return;
  }
  if (auto* m = std::get_if<TaggerModel>(&t.variant())) return save_model(path, *m);
  save_model(path, std::get<LfgModel>(t.variant()).model);
}

inline AnyTagger load_tagger(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    std::ifstream in(path / "manifest.json");
    if (!in) throw IoError("ensemble directory '" + path.string() + "' has no manifest.json");
    nlohmann::json manifest;
    try {
      in >> manifest;
      DfgEnsemble e;
      e.routing = manifest.at("routing").get<std::string>() == "binary" ? Routing::binary : Routing::fine7;
      for (auto& [group, file] : manifest.at("models").items())
        e.models.emplace(parse_group(group), load_model(path / file.get<std::string>()));
      for (const auto& g : manifest.at("fallbacks")) e.fallbacks.insert(parse_group(g.get<std::string>()));
      for (Group g : routing_groups(e.routing))
        if (!e.models.count(g) && !e.fallbacks.count(g))
          throw ParseError("ensemble manifest does not cover group " + std::string(to_string(g)));
      return {parse_family(manifest.at("family").get<std::string>()), std::move(e)};
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("bad ensemble manifest: " + std::string(ex.what()));
    }
  }
  TaggerModel m = load_model(path);
  switch (m.scheme().kind()) {
    case SchemeKind::coarse: return {Family::plain, std::move(m)};
    case SchemeKind::fine: return {Family::lfg, LfgModel{std::move(m), {}}};
    case SchemeKind::fine_binary: return {Family::lfgb, LfgModel{std::move(m), {}}};
  }
  throw ParseError("unknown scheme");
}

}  // namespace methex
