// Command-line front end: corpus building, splitting, training, prediction,
// evaluation, the chronological feedback loop and context-term export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "methex/methex.hpp"

namespace fs = std::filesystem;
using namespace methex;

namespace {

struct ModelOptions {
  std::string family = "plain";
  std::string decoder = "crf";
  std::string scorer = "window-linear";
  std::size_t embedding_dim = 100;
  std::size_t window = 1;
  std::size_t hidden = 64;
  bool freeze_embeddings = false;
  bool lowercase = false;
  bool no_bio_mask = false;
  std::size_t max_length = 256;
  bool collapse_o = false;
  std::string vectors;      // pretrained word vectors
  std::string precomputed;  // externally computed token vectors
};

struct TrainOptions {
  double lr = 5e-5;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  double weight_decay = 0.01;
  double dev_fraction = 0.1;
  double word_dropout = 0.0;
};

void add_model_options(CLI::App* app, ModelOptions& m) {
  app->add_option("--family", m.family, "plain, dfg, dfgb, lfg or lfgb")
      ->check(CLI::IsMember({"plain", "dfg", "dfgb", "lfg", "lfgb"}))
      ->capture_default_str();
  app->add_option("--decoder", m.decoder, "crf or softmax")->check(CLI::IsMember({"crf", "softmax"}))->capture_default_str();
  app->add_option("--scorer", m.scorer, "window-linear, bilstm or precomputed")
      ->check(CLI::IsMember({"window-linear", "bilstm", "precomputed"}))
      ->capture_default_str();
  app->add_option("--embedding-dim", m.embedding_dim, "word vector size when no vector file is given")->capture_default_str();
  app->add_option("--window", m.window, "window radius of the window-linear scorer")->capture_default_str();
  app->add_option("--hidden", m.hidden, "BiLSTM hidden size per direction")->capture_default_str();
  app->add_flag("--freeze-embeddings", m.freeze_embeddings, "keep word vectors fixed");
  app->add_flag("--lowercase", m.lowercase, "look words up lowercased");
  app->add_flag("--no-bio-mask", m.no_bio_mask, "allow every label transition");
  app->add_option("--max-length", m.max_length, "longest sentence scored in one piece (0 = no limit)")->capture_default_str();
  app->add_flag("--collapse-o", m.collapse_o, "single O label in fine schemes");
  app->add_option("--vectors", m.vectors, "word vector file (\"|V| d\" header)");
  app->add_option("--precomputed", m.precomputed, "JSON lines of per-token vectors");
}

void add_train_options(CLI::App* app, TrainOptions& t) {
  app->add_option("--lr", t.lr, "learning rate")->capture_default_str();
  app->add_option("--batch", t.batch, "minibatch size")->capture_default_str();
  app->add_option("--epochs", t.epochs, "maximum epochs")->capture_default_str();
  app->add_option("--patience", t.patience, "epochs without dev improvement before stopping (0 = never)")
      ->capture_default_str();
  app->add_option("--seed", t.seed, "random seed")->capture_default_str();
  app->add_option("--weight-decay", t.weight_decay, "decoupled weight decay")->capture_default_str();
  app->add_option("--dev-fraction", t.dev_fraction, "held-out share for early stopping")->capture_default_str();
  app->add_option("--word-dropout", t.word_dropout, "chance a training token is read as <unk>")->capture_default_str();
}

ModelSpec make_spec(const ModelOptions& m, std::size_t precomputed_dim) {
  ModelSpec s;
  s.scorer = parse_scorer_kind(m.scorer);
  s.decoder = parse_decoder(m.decoder);
  s.embedding_dim = m.embedding_dim;
  s.window_radius = m.window;
  s.hidden = m.hidden;
  s.precomputed_dim = precomputed_dim;
  s.train_embeddings = !m.freeze_embeddings;
  s.lowercase = m.lowercase;
  s.use_bio_mask = !m.no_bio_mask;
  s.max_length = m.max_length;
  return s;
}

TrainConfig make_train_config(const TrainOptions& t, std::size_t jobs) {
  TrainConfig c;
  c.learning_rate = t.lr;
  c.batch_size = t.batch;
  c.max_epochs = t.epochs;
  c.patience = t.patience;
  c.seed = t.seed;
  c.weight_decay = t.weight_decay;
  c.dev_fraction = t.dev_fraction;
  c.word_dropout = t.word_dropout;
  c.jobs = jobs;
  return c;
}

std::shared_ptr<const PrecomputedVectors> maybe_precomputed(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const PrecomputedVectors>(load_precomputed(path));
}

// Builds the blueprint for `data` and trains the requested family.
AnyTagger train_from_options(const ModelOptions& m, const TrainConfig& tc, const std::vector<LabeledSentence>& data,
                             nlohmann::json* logs) {
  auto pre = maybe_precomputed(m.precomputed);
  if (m.scorer == "precomputed" && !pre) throw Error("--scorer precomputed needs --precomputed");
  ModelSpec spec = make_spec(m, pre ? pre->dim() : 0);
  std::optional<EmbeddingTable> pretrained;
  if (!m.vectors.empty()) {
    pretrained = load_vectors(fs::path(m.vectors));
    spec.embedding_dim = pretrained->dim();
    pretrained->set_trainable(spec.train_embeddings);
  }
  Blueprint bp = make_blueprint(spec, data, tc.seed, pretrained ? &*pretrained : nullptr);
  if (pre) {
    // Precomputed scorers look vectors up while training.
    Family family = parse_family(m.family);
    TrainLog log;
    AnyTagger t;
    if (family == Family::plain) {
      auto model = instantiate(bp, LabelScheme::coarse(), tc.seed);
      model.attach(pre);
      t = AnyTagger(family, train(std::move(model), data, tc, &log));
    } else {
      throw Error("precomputed vectors are supported for the plain family only");
    }
    if (logs) (*logs)["plain"] = to_json(log);
    t.attach(pre);
    return t;
  }
  TrainLog log;
  AnyTagger t = train_family(parse_family(m.family), data, bp, tc, m.collapse_o, &log);
  if (logs) {
    if (auto* e = std::get_if<DfgEnsemble>(&t.variant())) {
      for (const auto& [g, l] : e->logs) (*logs)[std::string(to_string(g))] = to_json(l);
    } else {
      (*logs)[std::string(to_string(t.family()))] = to_json(log);
    }
  }
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw IoError(std::string(what) + " '" + path + "' does not exist");
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Resolved configuration of this run, written next to its outputs: global
// keys plus those of the subcommand that ran. It loads back with --config.
void write_resolved_config(const CLI::App& root, const fs::path& path) {
  std::string active;
  for (const CLI::App* sub : root.get_subcommands()) active = sub->get_name();
  std::istringstream all(root.config_to_str(true, false));
  std::string out, line;
  while (std::getline(all, line)) {
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    if (dot != std::string::npos && dot < eq && line.compare(0, dot, active) != 0) continue;
    out += line + '\n';
  }
  write_text(path, out);
}

std::vector<LabeledSentence> predict_all(const AnyTagger& model, const std::vector<LabeledSentence>& data,
                                         std::size_t jobs) {
  std::vector<LabeledSentence> out(data);
  parallel_for(out.size(), jobs, [&](std::size_t i) { out[i].labels = model.predict(data[i]); });
  return out;
}

std::vector<std::vector<CoarseLabel>> labels_of(const std::vector<LabeledSentence>& data) {
  std::vector<std::vector<CoarseLabel>> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.labels);
  return out;
}

// Predictions must cover the gold sentences token for token.
void check_aligned(const std::vector<LabeledSentence>& pred, const std::vector<LabeledSentence>& gold,
                   const std::string& what) {
  if (pred.size() != gold.size()) throw Error(what + " has " + std::to_string(pred.size()) + " sentences, gold has " +
                                              std::to_string(gold.size()));
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (pred[i].tokens != gold[i].tokens)
      throw Error(what + ": sentence " + std::to_string(i + 1) + " tokens differ from gold");
}

std::string report_table(const EvalReport& r, bool per_category) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "scope" << std::right << std::setw(10) << "precision" << std::setw(10)
     << "recall" << std::setw(10) << "f_score" << std::setw(8) << "gold" << '\n';
  auto row = [&](const std::string& name, const PRF& m) {
    os << std::left << std::setw(10) << name << std::right << std::setw(10) << fixed(m.precision) << std::setw(10)
       << fixed(m.recall) << std::setw(10) << fixed(m.f_score) << std::setw(8) << m.gold << '\n';
  };
  row("overall", r.overall);
  if (per_category)
    for (const auto& [c, m] : r.per_category) row(std::string(to_string(c)), m);
  return os.str();
}

std::string report_csv(const EvalReport& r, const std::optional<PRF>& zero_shot) {
  std::ostringstream os;
  os << "scope,precision,recall,f_score,tp,predicted,gold\n";
  auto row = [&](const std::string& name, const PRF& m) {
    os << name << ',' << fixed(m.precision, 6) << ',' << fixed(m.recall, 6) << ',' << fixed(m.f_score, 6) << ','
       << m.true_positives << ',' << m.predicted << ',' << m.gold << '\n';
  };
  row("overall", r.overall);
  for (const auto& [c, m] : r.per_category) row(std::string(to_string(c)), m);
  if (zero_shot) row("zero-shot", *zero_shot);
  return os.str();
}

// --- commands -------------------------------------------------------------

struct BuildArgs {
  std::string input, output;
  double negative_keep = 1.0;
  std::uint64_t seed = 13;
};

int cmd_build_corpus(const CLI::App& root, const BuildArgs& a) {
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw IoError("cannot read '" + a.input + "'");
  BuildOptions opt;
  opt.negative_keep_rate = a.negative_keep;
  opt.seed = a.seed;
  CorpusBuilder builder(opt);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      builder.add(parse_raw_paper(std::string_view(line)));
    } catch (const ParseError& e) {
      builder.note_malformed();
      std::cerr << a.input << ":" << line_no << ": skipped: " << e.what() << '\n';
    }
  }
  save_corpus(a.output, builder.corpus());
  const BuildStats& s = builder.stats();
  nlohmann::json j{{"papers_read", s.papers_read},
                   {"papers_kept", s.papers_kept},
                   {"papers_without_tags", s.papers_without_tags},
                   {"papers_without_sections", s.papers_without_sections},
                   {"duplicate_ids", s.duplicate_ids},
                   {"malformed_lines", s.malformed_lines},
                   {"sentences", s.sentences},
                   {"spans", s.spans},
                   {"negatives_dropped", s.negatives_dropped}};
  write_text(a.output + ".stats.json", j.dump(2) + "\n");
  write_resolved_config(root, a.output + ".config.toml");
  std::cout << "papers read " << s.papers_read << ", kept " << s.papers_kept << ", dropped without tags "
            << s.papers_without_tags << ", duplicates " << s.duplicate_ids << ", malformed lines " << s.malformed_lines
            << "\nsentences " << s.sentences << ", spans " << s.spans << '\n';
  return 0;
}

struct SplitArgs {
  std::string input, train, test, stream_dir;
  std::optional<int> cutoff;
  std::optional<double> ratio;
  std::uint64_t seed = 1;
};

int cmd_split(const CLI::App& root, const SplitArgs& a) {
  require_file(a.input, "dataset");
  Corpus c = load_corpus(a.input);
  Split s = a.cutoff ? chronological_split(c, *a.cutoff) : percentage_split(c, *a.ratio, a.seed);
  save_corpus(a.train, s.train);
  if (!a.test.empty()) save_corpus(a.test, s.test);
  if (!a.stream_dir.empty()) {
    fs::create_directories(a.stream_dir);
    for (const auto& [year, slice] : by_year(s.test)) save_corpus(fs::path(a.stream_dir) / (std::to_string(year) + ".tsv"), slice);
  }
  write_resolved_config(root, a.train + ".config.toml");
  std::cout << "train " << s.train.size() << " sentences, test " << s.test.size() << " sentences\n";
  return 0;
}

struct TrainArgs {
  std::string data, output;
  ModelOptions model;
  TrainOptions train;
};

int cmd_train(const CLI::App& root, const TrainArgs& a, std::size_t jobs) {
  require_file(a.data, "dataset");
  Corpus c = load_corpus(a.data);
  nlohmann::json logs = nlohmann::json::object();
  AnyTagger t = train_from_options(a.model, make_train_config(a.train, jobs), c.sentences, &logs);
  if (fs::exists(a.output) && fs::is_directory(a.output) != std::holds_alternative<DfgEnsemble>(t.variant()))
    fs::remove_all(a.output);
  save_tagger(a.output, t);
  nlohmann::json m;
  m["data"] = a.data;
  m["sentences"] = c.size();
  m["family"] = std::string(to_string(t.family()));
  m["decoder"] = a.model.decoder;
  m["scorer"] = a.model.scorer;
  m["model"] = a.output;
  m["training"] = logs;
  write_text(a.output + ".manifest.json", m.dump(2) + "\n");
  write_resolved_config(root, a.output + ".config.toml");
  std::cout << "trained " << to_string(t.family()) << " (" << a.model.decoder << ") on " << c.size()
            << " sentences -> " << a.output << '\n';
  return 0;
}

struct PredictArgs {
  std::string model, data, output, precomputed;
};

int cmd_predict(const CLI::App& root, const PredictArgs& a, std::size_t jobs) {
  require_file(a.model, "model");
  require_file(a.data, "dataset");
  AnyTagger t = load_tagger(a.model);
  if (auto pre = maybe_precomputed(a.precomputed)) t.attach(pre);
  auto pred = predict_all(t, read_dataset_file(a.data), jobs);
  write_dataset_file(a.output, pred);
  write_resolved_config(root, a.output + ".config.toml");
  std::size_t spans = 0;
  for (const auto& s : pred) spans += count_spans(s.labels);
  std::cout << "predicted " << spans << " spans in " << pred.size() << " sentences -> " << a.output << '\n';
  return 0;
}

struct EvalArgs {
  std::string gold, model, predictions, compare, tags, output, precomputed;
  bool per_category = false;
  std::optional<int> zero_shot_cutoff;
};

int cmd_evaluate(const CLI::App& root, const EvalArgs& a, std::size_t jobs) {
  require_file(a.gold, "gold dataset");
  Corpus gold = load_corpus(a.gold);
  std::vector<LabeledSentence> pred;
  if (!a.predictions.empty()) {
    require_file(a.predictions, "predictions");
    pred = read_dataset_file(a.predictions);
  } else {
    require_file(a.model, "model");
    AnyTagger t = load_tagger(a.model);
    if (auto pre = maybe_precomputed(a.precomputed)) t.attach(pre);
    pred = predict_all(t, gold.sentences, jobs);
  }
  check_aligned(pred, gold.sentences, "predictions");
  const auto pl = labels_of(pred);
  EvalReport report = evaluate(pl, gold.sentences);

  nlohmann::json j = to_json(report);
  std::optional<PRF> zs;
  if (a.zero_shot_cutoff) {
    auto tags = gold.tag_index;
    if (!a.tags.empty()) {
      require_file(a.tags, "tag index");
      tags = read_tag_index(a.tags);
    }
    if (tags.empty()) throw Error("--zero-shot-cutoff needs a tag index (sidecar or --tags)");
    auto spans = collect_spans(pl, gold.sentences);
    zs = zero_shot_prf(spans, tags, *a.zero_shot_cutoff);
    j["zero_shot"] = to_json(*zs);
    j["zero_shot"]["cutoff"] = *a.zero_shot_cutoff;
    j["zero_shot"]["unresolved_gold_spans"] = zero_shot_filter(spans.gold, tags, *a.zero_shot_cutoff).unresolved;
  }
  std::cout << report_table(report, a.per_category);
  if (zs)
    std::cout << "zero-shot (first seen after " << *a.zero_shot_cutoff << "): P " << fixed(zs->precision) << " R "
              << fixed(zs->recall) << " F " << fixed(zs->f_score) << " over " << zs->gold << " gold spans\n";

  if (!a.compare.empty()) {
    require_file(a.compare, "comparison predictions");
    auto other = read_dataset_file(a.compare);
    check_aligned(other, gold.sentences, "comparison predictions");
    auto fa = per_paper_f(pl, gold.sentences);
    auto fb = per_paper_f(labels_of(other), gold.sentences);
    std::vector<double> xa, xb;
    for (const auto& [id, f] : fa) {
      xa.push_back(f);
      xb.push_back(fb.at(id));
    }
    TTestResult t = paired_t_test(xa, xb);
    j["comparison"] = {{"against", a.compare},       {"pairs", xa.size()},
                       {"t", t.t},                   {"p_value", t.p_value},
                       {"degrees_of_freedom", t.degrees_of_freedom}, {"significant", t.significant}};
    std::cout << "paired t-test over " << xa.size() << " papers: t " << fixed(t.t) << ", p " << fixed(t.p_value)
              << (t.significant ? " (significant at 0.05)" : " (not significant at 0.05)") << '\n';
  }

  if (!a.output.empty()) {
    write_text(a.output + ".json", j.dump(2) + "\n");
    write_text(a.output + ".csv", report_csv(report, zs));
    write_resolved_config(root, a.output + ".config.toml");
  }
  return 0;
}

struct FeedbackArgs {
  std::string train, stream_dir, model, output_dir, mode = "silver";
  ModelOptions model_opts;
  TrainOptions train_opts;
  std::size_t retrain_epochs = 5;
  double retrain_dev_fraction = 0.0;
  bool mix_gold = false;
  bool save_checkpoints = false;
  double min_path_prob = 0.0;
  double silver_negative_keep = 1.0;
  std::optional<int> zero_shot_cutoff;
};

YearlyStream load_stream(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("stream directory '" + dir.string() + "' does not exist");
  std::map<int, Corpus> slices;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tsv" && e.path().stem().extension().empty())
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    int year = 0;
    try {
      year = std::stoi(f.stem().string());
    } catch (const std::exception&) {
      throw ParseError("stream file '" + f.string() + "' is not named <year>.tsv");
    }
    slices[year] = load_corpus(f);
  }
  if (slices.empty()) throw IoError("no <year>.tsv files in '" + dir.string() + "'");
  return YearlyStream(std::move(slices));
}

int cmd_feedback(const CLI::App& root, const FeedbackArgs& a, std::size_t jobs) {
  require_file(a.train, "training dataset");
  Corpus train_corpus = load_corpus(a.train);
  if (train_corpus.empty()) throw EmptyData("empty training dataset");
  YearlyStream stream = load_stream(a.stream_dir);
  ChronoConfig cc;
  cc.train = make_train_config(a.train_opts, jobs);
  cc.retrain_epochs = a.retrain_epochs;
  cc.retrain_dev_fraction = a.retrain_dev_fraction;
  cc.mix_gold = a.mix_gold;
  cc.min_path_prob = a.min_path_prob;
  cc.silver_negative_keep = a.silver_negative_keep;
  cc.zero_shot_cutoff = a.zero_shot_cutoff;
  if (a.save_checkpoints) cc.checkpoint_dir = fs::path(a.output_dir) / "checkpoints";

  int initial_year = train_corpus.sentences.front().paper_year;
  for (const auto& s : train_corpus.sentences) initial_year = std::max(initial_year, s.paper_year);
  AnyTagger initial;
  if (!a.model.empty()) {
    require_file(a.model, "initial model");
    initial = load_tagger(a.model);
    if (auto pre = maybe_precomputed(a.model_opts.precomputed)) initial.attach(pre);
  } else {
    initial = train_from_options(a.model_opts, cc.train, train_corpus.sentences, nullptr);
  }
  FeedbackRun run = run_protocol(std::move(initial), initial_year, train_corpus, stream, parse_feedback_mode(a.mode), cc);

  const fs::path dir(a.output_dir);
  nlohmann::json m = manifest(run, cc);
  m["train"] = a.train;
  m["stream_dir"] = a.stream_dir;
  const std::string text = m.dump(2) + "\n";
  const fs::path manifest_path = dir / "manifest.json";
  const bool existed = fs::exists(manifest_path);
  const std::string previous = existed ? read_text(manifest_path) : std::string();
  write_text(manifest_path, text);
  std::ostringstream csv;
  write_series_csv(csv, run);
  write_text(dir / "series.csv", csv.str());
  write_resolved_config(root, dir / "config.toml");

  std::cout << "mode " << a.mode << ", initial year " << initial_year << '\n';
  for (const auto& [eval_year, entry] : run.latest_series()) {
    const PRF& z = run.zero_shot.at({entry.first, eval_year});
    std::cout << "  eval " << eval_year << " with model " << entry.first << ": F " << fixed(entry.second.f_score)
              << ", zero-shot F " << fixed(z.f_score) << '\n';
  }
  if (existed) {
    if (previous != text) {
      std::cerr << "manifest differs from the one already in " << dir.string() << '\n';
      return 3;
    }
    std::cout << "existing manifest reproduced\n";
  }
  return 0;
}

struct ContextArgs {
  std::string data, term, output;
  std::size_t window = 3;
};

int cmd_export_context(const CLI::App& root, const ContextArgs& a) {
  require_file(a.data, "dataset");
  auto counts = context_frequencies(read_dataset_file(a.data), a.term, a.window);
  std::ostringstream os;
  write_frequencies_csv(os, counts);
  write_text(a.output, os.str());
  write_resolved_config(root, a.output + ".config.toml");
  std::cout << counts.size() << " context terms -> " << a.output << '\n';
  return 0;
}

struct SynthArgs {
  std::string kind = "drift", output;
  std::uint64_t seed = 1;
};

int cmd_synth(const CLI::App& root, const SynthArgs& a) {
  const fs::path out(a.output);
  if (a.kind == "separable") {
    save_corpus(out, separable_corpus(a.seed));
    write_resolved_config(root, a.output + ".config.toml");
    std::cout << "separable corpus -> " << a.output << '\n';
    return 0;
  }
  DriftOptions o;
  o.seed = a.seed;
  DriftBenchmark b = a.kind == "drift" ? drift_benchmark(o) : stationary_benchmark(o);
  save_corpus(out / "train.tsv", b.train);
  for (const auto& [year, slice] : b.stream.slices()) save_corpus(out / "stream" / (std::to_string(year) + ".tsv"), slice);
  write_resolved_config(root, out / "config.toml");
  std::cout << a.kind << " benchmark: " << b.train.size() << " training sentences, stream " << b.stream.first_year()
            << "-" << b.stream.last_year() << " -> " << a.output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Method-name extraction: corpus building, tagging, evaluation and chronological retraining"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-corpus", "label papers against their method tags");
  c_build->add_option("--input", build.input, "papers, one JSON object per line")->required();
  c_build->add_option("--output", build.output, "dataset to write")->required();
  c_build->add_option("--negative-keep", build.negative_keep, "share of sentences without methods kept")
      ->capture_default_str();
  c_build->add_option("--seed", build.seed, "seed for negative sampling")->capture_default_str();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "chronological or random train/test split");
  c_split->add_option("--input", split.input, "dataset")->required();
  auto* o_cut = c_split->add_option("--cutoff", split.cutoff, "papers up to this year train");
  auto* o_ratio = c_split->add_option("--ratio", split.ratio, "random share for training");
  o_cut->excludes(o_ratio);
  c_split->add_option("--train", split.train, "training output")->required();
  c_split->add_option("--test", split.test, "test output");
  c_split->add_option("--stream-dir", split.stream_dir, "write the test side as one <year>.tsv per year")
      ->needs(o_cut);
  c_split->add_option("--seed", split.seed, "seed for random splits")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a tagger");
  c_train->add_option("--data", tr.data, "training dataset")->required();
  c_train->add_option("--output", tr.output, "model file (directory for dfg/dfgb)")->required();
  add_model_options(c_train, tr.model);
  add_train_options(c_train, tr.train);

  PredictArgs pr;
  auto* c_predict = app.add_subcommand("predict", "tag a dataset");
  c_predict->add_option("--model", pr.model, "model")->required();
  c_predict->add_option("--data", pr.data, "dataset to tag")->required();
  c_predict->add_option("--output", pr.output, "predictions dataset")->required();
  c_predict->add_option("--precomputed", pr.precomputed, "per-token vectors for precomputed scorers");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "score predictions against gold spans");
  c_eval->add_option("--gold", ev.gold, "gold dataset")->required();
  auto* o_model = c_eval->add_option("--model", ev.model, "model to run on the gold sentences");
  auto* o_pred = c_eval->add_option("--predictions", ev.predictions, "existing predictions dataset");
  o_model->excludes(o_pred);
  c_eval->add_flag("--per-category", ev.per_category, "print per-category scores");
  c_eval->add_option("--zero-shot-cutoff", ev.zero_shot_cutoff, "also score methods first seen after this year");
  c_eval->add_option("--tags", ev.tags, "tag index (default: the gold dataset's sidecar)");
  c_eval->add_option("--compare", ev.compare, "second predictions dataset for a paired t-test");
  c_eval->add_option("--output", ev.output, "report prefix (.json and .csv)");
  c_eval->add_option("--precomputed", ev.precomputed, "per-token vectors for precomputed scorers");

  FeedbackArgs fb;
  auto* c_feedback = app.add_subcommand("feedback", "chronological frozen/silver/gold retraining run");
  c_feedback->add_option("--train", fb.train, "initial training dataset")->required();
  c_feedback->add_option("--stream-dir", fb.stream_dir, "directory of <year>.tsv slices")->required();
  c_feedback->add_option("--mode", fb.mode, "frozen, silver or gold")
      ->check(CLI::IsMember({"frozen", "silver", "gold"}))
      ->capture_default_str();
  c_feedback->add_option("--model", fb.model, "initial model (trained from --train when absent)");
  c_feedback->add_option("--output-dir", fb.output_dir, "manifest, series and checkpoints")->required();
  c_feedback->add_option("--retrain-epochs", fb.retrain_epochs, "epochs per yearly update")->capture_default_str();
  c_feedback->add_option("--retrain-dev-fraction", fb.retrain_dev_fraction, "held-out share during updates")
      ->capture_default_str();
  c_feedback->add_flag("--mix-gold", fb.mix_gold, "replay the initial gold data in every update");
  c_feedback->add_option("--min-path-prob", fb.min_path_prob, "drop silver sentences decoded with lower probability")
      ->capture_default_str();
  c_feedback->add_option("--silver-negative-keep", fb.silver_negative_keep,
                         "share of silver sentences without methods kept")
      ->capture_default_str();
  c_feedback->add_option("--zero-shot-cutoff", fb.zero_shot_cutoff, "default: the initial model year");
  c_feedback->add_flag("--save-checkpoints", fb.save_checkpoints, "write every checkpoint under the output dir");
  add_model_options(c_feedback, fb.model_opts);
  add_train_options(c_feedback, fb.train_opts);

  ContextArgs cx;
  auto* c_context = app.add_subcommand("export-context", "count words around a method name");
  c_context->add_option("--data", cx.data, "dataset")->required();
  c_context->add_option("--term", cx.term, "method name")->required();
  c_context->add_option("--window", cx.window, "tokens on each side")->capture_default_str();
  c_context->add_option("--output", cx.output, "CSV of term,count")->required();

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic benchmark");
  c_synth->add_option("--kind", sy.kind, "separable, drift or stationary")
      ->check(CLI::IsMember({"separable", "drift", "stationary"}))
      ->capture_default_str();
  c_synth->add_option("--output", sy.output, "dataset (separable) or directory")->required();
  c_synth->add_option("--seed", sy.seed, "generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_build) return cmd_build_corpus(app, build);
    if (*c_split) {
      if (!split.cutoff && !split.ratio) throw Error("split needs --cutoff or --ratio");
      return cmd_split(app, split);
    }
    if (*c_train) return cmd_train(app, tr, jobs);
    if (*c_predict) return cmd_predict(app, pr, jobs);
    if (*c_eval) {
      if (ev.model.empty() && ev.predictions.empty()) throw Error("evaluate needs --model or --predictions");
      return cmd_evaluate(app, ev, jobs);
    }
    if (*c_feedback) return cmd_feedback(app, fb, jobs);
    if (*c_context) return cmd_export_context(app, cx);
    if (*c_synth) return cmd_synth(app, sy);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
