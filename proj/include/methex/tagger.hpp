#pragma once

// A trainable tagger: emission scorer + transition matrix + label scheme +
// decoder, with loss/gradient evaluation and a versioned binary format.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "methex/corpus.hpp"
#include "methex/crf.hpp"
#include "methex/encoder.hpp"
#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/optimizer.hpp"

namespace methex {

static_assert(std::endian::native == std::endian::little, "model files are written in host (little-endian) order");

enum class Decoder : std::uint8_t { crf, softmax };

inline std::string_view to_string(Decoder d) { return d == Decoder::crf ? "crf" : "softmax"; }

inline Decoder parse_decoder(std::string_view s) {
  if (s == "crf") return Decoder::crf;
  if (s == "softmax") return Decoder::softmax;
  throw ParseError("unknown decoder '" + std::string(s) + "'");
}

// Architecture choices shared by every model a trainer builds.
struct ModelSpec {
  ScorerKind scorer = ScorerKind::window_linear;
  Decoder decoder = Decoder::crf;
  std::size_t embedding_dim = 100;
  std::size_t window_radius = 1;
  std::size_t hidden = 64;
  std::size_t precomputed_dim = 0;
  bool train_embeddings = true;
  bool lowercase = false;
  bool use_bio_mask = true;
  double mask_penalty = kDefaultMaskPenalty;
  std::size_t max_length = 256;
};

struct Decoded {
  std::vector<std::size_t> labels;
  std::size_t repairs = 0;
  double log_prob = 0.0;  // log p(path | x) for CRF decoding, summed over chunks
};

inline SentenceInput input_of(const LabeledSentence& s) { return {s.tokens, s.paper_id, s.sentence_index}; }

// Chunk boundaries [begin, end) no longer than `max_length`. With gold labels
// each cut is moved back so the next chunk does not start inside a span.
inline std::vector<std::pair<std::size_t, std::size_t>> chunk_bounds(std::size_t n, std::size_t max_length,
                                                                     const std::vector<CoarseLabel>* labels = nullptr) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (max_length == 0 || n <= max_length) {
    out.emplace_back(0, n);
    return out;
  }
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = std::min(n, begin + max_length);
    if (labels && end < n) {
      std::size_t k = end;
      while (k > begin + 1 && (*labels)[k] == CoarseLabel::I) --k;
      if ((*labels)[k] != CoarseLabel::I) end = k;
    }
    out.emplace_back(begin, end);
    begin = end;
  }
  return out;
}

inline Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  std::copy(m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
            m.data().begin() + static_cast<std::ptrdiff_t>(end * m.cols()), out.data().begin());
  return out;
}

class TaggerModel {
 public:
  TaggerModel() = default;
  TaggerModel(EmissionScorer scorer, LabelScheme scheme, Decoder decoder, bool use_bio_mask = true,
              double mask_penalty = kDefaultMaskPenalty, std::size_t max_length = 256)
      : scorer_(std::move(scorer)),
        scheme_(std::move(scheme)),
        decoder_(decoder),
        use_bio_mask_(use_bio_mask),
        mask_penalty_(mask_penalty),
        max_length_(max_length) {
    if (scorer_.output_dim() != scheme_.size())
      throw DimensionMismatch("scorer emits " + std::to_string(scorer_.output_dim()) + " scores but the scheme has " +
                              std::to_string(scheme_.size()) + " labels");
    transitions_ = TransitionMatrix(scheme_.size(),
                                    use_bio_mask_ ? bio_mask(scheme_) : TransitionMask(scheme_.size()));
  }

  const LabelScheme& scheme() const { return scheme_; }
  Decoder decoder() const { return decoder_; }
  bool uses_bio_mask() const { return use_bio_mask_; }
  double mask_penalty() const { return mask_penalty_; }
  std::size_t max_length() const { return max_length_; }
  EmissionScorer& scorer() { return scorer_; }
  const EmissionScorer& scorer() const { return scorer_; }
  TransitionMatrix& transitions() { return transitions_; }
  const TransitionMatrix& transitions() const { return transitions_; }

  void attach(std::shared_ptr<const PrecomputedVectors> v) { scorer_.attach(std::move(v)); }

  Matrix emissions(const SentenceInput& in) const { return emission_scores(in, scorer_, scheme_); }

  // Gold label indices of a sentence under this model's scheme.
  std::vector<std::size_t> encode_gold(const LabeledSentence& s) const {
    std::vector<std::size_t> out;
    out.reserve(s.labels.size());
    if (!scheme_.is_fine()) {
      for (CoarseLabel l : s.labels) out.push_back(scheme_.index(l));
    } else {
      for (const FineLabel& l : expand_labels(s.labels, s.category, scheme_)) out.push_back(scheme_.index(l));
    }
    return out;
  }

  Decoded decode(const SentenceInput& in) const {
    Decoded d;
    if (in.size() == 0) return d;
    const Matrix e = emissions(in);
    if (decoder_ == Decoder::softmax) {
      auto s = softmax_decode(e, scheme_);
      d.labels = std::move(s.labels);
      d.repairs = s.repairs;
      return d;
    }
    for (auto [b, end] : chunk_bounds(in.size(), max_length_)) {
      Matrix part = slice_rows(e, b, end);
      auto v = viterbi(part, transitions_);
      d.log_prob += v.score - log_partition(part, transitions_);
      d.labels.insert(d.labels.end(), v.labels.begin(), v.labels.end());
    }
    return d;
  }

  std::vector<FineLabel> predict_fine(const SentenceInput& in) const {
    std::vector<FineLabel> out;
    for (std::size_t y : decode(in).labels) out.push_back(scheme_.label(y));
    return out;
  }

  std::vector<CoarseLabel> predict(const SentenceInput& in) const {
    auto fine = predict_fine(in);
    return project_labels(fine);
  }

  // Loss of one sentence; with `accumulate` the parameter gradients are added.
  double loss(const LabeledSentence& s, bool accumulate = false) {
    if (s.tokens.empty()) return 0.0;
    const auto gold = encode_gold(s);
    const SentenceInput in = input_of(s);
    EmissionScorer::Trace trace;
    const Matrix e = scorer_.forward(in, accumulate ? &trace : nullptr);
    if (e.cols() != scheme_.size()) throw DimensionMismatch("scorer output does not match the label scheme");

    double total = 0.0;
    Matrix d_e(e.rows(), e.cols());
    if (decoder_ == Decoder::softmax) {
      auto g = token_cross_entropy(e, gold);
      total = g.loss;
      d_e = std::move(g.d_emissions);
    } else {
      Parameter& tp = transitions_.parameter();
      for (auto [b, end] : chunk_bounds(s.size(), max_length_, &s.labels)) {
        Matrix part = slice_rows(e, b, end);
        std::vector<std::size_t> part_gold(gold.begin() + static_cast<std::ptrdiff_t>(b),
                                           gold.begin() + static_cast<std::ptrdiff_t>(end));
        if (b > 0) {
          // A hard cut inside an over-long span: restart the span.
          const FineLabel& l = scheme_.label(part_gold[0]);
          if (l.indicator == CoarseLabel::I) part_gold[0] = scheme_.index(FineLabel{CoarseLabel::B, l.group});
        }
        auto g = nll_and_gradients(part, transitions_, part_gold, mask_penalty_);
        total += g.loss;
        if (!accumulate) continue;
        for (std::size_t i = 0; i < part.rows(); ++i)
          std::copy(g.d_emissions.row(i).begin(), g.d_emissions.row(i).end(), d_e.row(b + i).begin());
        for (std::size_t k = 0; k < tp.grad.size(); ++k) tp.grad.data()[k] += g.d_transitions.data()[k];
      }
    }
    if (accumulate) scorer_.backward(in, trace, d_e);
    return total;
  }

  double accumulate_gradients(const LabeledSentence& s) { return loss(s, true); }

  // Loss without touching gradients.
  double eval_loss(const LabeledSentence& s) const { return const_cast<TaggerModel*>(this)->loss(s, false); }

  std::vector<Parameter*> parameters() {
    auto p = scorer_.parameters();
    if (decoder_ == Decoder::crf) p.push_back(&transitions_.parameter());
    return p;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
  }

  // Gives tokens of `data` missing from a trainable vocabulary their own rows,
  // starting as copies of the UNK row. Returns the number of rows added.
  std::size_t extend_vocabulary(const std::vector<LabeledSentence>& data) {
    EmbeddingTable* table = scorer_.table();
    if (!table || !table->trainable()) return 0;
    std::vector<std::string_view> tokens;
    for (const auto& s : data) tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    return table->extend_from_unk(tokens);
  }

  // Optimizer moments travel with the parameters so that further training
  // continues the same optimization. They are not serialized.
  AdamW& optimizer() { return optimizer_; }
  const AdamW& optimizer() const { return optimizer_; }

  // Every serialized array in a fixed order, including frozen embeddings.
  std::vector<std::pair<std::string, Matrix*>> arrays() {
    std::vector<std::pair<std::string, Matrix*>> out;
    std::visit(
        [&](auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, WindowLinearScorer>) {
            out.emplace_back("embedding", &s.table().parameter().value);
          } else if constexpr (std::is_same_v<T, BiLstmScorer>) {
            out.emplace_back("embedding", &s.table().parameter().value);
            for (LstmDirection* d : {&s.forward_direction(), &s.backward_direction()})
              for (Parameter* p : {&d->wx, &d->wh, &d->b}) out.emplace_back(p->name, &p->value);
          }
          out.emplace_back("out.w", &s.layer().w.value);
          out.emplace_back("out.b", &s.layer().b.value);
        },
        scorer_.variant());
    out.emplace_back("transitions", &transitions_.parameter().value);
    return out;
  }

  std::vector<std::pair<std::string, const Matrix*>> arrays() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, mat] : const_cast<TaggerModel*>(this)->arrays()) out.emplace_back(name, mat);
    return out;
  }

  // Re-syncs gradient buffers after arrays were replaced wholesale.
  void sync_shapes() {
    for (Parameter* p : parameters()) p->sync_shape();
    std::visit(
        [](auto& s) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(s)>, PrecomputedScorer>) s.table().parameter().sync_shape();
        },
        scorer_.variant());
  }

 private:
  EmissionScorer scorer_;
  LabelScheme scheme_;
  Decoder decoder_ = Decoder::crf;
  bool use_bio_mask_ = true;
  double mask_penalty_ = kDefaultMaskPenalty;
  std::size_t max_length_ = 256;
  TransitionMatrix transitions_;
  AdamW optimizer_;
};

// Random initialization of a fresh tagger: uniform in [-0.1, 0.1].
inline TaggerModel make_tagger(const ModelSpec& spec, const LabelScheme& scheme, EmbeddingTable vocabulary,
                               std::uint64_t seed) {
  Rng rng(seed);
  vocabulary.set_trainable(spec.train_embeddings);
  EmissionScorer scorer;
  switch (spec.scorer) {
    case ScorerKind::window_linear:
      scorer = EmissionScorer::window_linear(std::move(vocabulary), spec.window_radius, scheme.size(), rng);
      break;
    case ScorerKind::bilstm:
      scorer = EmissionScorer::bilstm(std::move(vocabulary), spec.hidden, scheme.size(), rng);
      break;
    case ScorerKind::precomputed:
      if (spec.precomputed_dim == 0) throw DimensionMismatch("precomputed scorer needs precomputed_dim > 0");
      scorer = EmissionScorer::precomputed(spec.precomputed_dim, scheme.size(), rng);
      break;
  }
  TaggerModel m(std::move(scorer), scheme, spec.decoder, spec.use_bio_mask, spec.mask_penalty, spec.max_length);
  if (spec.decoder == Decoder::crf) m.transitions().randomize(rng, kInitScale);
  return m;
}

// ---------------------------------------------------------------------------
// Serialization: magic, format version, length-prefixed JSON header, then the
// raw little-endian doubles of every array listed in the header.

inline constexpr char kModelMagic[8] = {'M', 'E', 'T', 'H', 'E', 'X', 'T', 'G'};
inline constexpr std::uint32_t kModelVersion = 1;

inline nlohmann::json model_header(const TaggerModel& m) {
  nlohmann::json h;
  h["scheme"] = m.scheme().descriptor();
  h["decoder"] = std::string(to_string(m.decoder()));
  h["bio_mask"] = m.uses_bio_mask();
  h["mask_penalty"] = std::isfinite(m.mask_penalty()) ? nlohmann::json(m.mask_penalty()) : nlohmann::json(nullptr);
  h["max_length"] = m.max_length();
  nlohmann::json s;
  s["kind"] = std::string(to_string(m.scorer().kind()));
  std::visit(
      [&](const auto& sc) {
        using T = std::decay_t<decltype(sc)>;
        if constexpr (std::is_same_v<T, PrecomputedScorer>) {
          s["input_dim"] = sc.input_dim();
        } else {
          if constexpr (std::is_same_v<T, WindowLinearScorer>) s["radius"] = sc.radius();
          if constexpr (std::is_same_v<T, BiLstmScorer>) s["hidden"] = sc.hidden();
          s["embedding_dim"] = sc.table().dim();
          s["trainable_embeddings"] = sc.table().trainable();
          s["lowercase"] = sc.table().lowercase();
          s["vocabulary"] = sc.table().words();
        }
      },
      m.scorer().variant());
  h["scorer"] = s;
  nlohmann::json arrays = nlohmann::json::array();
  for (auto& [name, mat] : m.arrays()) arrays.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
  h["arrays"] = arrays;
  return h;
}

inline void save_model(std::ostream& os, const TaggerModel& m) {
  const std::string header = model_header(m).dump();
  os.write(kModelMagic, sizeof kModelMagic);
  const std::uint32_t version = kModelVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = header.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto& [name, mat] : m.arrays())
    os.write(reinterpret_cast<const char*>(mat->data().data()), static_cast<std::streamsize>(mat->size() * sizeof(double)));
  if (!os) throw IoError("failed writing model");
}

inline TaggerModel load_model(std::istream& is) {
  char magic[sizeof kModelMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kModelMagic, sizeof magic) != 0) throw ParseError("not a tagger model file");
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!is || version != kModelVersion)
    throw ParseError("unsupported model format version " + std::to_string(version));
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || len > (1ULL << 34)) throw ParseError("corrupt model header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw ParseError("truncated model header");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model header: ") + e.what());
  }

  try {
    const LabelScheme scheme = LabelScheme::from_descriptor(h.at("scheme").get<std::string>());
    const Decoder decoder = parse_decoder(h.at("decoder").get<std::string>());
    const auto& s = h.at("scorer");
    const ScorerKind kind = parse_scorer_kind(s.at("kind").get<std::string>());
    EmissionScorer scorer;
    if (kind == ScorerKind::precomputed) scorer = PrecomputedScorer(s.at("input_dim").get<std::size_t>(), scheme.size());
    if (kind != ScorerKind::precomputed) {
      auto words = s.at("vocabulary").get<std::vector<std::string>>();
      const std::size_t dim = s.at("embedding_dim").get<std::size_t>();
      Matrix vec(words.size(), dim);
      auto table = EmbeddingTable::from_parts(std::move(words), std::move(vec), s.at("trainable_embeddings").get<bool>(),
                                              s.at("lowercase").get<bool>());
      if (kind == ScorerKind::window_linear)
        scorer = WindowLinearScorer(std::move(table), s.at("radius").get<std::size_t>(), scheme.size());
      else
        scorer = BiLstmScorer(std::move(table), s.at("hidden").get<std::size_t>(), scheme.size());
    }
    const double penalty = h.at("mask_penalty").is_null() ? kNegInf : h.at("mask_penalty").get<double>();
    TaggerModel m(std::move(scorer), scheme, decoder, h.at("bio_mask").get<bool>(), penalty,
                  h.at("max_length").get<std::size_t>());
    auto arrays = m.arrays();
    const auto& listed = h.at("arrays");
    if (listed.size() != arrays.size()) throw ParseError("model array count does not match its architecture");
    for (std::size_t k = 0; k < arrays.size(); ++k) {
      Matrix& mat = *arrays[k].second;
      if (listed[k].at("name").get<std::string>() != arrays[k].first ||
          listed[k].at("rows").get<std::size_t>() != mat.rows() || listed[k].at("cols").get<std::size_t>() != mat.cols())
        throw ParseError("model array '" + arrays[k].first + "' has an unexpected shape");
      is.read(reinterpret_cast<char*>(mat.data().data()), static_cast<std::streamsize>(mat.size() * sizeof(double)));
      if (!is) throw ParseError("truncated model array '" + arrays[k].first + "'");
    }
    m.sync_shapes();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model header: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const TaggerModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model '" + path.string() + "'");
  save_model(out, m);
}

inline TaggerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model '" + path.string() + "'");
  return load_model(in);
}

inline std::string model_bytes(const TaggerModel& m) {
  std::ostringstream os(std::ios::binary);
  save_model(os, m);
  return os.str();
}

}  // namespace methex
