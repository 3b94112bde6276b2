#pragma once

// Emission scorers: per-token label score vectors for the decoders.
//
//   window-linear  W * [e(i-r); ...; e(i+r)] + b over embeddings
//   bilstm         W * [h_fwd(i); h_bwd(i)] + b over a bidirectional LSTM
//   precomputed    W * v(i) + b over externally supplied vectors
//
// Every kind exposes forward (optionally recording a trace) and backward,
// which accumulates parameter gradients from d(loss)/d(scores).

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "methex/embedding.hpp"
#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/matrix.hpp"
#include "methex/rng.hpp"

namespace methex {

inline constexpr double kInitScale = 0.1;

enum class ScorerKind : std::uint8_t { window_linear, bilstm, precomputed };

inline std::string_view to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::window_linear: return "window-linear";
    case ScorerKind::bilstm: return "bilstm";
    case ScorerKind::precomputed: return "precomputed";
  }
  return "?";
}

inline ScorerKind parse_scorer_kind(std::string_view s) {
  if (s == "window-linear") return ScorerKind::window_linear;
  if (s == "bilstm") return ScorerKind::bilstm;
  if (s == "precomputed") return ScorerKind::precomputed;
  throw ParseError("unknown scorer kind '" + std::string(s) + "'");
}

// What a scorer sees of a sentence. The key fields are only consulted by the
// precomputed scorer.
struct SentenceInput {
  const std::vector<std::string>& tokens;
  std::string_view paper_id = {};
  int sentence_index = 0;

  std::size_t size() const { return tokens.size(); }
};

// ---------------------------------------------------------------------------
// Precomputed vectors

// Per-sentence n x d matrices keyed by (paper_id, sentence_index).
class PrecomputedVectors {
 public:
  using Key = std::pair<std::string, int>;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  void insert(std::string paper_id, int sentence_index, Matrix vectors) {
    if (rows_.empty()) dim_ = vectors.cols();
    if (vectors.cols() != dim_)
      throw DimensionError("precomputed vectors for (" + paper_id + ", " + std::to_string(sentence_index) +
                           ") have dimension " + std::to_string(vectors.cols()) + ", expected " +
                           std::to_string(dim_));
    rows_[{std::move(paper_id), sentence_index}] = std::move(vectors);
  }

  const Matrix& at(std::string_view paper_id, int sentence_index, std::size_t n) const {
    auto it = rows_.find(Key{std::string(paper_id), sentence_index});
    if (it == rows_.end())
      throw MissingVectors("no precomputed vectors for (" + std::string(paper_id) + ", " +
                           std::to_string(sentence_index) + ")");
    if (it->second.rows() != n)
      throw DimensionMismatch("precomputed vectors for (" + std::string(paper_id) + ", " +
                              std::to_string(sentence_index) + ") have " + std::to_string(it->second.rows()) +
                              " rows for a " + std::to_string(n) + "-token sentence");
    return it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::map<Key, Matrix> rows_;
};

// JSON lines: {"paper_id": str, "sentence_index": int, "vectors": [[...], ...]}.
inline PrecomputedVectors load_precomputed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read precomputed vectors '" + path.string() + "'");
  PrecomputedVectors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto& rows = j.at("vectors");
      std::size_t n = rows.size();
      std::size_t d = n ? rows[0].size() : 0;
      Matrix m(n, d);
      for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != d) throw DimensionError("ragged vector rows");
        for (std::size_t k = 0; k < d; ++k) m(i, k) = rows[i][k].get<double>();
      }
      out.insert(j.at("paper_id").get<std::string>(), j.at("sentence_index").get<int>(), std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DimensionError& e) {
      throw DimensionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSTM

// One direction of an LSTM. Gate blocks are stacked as [input; forget; cell; output].
struct LstmDirection {
  Parameter wx;  // 4h x d
  Parameter wh;  // 4h x h
  Parameter b;   // 1 x 4h

  LstmDirection() = default;
  LstmDirection(std::string prefix, std::size_t input_dim, std::size_t hidden)
      : wx(prefix + ".wx", 4 * hidden, input_dim),
        wh(prefix + ".wh", 4 * hidden, hidden),
        b(prefix + ".b", 1, 4 * hidden) {}

  std::size_t hidden() const { return wh.value.cols(); }
  std::size_t input_dim() const { return wx.value.cols(); }

  void randomize(Rng& rng) {
    wx.value.randomize(rng, kInitScale);
    wh.value.randomize(rng, kInitScale);
    b.value.randomize(rng, kInitScale);
  }
};

// Activations of one LSTM step, kept for backpropagation.
struct LstmStep {
  std::vector<double> gates;  // i, f, g, o after their nonlinearities
  std::vector<double> c;
  std::vector<double> tanh_c;
  std::vector<double> h;
};

// One cell update from (h_prev, c_prev) on input x.
inline LstmStep lstm_cell(const LstmDirection& p, std::span<const double> x, std::span<const double> h_prev,
                          std::span<const double> c_prev) {
  const std::size_t h = p.hidden();
  LstmStep s;
  s.gates.assign(p.b.value.row(0).begin(), p.b.value.row(0).end());
  gemv_add(p.wx.value, x, s.gates);
  gemv_add(p.wh.value, h_prev, s.gates);
  s.c.resize(h);
  s.tanh_c.resize(h);
  s.h.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    double& gi = s.gates[k];
    double& gf = s.gates[h + k];
    double& gg = s.gates[2 * h + k];
    double& go = s.gates[3 * h + k];
    gi = sigmoid(gi);
    gf = sigmoid(gf);
    gg = std::tanh(gg);
    go = sigmoid(go);
    s.c[k] = gf * c_prev[k] + gi * gg;
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = go * s.tanh_c[k];
  }
  return s;
}

struct BiLstmTrace {
  std::vector<LstmStep> fwd;  // fwd[t] for position t
  std::vector<LstmStep> bwd;  // bwd[t] for position t (computed right to left)
};

// Runs both directions; row i is [h_fwd(i); h_bwd(i)].
inline Matrix bilstm_states(const Matrix& inputs, const LstmDirection& fwd, const LstmDirection& bwd,
                            BiLstmTrace* trace = nullptr) {
  const std::size_t n = inputs.rows();
  const std::size_t hf = fwd.hidden(), hb = bwd.hidden();
  Matrix out(n, hf + hb);
  BiLstmTrace local;
  BiLstmTrace& tr = trace ? *trace : local;
  tr.fwd.assign(n, {});
  tr.bwd.assign(n, {});

  std::vector<double> zero_f(hf, 0.0), zero_b(hb, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    std::span<const double> hp = t ? std::span<const double>(tr.fwd[t - 1].h) : std::span<const double>(zero_f);
    std::span<const double> cp = t ? std::span<const double>(tr.fwd[t - 1].c) : std::span<const double>(zero_f);
    tr.fwd[t] = lstm_cell(fwd, inputs.row(t), hp, cp);
    std::copy(tr.fwd[t].h.begin(), tr.fwd[t].h.end(), out.row(t).begin());
  }
  for (std::size_t r = n; r-- > 0;) {
    bool last = r + 1 == n;
    std::span<const double> hp = last ? std::span<const double>(zero_b) : std::span<const double>(tr.bwd[r + 1].h);
    std::span<const double> cp = last ? std::span<const double>(zero_b) : std::span<const double>(tr.bwd[r + 1].c);
    tr.bwd[r] = lstm_cell(bwd, inputs.row(r), hp, cp);
    std::copy(tr.bwd[r].h.begin(), tr.bwd[r].h.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(hf));
  }
  return out;
}

namespace detail {

// Backpropagates one direction. `order` lists positions in processing order;
// d_h holds d(loss)/d(h) per position from the layer above.
inline void lstm_direction_backward(LstmDirection& p, const Matrix& inputs, const std::vector<LstmStep>& steps,
                                    const std::vector<std::size_t>& order, const Matrix& d_h, std::size_t col0,
                                    Matrix* d_inputs) {
  const std::size_t h = p.hidden();
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), da(4 * h), dh(h);
  std::vector<double> zero(h, 0.0);
  for (std::size_t k = order.size(); k-- > 0;) {
    const std::size_t t = order[k];
    const LstmStep& s = steps[t];
    const std::vector<double>& c_prev = k ? steps[order[k - 1]].c : zero;
    const std::vector<double>& h_prev = k ? steps[order[k - 1]].h : zero;
    for (std::size_t j = 0; j < h; ++j) dh[j] = d_h(t, col0 + j) + dh_next[j];
    for (std::size_t j = 0; j < h; ++j) {
      const double i = s.gates[j], f = s.gates[h + j], g = s.gates[2 * h + j], o = s.gates[3 * h + j];
      const double tc = s.tanh_c[j];
      const double dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
      da[j] = dc * g * i * (1.0 - i);
      da[h + j] = dc * c_prev[j] * f * (1.0 - f);
      da[2 * h + j] = dc * i * (1.0 - g * g);
      da[3 * h + j] = dh[j] * tc * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    outer_add(p.wx.grad, da, inputs.row(t));
    outer_add(p.wh.grad, da, h_prev);
    auto gb = p.b.grad.row(0);
    for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += da[j];
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    gemv_t_add(p.wh.value, da, dh_next);
    if (d_inputs) gemv_t_add(p.wx.value, da, d_inputs->row(t));
  }
}

}  // namespace detail

// Accumulates parameter gradients of both directions and returns d(loss)/d(inputs).
inline Matrix bilstm_backward(const Matrix& inputs, LstmDirection& fwd, LstmDirection& bwd, const BiLstmTrace& trace,
                              const Matrix& d_states) {
  const std::size_t n = inputs.rows();
  Matrix d_inputs(n, inputs.cols());
  std::vector<std::size_t> forward_order(n), backward_order(n);
  for (std::size_t t = 0; t < n; ++t) {
    forward_order[t] = t;
    backward_order[t] = n - 1 - t;
  }
  detail::lstm_direction_backward(fwd, inputs, trace.fwd, forward_order, d_states, 0, &d_inputs);
  detail::lstm_direction_backward(bwd, inputs, trace.bwd, backward_order, d_states, fwd.hidden(), &d_inputs);
  return d_inputs;
}

// ---------------------------------------------------------------------------
// Scorers

// Shared output layer: scores = W * features + b.
struct LinearLayer {
  Parameter w;
  Parameter b;

  LinearLayer() = default;
  LinearLayer(std::size_t out, std::size_t in) : w("out.w", out, in), b("out.b", 1, out) {}

  std::size_t out_dim() const { return w.value.rows(); }
  std::size_t in_dim() const { return w.value.cols(); }

  void randomize(Rng& rng) {
    w.value.randomize(rng, kInitScale);
    b.value.randomize(rng, kInitScale);
  }

  void apply(std::span<const double> x, std::span<double> out) const {
    std::copy(b.value.row(0).begin(), b.value.row(0).end(), out.begin());
    gemv_add(w.value, x, out);
  }

  // Accumulates dW, db and adds W^T d to d_x when given.
  void backward(std::span<const double> x, std::span<const double> d, std::span<double> d_x) {
    outer_add(w.grad, d, x);
    auto gb = b.grad.row(0);
    for (std::size_t k = 0; k < d.size(); ++k) gb[k] += d[k];
    if (!d_x.empty()) gemv_t_add(w.value, d, d_x);
  }
};

class WindowLinearScorer {
 public:
  struct Trace {
    std::vector<std::size_t> ids;  // padded: ids[i + radius] belongs to token i
  };

  WindowLinearScorer() = default;
  WindowLinearScorer(EmbeddingTable table, std::size_t radius, std::size_t output_dim)
      : table_(std::move(table)), radius_(radius), out_(output_dim, (2 * radius + 1) * table_.dim()) {}

  void randomize(Rng& rng) { out_.randomize(rng); }

  std::size_t radius() const { return radius_; }
  std::size_t output_dim() const { return out_.out_dim(); }
  EmbeddingTable& table() { return table_; }
  const EmbeddingTable& table() const { return table_; }
  LinearLayer& layer() { return out_; }
  const LinearLayer& layer() const { return out_; }

  Matrix forward(const SentenceInput& in, Trace* trace = nullptr) const {
    const std::size_t n = in.size(), d = table_.dim(), width = 2 * radius_ + 1;
    std::vector<std::size_t> ids(n + 2 * radius_, EmbeddingTable::kPad);
    for (std::size_t i = 0; i < n; ++i) ids[i + radius_] = table_.index_of(in.tokens[i]);
    Matrix scores(n, output_dim());
    std::vector<double> x(width * d);
    for (std::size_t i = 0; i < n; ++i) {
      gather(ids, i, x);
      out_.apply(x, scores.row(i));
    }
    if (trace) trace->ids = std::move(ids);
    return scores;
  }

  void backward(const SentenceInput& in, const Trace& trace, const Matrix& d_scores) {
    const std::size_t n = in.size(), d = table_.dim(), width = 2 * radius_ + 1;
    std::vector<double> x(width * d), dx(width * d);
    Parameter& emb = table_.parameter();
    for (std::size_t i = 0; i < n; ++i) {
      gather(trace.ids, i, x);
      std::fill(dx.begin(), dx.end(), 0.0);
      out_.backward(x, d_scores.row(i), table_.trainable() ? std::span<double>(dx) : std::span<double>());
      if (!table_.trainable()) continue;
      for (std::size_t w = 0; w < width; ++w) {
        const std::size_t id = trace.ids[i + w];
        emb.touch(id);
        auto g = emb.grad.row(id);
        for (std::size_t k = 0; k < d; ++k) g[k] += dx[w * d + k];
      }
    }
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p = {&out_.w, &out_.b};
    if (table_.trainable()) p.push_back(&table_.parameter());
    return p;
  }

 private:
  void gather(const std::vector<std::size_t>& ids, std::size_t i, std::vector<double>& x) const {
    const std::size_t d = table_.dim();
    for (std::size_t w = 0; w < 2 * radius_ + 1; ++w) {
      auto src = table_.vectors().row(ids[i + w]);
      std::copy(src.begin(), src.end(), x.begin() + static_cast<std::ptrdiff_t>(w * d));
    }
  }

  EmbeddingTable table_;
  std::size_t radius_ = 1;
  LinearLayer out_;
};

class BiLstmScorer {
 public:
  struct Trace {
    std::vector<std::size_t> ids;
    Matrix inputs;
    Matrix states;
    BiLstmTrace lstm;
  };

  BiLstmScorer() = default;
  BiLstmScorer(EmbeddingTable table, std::size_t hidden, std::size_t output_dim)
      : table_(std::move(table)),
        fwd_("lstm.fwd", table_.dim(), hidden),
        bwd_("lstm.bwd", table_.dim(), hidden),
        out_(output_dim, 2 * hidden) {}

  void randomize(Rng& rng) {
    fwd_.randomize(rng);
    bwd_.randomize(rng);
    out_.randomize(rng);
  }

  std::size_t hidden() const { return fwd_.hidden(); }
  std::size_t output_dim() const { return out_.out_dim(); }
  EmbeddingTable& table() { return table_; }
  const EmbeddingTable& table() const { return table_; }
  LstmDirection& forward_direction() { return fwd_; }
  LstmDirection& backward_direction() { return bwd_; }
  const LstmDirection& forward_direction() const { return fwd_; }
  const LstmDirection& backward_direction() const { return bwd_; }
  LinearLayer& layer() { return out_; }
  const LinearLayer& layer() const { return out_; }

  Matrix forward(const SentenceInput& in, Trace* trace = nullptr) const {
    Trace local;
    Trace& tr = trace ? *trace : local;
    const std::size_t n = in.size();
    tr.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) tr.ids[i] = table_.index_of(in.tokens[i]);
    tr.inputs = Matrix(n, table_.dim());
    for (std::size_t i = 0; i < n; ++i) {
      auto src = table_.vectors().row(tr.ids[i]);
      std::copy(src.begin(), src.end(), tr.inputs.row(i).begin());
    }
    Matrix scores(n, output_dim());
    if (n == 0) return scores;
    tr.states = bilstm_states(tr.inputs, fwd_, bwd_, &tr.lstm);
    for (std::size_t i = 0; i < n; ++i) out_.apply(tr.states.row(i), scores.row(i));
    return scores;
  }

  void backward(const SentenceInput& in, const Trace& trace, const Matrix& d_scores) {
    const std::size_t n = in.size();
    if (n == 0) return;
    Matrix d_states(n, 2 * hidden());
    for (std::size_t i = 0; i < n; ++i) out_.backward(trace.states.row(i), d_scores.row(i), d_states.row(i));
    Matrix d_inputs = bilstm_backward(trace.inputs, fwd_, bwd_, trace.lstm, d_states);
    if (!table_.trainable()) return;
    Parameter& emb = table_.parameter();
    for (std::size_t i = 0; i < n; ++i) {
      emb.touch(trace.ids[i]);
      auto g = emb.grad.row(trace.ids[i]);
      auto di = d_inputs.row(i);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += di[k];
    }
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p = {&fwd_.wx, &fwd_.wh, &fwd_.b, &bwd_.wx, &bwd_.wh, &bwd_.b, &out_.w, &out_.b};
    if (table_.trainable()) p.push_back(&table_.parameter());
    return p;
  }

 private:
  EmbeddingTable table_;
  LstmDirection fwd_;
  LstmDirection bwd_;
  LinearLayer out_;
};

// Linear map over vectors produced outside the toolkit (e.g. a contextual
// encoder). The vectors are attached at run time and are not serialized.
class PrecomputedScorer {
 public:
  struct Trace {};

  PrecomputedScorer() = default;
  PrecomputedScorer(std::size_t input_dim, std::size_t output_dim) : out_(output_dim, input_dim) {}

  void randomize(Rng& rng) { out_.randomize(rng); }
  void attach(std::shared_ptr<const PrecomputedVectors> v) {
    if (v && v->size() && v->dim() != out_.in_dim())
      throw DimensionMismatch("precomputed vectors have dimension " + std::to_string(v->dim()) + ", scorer expects " +
                              std::to_string(out_.in_dim()));
    vectors_ = std::move(v);
  }
  bool attached() const { return vectors_ != nullptr; }

  std::size_t input_dim() const { return out_.in_dim(); }
  std::size_t output_dim() const { return out_.out_dim(); }
  LinearLayer& layer() { return out_; }
  const LinearLayer& layer() const { return out_; }

  Matrix forward(const SentenceInput& in, Trace* = nullptr) const {
    Matrix scores(in.size(), output_dim());
    if (in.size() == 0) return scores;
    const Matrix& v = lookup(in);
    for (std::size_t i = 0; i < in.size(); ++i) out_.apply(v.row(i), scores.row(i));
    return scores;
  }

  void backward(const SentenceInput& in, const Trace&, const Matrix& d_scores) {
    if (in.size() == 0) return;
    const Matrix& v = lookup(in);
    for (std::size_t i = 0; i < in.size(); ++i) out_.backward(v.row(i), d_scores.row(i), {});
  }

  std::vector<Parameter*> parameters() { return {&out_.w, &out_.b}; }

 private:
  const Matrix& lookup(const SentenceInput& in) const {
    if (!vectors_) throw MissingVectors("precomputed scorer has no vectors attached");
    return vectors_->at(in.paper_id, in.sentence_index, in.size());
  }

  LinearLayer out_;
  std::shared_ptr<const PrecomputedVectors> vectors_;
};

// Type-erased scorer with value semantics.
class EmissionScorer {
 public:
  using Variant = std::variant<WindowLinearScorer, BiLstmScorer, PrecomputedScorer>;
  using Trace = std::variant<WindowLinearScorer::Trace, BiLstmScorer::Trace, PrecomputedScorer::Trace>;

  EmissionScorer() = default;
  EmissionScorer(WindowLinearScorer s) : impl_(std::move(s)) {}
  EmissionScorer(BiLstmScorer s) : impl_(std::move(s)) {}
  EmissionScorer(PrecomputedScorer s) : impl_(std::move(s)) {}

  static EmissionScorer window_linear(EmbeddingTable table, std::size_t radius, std::size_t output_dim, Rng& rng) {
    WindowLinearScorer s(std::move(table), radius, output_dim);
    s.randomize(rng);
    return s;
  }
  static EmissionScorer bilstm(EmbeddingTable table, std::size_t hidden, std::size_t output_dim, Rng& rng) {
    BiLstmScorer s(std::move(table), hidden, output_dim);
    s.randomize(rng);
    return s;
  }
  static EmissionScorer precomputed(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
    PrecomputedScorer s(input_dim, output_dim);
    s.randomize(rng);
    return s;
  }

  ScorerKind kind() const { return static_cast<ScorerKind>(impl_.index()); }
  std::size_t output_dim() const {
    return std::visit([](const auto& s) { return s.output_dim(); }, impl_);
  }

  Matrix forward(const SentenceInput& in, Trace* trace = nullptr) const {
    return std::visit(
        [&](const auto& s) -> Matrix {
          using T = typename std::decay_t<decltype(s)>::Trace;
          if (!trace) return s.forward(in, nullptr);
          *trace = T{};
          return s.forward(in, &std::get<T>(*trace));
        },
        impl_);
  }

  void backward(const SentenceInput& in, const Trace& trace, const Matrix& d_scores) {
    std::visit(
        [&](auto& s) {
          using T = typename std::decay_t<decltype(s)>::Trace;
          s.backward(in, std::get<T>(trace), d_scores);
        },
        impl_);
  }

  std::vector<Parameter*> parameters() {
    return std::visit([](auto& s) { return s.parameters(); }, impl_);
  }

  // Embedding table of token-based scorers, or null for precomputed ones.
  const EmbeddingTable* table() const {
    if (auto* w = std::get_if<WindowLinearScorer>(&impl_)) return &w->table();
    if (auto* b = std::get_if<BiLstmScorer>(&impl_)) return &b->table();
    return nullptr;
  }
  EmbeddingTable* table() { return const_cast<EmbeddingTable*>(std::as_const(*this).table()); }

  void attach(std::shared_ptr<const PrecomputedVectors> v) {
    if (auto* p = std::get_if<PrecomputedScorer>(&impl_)) p->attach(std::move(v));
  }

  Variant& variant() { return impl_; }
  const Variant& variant() const { return impl_; }

 private:
  Variant impl_;
};

inline Matrix emission_scores(const SentenceInput& in, const EmissionScorer& scorer, const LabelScheme& scheme) {
  if (scorer.output_dim() != scheme.size())
    throw DimensionMismatch("scorer emits " + std::to_string(scorer.output_dim()) + " scores but the " +
                            scheme.descriptor() + " scheme has " + std::to_string(scheme.size()) + " labels");
  return scorer.forward(in);
}

}  // namespace methex
