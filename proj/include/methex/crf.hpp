#pragma once

// Linear-chain CRF over an n x |Y| emission matrix and a (|Y|+2) x (|Y|+2)
// transition matrix whose last two states are the virtual START and STOP.
//
// path score = T[START, y0] + sum_i E[i, yi] + sum_i T[y(i-1), yi] + T[y(n-1), STOP]
//
// Masked transitions score `mask_penalty`: -inf gives exact exclusion (used
// for decoding), a large finite negative value keeps training gradients
// finite.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "methex/error.hpp"
#include "methex/label_space.hpp"
#include "methex/matrix.hpp"

namespace methex {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kDefaultMaskPenalty = -1e4;

// Square boolean matrix of allowed transitions.
class TransitionMask {
 public:
  TransitionMask() = default;
  // Everything allowed except transitions into START and out of STOP.
  explicit TransitionMask(std::size_t num_labels) : n_(num_labels + 2), data_(n_ * n_, 1) {
    for (std::size_t a = 0; a < n_; ++a) {
      set(a, start(), false);
      set(stop(), a, false);
    }
    set(start(), stop(), false);
  }

  std::size_t num_labels() const { return n_ - 2; }
  std::size_t states() const { return n_; }
  std::size_t start() const { return n_ - 2; }
  std::size_t stop() const { return n_ - 1; }

  bool operator()(std::size_t from, std::size_t to) const { return data_[from * n_ + to] != 0; }
  void set(std::size_t from, std::size_t to, bool allowed) { data_[from * n_ + to] = allowed ? 1 : 0; }

  friend bool operator==(const TransitionMask&, const TransitionMask&) = default;

 private:
  std::size_t n_ = 2;
  std::vector<char> data_ = std::vector<char>(4, 0);
};

// Forbids entering an I label except from the B or I of the same group; this
// covers O -> I and START -> I.
inline TransitionMask bio_mask(const LabelScheme& scheme) {
  TransitionMask mask(scheme.size());
  for (std::size_t to = 0; to < scheme.size(); ++to) {
    const FineLabel& t = scheme.label(to);
    if (t.indicator != CoarseLabel::I) continue;
    mask.set(mask.start(), to, false);
    for (std::size_t from = 0; from < scheme.size(); ++from) {
      const FineLabel& f = scheme.label(from);
      bool ok = f.indicator != CoarseLabel::O && f.group == t.group;
      mask.set(from, to, ok);
    }
  }
  return mask;
}

// Transition scores plus the mask that constrains them.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::size_t num_labels)
      : scores_("transitions", num_labels + 2, num_labels + 2), mask_(num_labels) {}
  TransitionMatrix(std::size_t num_labels, TransitionMask mask)
      : scores_("transitions", num_labels + 2, num_labels + 2), mask_(std::move(mask)) {}

  std::size_t num_labels() const { return mask_.num_labels(); }
  std::size_t start() const { return mask_.start(); }
  std::size_t stop() const { return mask_.stop(); }

  Parameter& parameter() { return scores_; }
  const Matrix& scores() const { return scores_.value; }
  Matrix& scores() { return scores_.value; }
  const TransitionMask& mask() const { return mask_; }
  void set_mask(TransitionMask m) { mask_ = std::move(m); }

  double score(std::size_t from, std::size_t to, double penalty) const {
    return mask_(from, to) ? scores_.value(from, to) : penalty;
  }

  // Zeroes gradient entries of masked transitions; they are not parameters.
  void mask_gradient() {
    for (std::size_t a = 0; a < mask_.states(); ++a)
      for (std::size_t b = 0; b < mask_.states(); ++b)
        if (!mask_(a, b)) scores_.grad(a, b) = 0.0;
  }

  void randomize(Rng& rng, double scale) {
    scores_.value.randomize(rng, scale);
    for (std::size_t a = 0; a < mask_.states(); ++a)
      for (std::size_t b = 0; b < mask_.states(); ++b)
        if (!mask_(a, b)) scores_.value(a, b) = 0.0;
  }

 private:
  Parameter scores_;
  TransitionMask mask_;
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double path_score(const Matrix& emissions, const TransitionMatrix& t, std::span<const std::size_t> path,
                         double penalty = kNegInf) {
  if (path.empty()) return 0.0;
  double s = t.score(t.start(), path[0], penalty);
  for (std::size_t i = 0; i < path.size(); ++i) {
    s += emissions(i, path[i]);
    if (i) s += t.score(path[i - 1], path[i], penalty);
  }
  return s + t.score(path.back(), t.stop(), penalty);
}

struct ForwardBackward {
  double log_z = kNegInf;
  Matrix alpha;  // alpha(i, y): log-sum of prefixes ending in y at i, including E[i, y]
  Matrix beta;   // beta(i, y): log-sum of suffixes after y at i, including STOP
};

inline ForwardBackward forward_backward(const Matrix& emissions, const TransitionMatrix& t,
                                        double penalty = kNegInf) {
  const std::size_t n = emissions.rows(), Y = emissions.cols();
  ForwardBackward fb{kNegInf, Matrix(n, Y, kNegInf), Matrix(n, Y, kNegInf)};
  if (n == 0) return fb;
  std::vector<double> buf(Y);
  for (std::size_t y = 0; y < Y; ++y) fb.alpha(0, y) = t.score(t.start(), y, penalty) + emissions(0, y);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t a = 0; a < Y; ++a) buf[a] = fb.alpha(i - 1, a) + t.score(a, y, penalty);
      fb.alpha(i, y) = log_sum_exp(buf) + emissions(i, y);
    }
  for (std::size_t y = 0; y < Y; ++y) fb.beta(n - 1, y) = t.score(y, t.stop(), penalty);
  for (std::size_t i = n - 1; i-- > 0;)
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t b = 0; b < Y; ++b) buf[b] = t.score(y, b, penalty) + emissions(i + 1, b) + fb.beta(i + 1, b);
      fb.beta(i, y) = log_sum_exp(buf);
    }
  for (std::size_t y = 0; y < Y; ++y) buf[y] = fb.alpha(n - 1, y) + fb.beta(n - 1, y);
  fb.log_z = log_sum_exp(buf);
  return fb;
}

// log of the summed exponentiated scores of every label path; n >= 1.
inline double log_partition(const Matrix& emissions, const TransitionMatrix& t, double penalty = kNegInf) {
  const std::size_t n = emissions.rows(), Y = emissions.cols();
  if (n == 0) return 0.0;
  std::vector<double> alpha(Y), next(Y), buf(Y);
  for (std::size_t y = 0; y < Y; ++y) alpha[y] = t.score(t.start(), y, penalty) + emissions(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t a = 0; a < Y; ++a) buf[a] = alpha[a] + t.score(a, y, penalty);
      next[y] = log_sum_exp(buf) + emissions(i, y);
    }
    std::swap(alpha, next);
  }
  for (std::size_t y = 0; y < Y; ++y) buf[y] = alpha[y] + t.score(y, t.stop(), penalty);
  return log_sum_exp(buf);
}

// Per-position label marginals p(y_i = y).
inline Matrix marginals(const Matrix& emissions, const TransitionMatrix& t, double penalty = kNegInf) {
  auto fb = forward_backward(emissions, t, penalty);
  Matrix p(emissions.rows(), emissions.cols());
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t y = 0; y < p.cols(); ++y) p(i, y) = std::exp(fb.alpha(i, y) + fb.beta(i, y) - fb.log_z);
  return p;
}

struct ViterbiResult {
  std::vector<std::size_t> labels;
  double score = kNegInf;
};

// Highest-scoring path under exact mask semantics. Ties go to the lowest
// label index, both for the final label and at every backtracking step.
inline ViterbiResult viterbi(const Matrix& emissions, const TransitionMatrix& t) {
  const std::size_t n = emissions.rows(), Y = emissions.cols();
  ViterbiResult r;
  if (n == 0) {
    r.score = 0.0;
    return r;
  }
  Matrix delta(n, Y, kNegInf);
  std::vector<std::size_t> back(n * Y, 0);
  for (std::size_t y = 0; y < Y; ++y) delta(0, y) = t.score(t.start(), y, kNegInf) + emissions(0, y);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t y = 0; y < Y; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t a = 0; a < Y; ++a) {
        double v = delta(i - 1, a) + t.score(a, y, kNegInf);
        if (v > best) {
          best = v;
          arg = a;
        }
      }
      delta(i, y) = best + emissions(i, y);
      back[i * Y + y] = arg;
    }
  double best = kNegInf;
  std::size_t last = 0;
  for (std::size_t y = 0; y < Y; ++y) {
    double v = delta(n - 1, y) + t.score(y, t.stop(), kNegInf);
    if (v > best) {
      best = v;
      last = y;
    }
  }
  if (best == kNegInf) throw NoValidPath("every label path is masked out");
  r.labels.resize(n);
  r.labels[n - 1] = last;
  for (std::size_t i = n - 1; i > 0; --i) r.labels[i - 1] = back[i * Y + r.labels[i]];
  r.score = path_score(emissions, t, r.labels);
  return r;
}

inline bool path_allowed(const TransitionMask& mask, std::span<const std::size_t> path) {
  if (path.empty()) return true;
  if (!mask(mask.start(), path[0]) || !mask(path.back(), mask.stop())) return false;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!mask(path[i - 1], path[i])) return false;
  return true;
}

struct CrfGradients {
  double loss = 0.0;
  Matrix d_emissions;    // n x |Y|
  Matrix d_transitions;  // (|Y|+2) x (|Y|+2), zero on masked entries
};

// Negative log-likelihood of the gold path and its gradients, by forward-backward.
inline CrfGradients nll_and_gradients(const Matrix& emissions, const TransitionMatrix& t,
                                      std::span<const std::size_t> gold, double penalty = kDefaultMaskPenalty) {
  const std::size_t n = emissions.rows(), Y = emissions.cols();
  if (gold.size() != n) throw InvalidGold("gold path length differs from the sentence length");
  for (std::size_t y : gold)
    if (y >= Y) throw InvalidGold("gold label index " + std::to_string(y) + " out of range");
  if (!path_allowed(t.mask(), gold)) throw InvalidGold("gold path uses a masked transition");

  CrfGradients g{0.0, Matrix(n, Y), Matrix(Y + 2, Y + 2)};
  if (n == 0) return g;
  auto fb = forward_backward(emissions, t, penalty);
  g.loss = std::max(0.0, fb.log_z - path_score(emissions, t, gold, penalty));

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < Y; ++y) g.d_emissions(i, y) = std::exp(fb.alpha(i, y) + fb.beta(i, y) - fb.log_z);
  for (std::size_t y = 0; y < Y; ++y) {
    g.d_transitions(t.start(), y) += std::exp(t.score(t.start(), y, penalty) + emissions(0, y) + fb.beta(0, y) - fb.log_z);
    g.d_transitions(y, t.stop()) += std::exp(fb.alpha(n - 1, y) + t.score(y, t.stop(), penalty) - fb.log_z);
  }
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t a = 0; a < Y; ++a)
      for (std::size_t b = 0; b < Y; ++b) {
        if (!t.mask()(a, b)) continue;
        g.d_transitions(a, b) +=
            std::exp(fb.alpha(i - 1, a) + t.score(a, b, penalty) + emissions(i, b) + fb.beta(i, b) - fb.log_z);
      }

  for (std::size_t i = 0; i < n; ++i) g.d_emissions(i, gold[i]) -= 1.0;
  g.d_transitions(t.start(), gold[0]) -= 1.0;
  g.d_transitions(gold[n - 1], t.stop()) -= 1.0;
  for (std::size_t i = 1; i < n; ++i) g.d_transitions(gold[i - 1], gold[i]) -= 1.0;
  for (std::size_t a = 0; a < Y + 2; ++a)
    for (std::size_t b = 0; b < Y + 2; ++b)
      if (!t.mask()(a, b)) g.d_transitions(a, b) = 0.0;
  return g;
}

// Per-token softmax cross-entropy, the objective of CRF-free decoders.
inline CrfGradients token_cross_entropy(const Matrix& emissions, std::span<const std::size_t> gold) {
  const std::size_t n = emissions.rows(), Y = emissions.cols();
  if (gold.size() != n) throw InvalidGold("gold path length differs from the sentence length");
  CrfGradients g{0.0, Matrix(n, Y), Matrix()};
  for (std::size_t i = 0; i < n; ++i) {
    if (gold[i] >= Y) throw InvalidGold("gold label index out of range");
    auto row = emissions.row(i);
    const double lse = log_sum_exp(row);
    g.loss += lse - row[gold[i]];
    for (std::size_t y = 0; y < Y; ++y) g.d_emissions(i, y) = std::exp(row[y] - lse);
    g.d_emissions(i, gold[i]) -= 1.0;
  }
  return g;
}

struct SoftmaxDecode {
  std::vector<std::size_t> labels;
  std::size_t repairs = 0;
};

// Turns every I that does not continue a span of its own group into the
// matching B ("leading I -> B").
inline std::size_t repair_bio(std::vector<std::size_t>& labels, const LabelScheme& scheme) {
  std::size_t repairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const FineLabel cur = scheme.label(labels[i]);
    if (cur.indicator != CoarseLabel::I) continue;
    bool continues = false;
    if (i > 0) {
      const FineLabel& prev = scheme.label(labels[i - 1]);
      continues = prev.indicator != CoarseLabel::O && prev.group == cur.group;
    }
    if (!continues) {
      labels[i] = scheme.index(FineLabel{CoarseLabel::B, cur.group});
      ++repairs;
    }
  }
  return repairs;
}

// Per-token argmax (lowest index on ties) followed by the BIO repair.
inline SoftmaxDecode softmax_decode(const Matrix& emissions, const LabelScheme& scheme) {
  SoftmaxDecode d;
  d.labels.resize(emissions.rows());
  for (std::size_t i = 0; i < emissions.rows(); ++i) {
    auto row = emissions.row(i);
    d.labels[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  d.repairs = repair_bio(d.labels, scheme);
  return d;
}

}  // namespace methex
