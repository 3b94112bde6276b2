#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "methex/matrix.hpp"

namespace methex {

struct AdamWConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Row-sparse parameters are updated lazily:
// only rows that received gradient this step move, and their bias
// correction uses the global step count.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }
  void set_config(const AdamWConfig& c) { config_ = c; }
  long steps() const { return step_; }

  // `scale` multiplies every gradient (e.g. 1/batch size).
  void step(const std::vector<Parameter*>& params, double scale = 1.0) {
    if (moments_.size() != params.size()) {
      moments_.clear();
      for (const Parameter* p : params) moments_.push_back({Matrix(p->value.rows(), p->value.cols()),
                                                            Matrix(p->value.rows(), p->value.cols())});
    }
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Moments& m = moments_[k];
      if (m.first.rows() != p.value.rows() || m.first.cols() != p.value.cols()) {
        // A vocabulary that grew keeps the moments of its existing rows.
        Moments grown{Matrix(p.value.rows(), p.value.cols()), Matrix(p.value.rows(), p.value.cols())};
        if (m.first.cols() == p.value.cols() && m.first.rows() <= p.value.rows()) {
          std::copy(m.first.data().begin(), m.first.data().end(), grown.first.data().begin());
          std::copy(m.second.data().begin(), m.second.data().end(), grown.second.data().begin());
        }
        m = std::move(grown);
      }
      auto update = [&](std::size_t idx) {
        double& w = p.value.data()[idx];
        const double g = p.grad.data()[idx] * scale;
        double& m1 = m.first.data()[idx];
        double& m2 = m.second.data()[idx];
        m1 = config_.beta1 * m1 + (1.0 - config_.beta1) * g;
        m2 = config_.beta2 * m2 + (1.0 - config_.beta2) * g * g;
        const double mhat = m1 / c1, vhat = m2 / c2;
        w -= config_.learning_rate * (mhat / (std::sqrt(vhat) + config_.epsilon) + config_.weight_decay * w);
      };
      if (p.row_sparse) {
        const std::size_t cols = p.value.cols();
        for (std::size_t r : p.touched)
          for (std::size_t c = 0; c < cols; ++c) update(r * cols + c);
      } else {
        for (std::size_t idx = 0; idx < p.value.size(); ++idx) update(idx);
      }
    }
  }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };

  AdamWConfig config_;
  long step_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace methex
