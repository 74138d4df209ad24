#pragma once

#include "stepscore/model.hpp"
#include "stepscore/params.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace stepscore {

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction; weight decay is added to the gradient (L2).
/// Moment buffers follow the model's parameter visiting order.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(Model& model) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t i = 0;
    model.for_each_param([&](const std::string&, Param& p) {
      if (i == m_.size()) {
        m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
      }
      Mat& m = m_[i];
      Mat& v = v_[i];
      ++i;
      if (!p.trainable) return;
      Mat g = p.grad;
      if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * p.value;
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      p.value.array() -= cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    });
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace stepscore
