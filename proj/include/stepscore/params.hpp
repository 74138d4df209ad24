#pragma once

#include "stepscore/common.hpp"
#include "stepscore/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stepscore {

/// A learnable tensor and its accumulated gradient.
struct Param {
  Mat value;
  Mat grad;
  bool trainable = true;

  Param() = default;
  Param(Index rows, Index cols) : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init_uniform(Rng& rng, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
    for (Index i = 0; i < value.size(); ++i) value.data()[i] = rng.uniform(-bound, bound);
  }
};

/// Visits `p` under `prefix + name`. Helper for the for_each_param walkers.
template <class F>
void visit_param(F& f, const std::string& prefix, const char* name, Param& p) {
  f(prefix + name, p);
}

}  // namespace stepscore
