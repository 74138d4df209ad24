#pragma once

#include "stepscore/common.hpp"

#include <cmath>

namespace stepscore {

/// Per-frame feature matrix (T x D). Channels are laid out appearance first,
/// then motion, each occupying half of D.
struct FeatureSequence {
  Mat values;

  Index frames() const { return values.rows(); }
  Index dim() const { return values.cols(); }

  bool all_finite() const { return values.allFinite(); }

  /// Appearance-only view (first half of the channels).
  Mat appearance() const { return values.leftCols(values.cols() / 2); }

  /// Channels the network consumes under the given feature flag.
  Mat model_input(bool use_motion) const { return use_motion ? values : appearance(); }

  friend bool operator==(const FeatureSequence& a, const FeatureSequence& b) {
    return a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
           a.values == b.values;
  }
};

}  // namespace stepscore
