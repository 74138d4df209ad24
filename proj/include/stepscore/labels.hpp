#pragma once

#include "stepscore/common.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stepscore {

using ClassId = int;

/// The seven frame classes: six protocol steps (ids 0..5) and background (id 6).
struct LabelTaxonomy {
  static constexpr int size() { return kNumClasses; }
  static constexpr ClassId background() { return kBackgroundClass; }
  static constexpr bool is_step(ClassId c) { return c >= 0 && c < kNumSteps; }
  static constexpr bool is_valid(ClassId c) { return c >= 0 && c < kNumClasses; }
  static constexpr ClassId step(int i) { return i - 1; }  // i in 1..6

  static std::string name(ClassId c) {
    if (c == kBackgroundClass) return "background";
    if (is_step(c)) return "step" + std::to_string(c + 1);
    return "invalid(" + std::to_string(c) + ")";
  }
};

enum class StepAttribute : std::uint8_t { NE = 0, EN = 1, ES = 2 };

using StepAttributes = std::array<StepAttribute, kNumSteps>;

inline std::string_view to_string(StepAttribute a) {
  switch (a) {
    case StepAttribute::NE: return "NE";
    case StepAttribute::EN: return "EN";
    case StepAttribute::ES: return "ES";
  }
  return "?";
}

struct Run {
  ClassId cls = 0;
  std::int64_t length = 0;
  friend bool operator==(const Run&, const Run&) = default;
};

/// Run-length encoded per-frame labels.
///
/// Construction does not enforce the canonical form so that invalid records
/// can be represented and reported by validation; `violations()` lists every
/// broken invariant.
class FrameLabelSequence {
 public:
  FrameLabelSequence() = default;
  explicit FrameLabelSequence(std::vector<Run> runs) : runs_(std::move(runs)) {}

  /// Collapses a per-frame labeling into maximal runs.
  static FrameLabelSequence encode(std::span<const ClassId> frames) {
    std::vector<Run> runs;
    for (ClassId c : frames) {
      if (!runs.empty() && runs.back().cls == c) {
        ++runs.back().length;
      } else {
        runs.push_back({c, 1});
      }
    }
    return FrameLabelSequence(std::move(runs));
  }

  std::vector<ClassId> decode() const {
    std::vector<ClassId> out;
    out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(frames(), 0)));
    for (const auto& r : runs_) out.insert(out.end(), static_cast<std::size_t>(std::max<std::int64_t>(r.length, 0)), r.cls);
    return out;
  }

  std::int64_t frames() const {
    std::int64_t t = 0;
    for (const auto& r : runs_) t += r.length;
    return t;
  }

  const std::vector<Run>& runs() const { return runs_; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (runs_.empty()) v.emplace_back("labels: empty sequence (T must be >= 1)");
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (!LabelTaxonomy::is_valid(runs_[i].cls)) {
        v.push_back("labels: run " + std::to_string(i) + " has unknown class " + std::to_string(runs_[i].cls));
      }
      if (runs_[i].length < 1) {
        v.push_back("labels: run " + std::to_string(i) + " has non-positive length");
      }
      if (i > 0 && runs_[i].cls == runs_[i - 1].cls) {
        v.push_back("labels: runs " + std::to_string(i - 1) + " and " + std::to_string(i) +
                    " share class " + std::to_string(runs_[i].cls) + " (not canonical)");
      }
    }
    return v;
  }

  bool is_valid() const { return violations().empty(); }

  friend bool operator==(const FrameLabelSequence&, const FrameLabelSequence&) = default;

 private:
  std::vector<Run> runs_;
};

}  // namespace stepscore
