#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sinkformer {

inline constexpr std::uint64_t kSelftestSeed = 20240611;

namespace tolerance {
inline constexpr double kClassicalEquivalence = 1e-12;
inline constexpr double kFactorization = 1e-6;
inline constexpr double kRowExact = 1e-15;
inline constexpr double kColumnViolation = 1e-9;
inline constexpr double kZeroCostProduct = 1e-10;
inline constexpr double kRoundtripW1 = 1e-6;
inline constexpr double kBlockMarginal = 1e-12;
inline constexpr double kShiftW1 = 1e-8;
inline constexpr double kCostSequenceRatio = 1e-3;
inline constexpr double kGradientRelative = 1e-4;
/// Gradient magnitudes below this are compared absolutely.
inline constexpr double kGradientFloor = 1e-6;
inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kPlantedRelW1 = 0.1;
inline constexpr double kProductRelW1 = 1e-3;
inline constexpr double kForwardMarginal = 1e-9;
}  // namespace tolerance

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

inline constexpr int kCriterionCount = 9;

/// Runs acceptance criterion `id` (1..9). A criterion that exceeds its
/// runtime budget fails.
CriterionResult run_criterion(int id, std::uint64_t seed = kSelftestSeed);

/// All criteria in order; `quick` skips the training experiment.
std::vector<CriterionResult> run_selftest(bool quick, std::uint64_t seed = kSelftestSeed);

std::string format_result_line(const CriterionResult& r);

}  // namespace sinkformer
