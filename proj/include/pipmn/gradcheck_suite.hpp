#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipmn/gradcheck.hpp"

namespace pipmn {

struct OpCheckResult {
  std::string op;
  GradCheckReport report;
};

// 64-bit finite-difference battery over every differentiable op, each
// dense-MLP sub-block, and a tiny full model (B=2, T=8, in_dim=6, kappas=[2,3],
// L=3, alpha=2, 3 classes). Shapes are randomized within B<=2, D<=8, L<=6.
std::vector<OpCheckResult> run_gradcheck_suite(std::uint64_t seed);

// The tiny-full-model configuration used by the suite; exposed for tests.
// (Defined in gradcheck_suite.cpp to avoid pulling model.hpp in here.)
double suite_max_rel_err(const std::vector<OpCheckResult>& results);

inline constexpr double kGradCheckTolerance = 1e-4;

}  // namespace pipmn
