#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pipmn/rng.hpp"
#include "pipmn/tensor.hpp"

namespace pipmn {

struct GradCheckCoordinate {
  std::string param;
  long index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  long coords_checked = 0;
  bool all_finite = true;
  GradCheckCoordinate worst;

  bool pass(double tol) const { return all_finite && coords_checked > 0 && max_rel_err < tol; }
};

// Central-difference gradient verification, always in 64-bit.
//
// `forward` must deterministically rebuild the computation and return the
// scalar loss; it records on the given tape when non-null. One taped run
// produces the analytic gradients, then each sampled parameter coordinate is
// perturbed by h = 1e-6 * max(1, |theta|) and compared against
// (f(theta+h) - f(theta-h)) / 2h. Coordinates with |analytic| + |numeric|
// below 1e-8 are skipped. max_coords_per_param == 0 checks every coordinate.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(Tape<double>*)>& forward,
    const std::vector<Parameter<double>*>& params, std::uint64_t seed = 0,
    long max_coords_per_param = 0) {
  GradCheckReport report;
  for (Parameter<double>* p : params) p->value.zero_grad();

  Tape<double> tape;
  Tensor<double> loss = forward(&tape);
  tape.backward(loss);
  if (!std::isfinite(loss.item())) report.all_finite = false;

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<double>* p : params) analytic.push_back(p->value.grad_values());

  Rng rng(Rng::mix(seed, 0x67726463ULL));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& p = *params[k];
    const long n = p.value.size();
    std::vector<long> coords(n);
    std::iota(coords.begin(), coords.end(), 0L);
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (long i : coords) {
      double* theta = p.value.data();
      const double orig = theta[i];
      const double h = 1e-6 * std::max(1.0, std::abs(orig));
      theta[i] = orig + h;
      const double f_plus = forward(nullptr).item();
      theta[i] = orig - h;
      const double f_minus = forward(nullptr).item();
      theta[i] = orig;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        report.all_finite = false;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[k][static_cast<std::size_t>(i)];
      const double scale = std::abs(a) + std::abs(numeric);
      if (scale < 1e-8) continue;
      const double rel = std::abs(a - numeric) / scale;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {p.name, i, a, numeric, rel};
      }
    }
  }
  return report;
}

}  // namespace pipmn
