#pragma once

// Central finite-difference oracle used by the unit and acceptance suites.
// Independent of the backward pass it checks: it only calls forward
// evaluations of the function under test.

#include <cmath>
#include <functional>
#include <vector>

#include "semkit/rng.hpp"
#include "semkit/tensor.hpp"

namespace semkit::testing {

// f maps leaf values -> scalar loss (fresh graph per call).
// Returns max relative error between analytic and central-difference
// gradients over all inputs. step 1e-5, 64-bit throughout.
inline double fd_max_rel_error(
    const std::function<double(const std::vector<std::vector<double>>&,
                               std::vector<std::vector<double>>*)>& f,
    std::vector<std::vector<double>> inputs, double step = 1e-5) {
  std::vector<std::vector<double>> analytic;
  f(inputs, &analytic);
  double max_rel = 0.0;
  for (size_t v = 0; v < inputs.size(); ++v) {
    for (size_t i = 0; i < inputs[v].size(); ++i) {
      const double keep = inputs[v][i];
      inputs[v][i] = keep + step;
      const double up = f(inputs, nullptr);
      inputs[v][i] = keep - step;
      const double dn = f(inputs, nullptr);
      inputs[v][i] = keep;
      const double fd = (up - dn) / (2 * step);
      const double an = analytic[v][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

inline std::vector<double> random_vec(semkit::Rng& rng, int64_t n, double lo = -2,
                                      double hi = 2) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace semkit::testing
