#pragma once

#include "pwadeepc/pwa_system.hpp"

#include <random>
#include <vector>

namespace testutil {

inline pwadeepc::Vector scalar(double v) { return pwadeepc::Vector::Constant(1, v); }

inline std::vector<pwadeepc::Vector> random_inputs(size_t n, unsigned seed, double lo = -4, double hi = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<pwadeepc::Vector> u;
  for (size_t k = 0; k < n; ++k) u.push_back(scalar(d(rng)));
  return u;
}

}  // namespace testutil
