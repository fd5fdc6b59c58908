#pragma once

// Derivative-free simplex minimization.

#include "btmap/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace btmap {

struct NelderMeadOptions {
  double ftol = 1e-4;  // absolute spread of objective values across the simplex
  int max_evals = 500;
  double initial_step = 0.5;
};

struct NelderMeadResult {
  Vector x;
  double fx = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

/// Minimizes f. Non-finite objective values are treated as +inf.
template <class F>
NelderMeadResult nelder_mead(F&& f, const Vector& x0, const NelderMeadOptions& opt = {}) {
  const Index d = x0.size();
  NelderMeadResult res;
  auto eval = [&](const Vector& x) {
    ++res.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Vector> pts(static_cast<std::size_t>(d + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(d + 1));
  vals[0] = eval(x0);
  for (Index k = 0; k < d; ++k) {
    pts[static_cast<std::size_t>(k + 1)][k] += opt.initial_step;
    vals[static_cast<std::size_t>(k + 1)] = eval(pts[static_cast<std::size_t>(k + 1)]);
  }

  std::vector<std::size_t> idx(pts.size());
  while (true) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    const double spread = vals[worst] - vals[best];
    if (std::isfinite(spread) && spread <= opt.ftol) {
      res.converged = true;
      break;
    }
    if (res.evals >= opt.max_evals) break;

    Vector centroid = Vector::Zero(d);
    for (std::size_t r = 0; r + 1 < idx.size(); ++r) centroid += pts[idx[r]];
    centroid /= static_cast<double>(d);

    const Vector xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) pts[worst] = xe, vals[worst] = fe;
      else pts[worst] = xr, vals[worst] = fr;
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr, vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                              : Vector(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc, vals[worst] = fc;
      continue;
    }
    for (std::size_t r = 1; r < idx.size(); ++r) {
      auto& p = pts[idx[r]];
      p = pts[best] + 0.5 * (p - pts[best]);
      vals[idx[r]] = eval(p);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(it - vals.begin())];
  res.fx = *it;
  return res;
}

}  // namespace btmap
