#pragma once

// Evaluation of a fitted posterior map: GP prediction, forward map to
// standard-normal coefficients, recursive inverse, predictive density and
// samplers.

#include "btmap/common.hpp"
#include "btmap/map_fit.hpp"
#include "btmap/parallel.hpp"
#include "btmap/special.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace btmap {

struct Prediction {
  double mean = 0.0;
  double var = 0.0;  // v >= 0, in units of the kernel K
};

/// Posterior mean f_hat(x*) and variance term v(x*) of one row's GP.
inline Prediction gp_predict(const FittedRow& row, const Vector& xstar) {
  require(xstar.size() == row.m(), ErrorKind::usage, "prediction input has wrong arity");
  if (row.m() == 0) return {};
  const Matrix xs = xstar.transpose();
  const Vector kstar = kernel_eval(row.prior, row.train_X, xs).col(0);
  const double kss = kernel_eval(row.prior, xs, xs)(0, 0);
  const Vector w = row.chol_G.triangularView<Eigen::Lower>().solve(kstar);
  return {kstar.dot(row.solve_y), std::max(0.0, kss - w.squaredNorm())};
}

namespace detail {

inline Vector neighbor_values(const FittedMap& map, const Vector& y_ord, Index i) {
  const auto& row = map.rows[static_cast<std::size_t>(i)];
  const auto& nb = map.ordering.neighbors[static_cast<std::size_t>(i)];
  Vector x(row.m());
  for (Index k = 0; k < row.m(); ++k) x[k] = y_ord[nb[static_cast<std::size_t>(k)]];
  return x;
}

/// Location and scale of the predictive law of ordered variable i.
inline std::pair<double, double> row_location_scale(const FittedMap& map, const Vector& y_ord, Index i) {
  const auto& row = map.rows[static_cast<std::size_t>(i)];
  const Prediction p = gp_predict(row, neighbor_values(map, y_ord, i));
  if (map.simplified) return {p.mean, std::sqrt(row.d_hat2)};
  return {p.mean, std::sqrt(row.d_hat2 * (p.var + 1.0))};
}

inline Vector to_ordered(const FittedMap& map, const Vector& y_raw) {
  const Vector y_std = map.standardization.apply(y_raw);
  Vector y_ord(y_std.size());
  for (Index i = 0; i < map.N(); ++i) y_ord[i] = y_std[map.ordering.perm[static_cast<std::size_t>(i)]];
  return y_ord;
}

inline Vector from_ordered(const FittedMap& map, const Vector& y_ord) {
  Vector y_std(y_ord.size());
  for (Index i = 0; i < map.N(); ++i) y_std[map.ordering.perm[static_cast<std::size_t>(i)]] = y_ord[i];
  return map.standardization.unapply(y_std);
}

}  // namespace detail

/// Map coefficients z in ordered coordinates.
struct Coefficients {
  Vector z;
  Index clamped = 0;  // entries pinned at +-special::kZClamp
};

inline Coefficients forward(const FittedMap& map, const Vector& y_raw) {
  require(y_raw.size() == map.N(), ErrorKind::data, "field length does not match map");
  require(y_raw.allFinite(), ErrorKind::data, "field contains non-finite values");
  const Vector y = detail::to_ordered(map, y_raw);
  Coefficients out;
  out.z.resize(map.N());
  std::vector<char> clamped(static_cast<std::size_t>(map.N()), 0);
  parallel_for(0, static_cast<std::size_t>(map.N()), [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    const auto [loc, scale] = detail::row_location_scale(map, y, i);
    const double t = (y[i] - loc) / scale;
    if (map.simplified) {
      out.z[i] = t;
      return;
    }
    bool c = false;
    out.z[i] = special::t_to_normal(t, 2.0 * map.rows[ui].alpha_tilde, c);
    clamped[ui] = c;
  });
  for (char c : clamped) out.clamped += c;
  return out;
}

/// Solves T(y) = z recursively and returns y in original coordinates.
inline Vector inverse(const FittedMap& map, const Vector& z) {
  require(z.size() == map.N(), ErrorKind::data, "coefficient length does not match map");
  require(z.allFinite(), ErrorKind::data, "coefficients contain non-finite values");
  Vector y(map.N());
  for (Index i = 0; i < map.N(); ++i) {
    const auto [loc, scale] = detail::row_location_scale(map, y, i);
    const double t = map.simplified
                         ? z[i]
                         : special::normal_to_t(z[i], 2.0 * map.rows[static_cast<std::size_t>(i)].alpha_tilde);
    y[i] = loc + t * scale;
  }
  return detail::from_ordered(map, y);
}

/// Posterior predictive log density in raw-data units.
inline double logpdf(const FittedMap& map, const Vector& y_raw) {
  require(y_raw.size() == map.N(), ErrorKind::data, "field length does not match map");
  const Vector y = detail::to_ordered(map, y_raw);
  Vector terms(map.N());
  parallel_for(0, static_cast<std::size_t>(map.N()), [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    const auto [loc, scale] = detail::row_location_scale(map, y, i);
    terms[i] = map.simplified
                   ? special::normal_logpdf(y[i], loc, scale * scale)
                   : special::t_logpdf(y[i], 2.0 * map.rows[ui].alpha_tilde, loc, scale * scale);
  });
  double total = map.standardization.log_jacobian();
  for (Index i = 0; i < terms.size(); ++i) total += terms[i];
  return total;
}

/// Rows of `fields` are fields; returns one log density per row.
inline Vector logpdf_rows(const FittedMap& map, const Matrix& fields) {
  Vector out(fields.rows());
  for (Index r = 0; r < fields.rows(); ++r) out[r] = logpdf(map, fields.row(r).transpose());
  return out;
}

inline Matrix forward_rows(const FittedMap& map, const Matrix& fields) {
  Matrix out(fields.rows(), fields.cols());
  for (Index r = 0; r < fields.rows(); ++r) out.row(r) = forward(map, fields.row(r).transpose()).z.transpose();
  return out;
}

inline Matrix inverse_rows(const FittedMap& map, const Matrix& coefs) {
  Matrix out(coefs.rows(), coefs.cols());
  parallel_for(0, static_cast<std::size_t>(coefs.rows()), [&](std::size_t r) {
    out.row(static_cast<Index>(r)) = inverse(map, coefs.row(static_cast<Index>(r)).transpose()).transpose();
  });
  return out;
}

/// count x N matrix of posterior predictive draws. Normal variates are drawn
/// sequentially from `rng`, so output depends only on the seed.
template <class Rng>
Matrix sample(const FittedMap& map, Rng& rng, Index count) {
  std::normal_distribution<double> normal;
  Matrix z(count, map.N());
  for (Index r = 0; r < count; ++r)
    for (Index i = 0; i < map.N(); ++i) z(r, i) = normal(rng);
  return inverse_rows(map, z);
}

/// Draw that keeps the first k map coefficients of y_ref.
template <class Rng>
Vector conditional_sample(const FittedMap& map, const Vector& y_ref, Index k, Rng& rng) {
  require(k >= 0 && k <= map.N(), ErrorKind::usage, "k must lie in [0, N]");
  Vector z = forward(map, y_ref).z;
  std::normal_distribution<double> normal;
  for (Index i = k; i < map.N(); ++i) z[i] = normal(rng);
  return inverse(map, z);
}

}  // namespace btmap
