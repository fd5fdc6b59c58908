#pragma once

// Scalar distribution helpers for the Gaussian and Student-t laws.
//
// Tail probabilities are always taken on the short side so that the
// t -> uniform -> normal composition keeps full relative accuracy far from
// the median; Boost.Math supplies the incomplete-beta machinery.

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace btmap::special {

/// Largest |z| we are willing to emit or invert.
inline constexpr double kZClamp = 8.2;

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double normal_cdf(double x) { return 0.5 * boost::math::erfc(-x / std::numbers::sqrt2); }

/// P(Z > x).
inline double normal_upper(double x) { return 0.5 * boost::math::erfc(x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  if (p < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

inline double normal_logpdf(double x) { return -kLogSqrt2Pi - 0.5 * x * x; }

inline double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * r * r / var;
}

/// Log density of the standard t law with `dof` degrees of freedom.
inline double t_logpdf(double t, double dof) {
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * std::numbers::pi) - 0.5 * (dof + 1.0) * std::log1p(t * t / dof);
}

/// Log density of t_dof(loc, scale2), i.e. (x - loc)/sqrt(scale2) is standard t.
inline double t_logpdf(double x, double dof, double loc, double scale2) {
  return t_logpdf((x - loc) / std::sqrt(scale2), dof) - 0.5 * std::log(scale2);
}

inline double t_cdf(double t, double dof) {
  boost::math::students_t_distribution<double> dist(dof);
  return boost::math::cdf(dist, t);
}

/// P(T > t).
inline double t_upper(double t, double dof) {
  boost::math::students_t_distribution<double> dist(dof);
  return boost::math::cdf(boost::math::complement(dist, t));
}

inline double t_quantile(double p, double dof) {
  boost::math::students_t_distribution<double> dist(dof);
  if (p > 0.5) return boost::math::quantile(boost::math::complement(dist, 1.0 - p));
  return boost::math::quantile(dist, p);
}

/// Phi^{-1}(F_dof(t)) evaluated through the short tail. Sets `clamped` when
/// the result had to be pinned to +-kZClamp.
inline double t_to_normal(double t, double dof, bool& clamped) {
  clamped = false;
  if (t == 0.0) return 0.0;
  const double tail = t_upper(std::abs(t), dof);
  double z = tail > 0.0 ? std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * tail)
                        : std::numeric_limits<double>::infinity();
  if (!(z <= kZClamp)) {
    z = kZClamp;
    clamped = true;
  }
  return t > 0.0 ? z : -z;
}

/// F_dof^{-1}(Phi(z)), with z pinned to +-kZClamp first.
inline double normal_to_t(double z, double dof) {
  if (z == 0.0) return 0.0;
  const double az = std::min(std::abs(z), kZClamp);
  const double tail = normal_upper(az);
  boost::math::students_t_distribution<double> dist(dof);
  const double t = boost::math::quantile(boost::math::complement(dist, tail));
  return z > 0.0 ? t : -t;
}

}  // namespace btmap::special
