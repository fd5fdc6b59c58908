#pragma once

// Hyperparameter-indexed priors for the per-row regressions and the row
// covariance kernel (linear part plus Matern part on relevance-scaled inputs).

#include "btmap/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace btmap {

struct Hyper {
  // Global hyperparameters. sigma1 == -inf selects a purely linear kernel.
  double theta_sigma1 = 0.0;
  double theta_sigma2 = 1.0;
  double theta_d1 = 0.0;
  double theta_d2 = 1.0;
  double theta_gamma = 0.0;
  double theta_q = -0.7;

  double g = 4.0;          // prior sd of d_i^2 as a multiple of its mean
  double epsilon = 0.01;   // relevance cutoff defining m
  Index m_max = 30;
  bool linear_only = false;
  double nu = 1.5;         // Matern smoothness: 0.5, 1.5 or 2.5

  std::array<double, 6> theta() const {
    return {theta_sigma1, theta_sigma2, theta_d1, theta_d2, theta_gamma, theta_q};
  }
  void set_theta(const std::array<double, 6>& t) {
    theta_sigma1 = t[0];
    theta_sigma2 = t[1];
    theta_d1 = t[2];
    theta_d2 = t[3];
    theta_gamma = t[4];
    theta_q = t[5];
  }

  void validate() const {
    require(!std::isnan(theta_sigma1) && theta_sigma1 != std::numeric_limits<double>::infinity(),
            ErrorKind::numerical, "theta_sigma1 must be finite or -inf");
    require(std::isfinite(theta_sigma2) && std::isfinite(theta_d1) && std::isfinite(theta_d2) &&
                std::isfinite(theta_gamma) && std::isfinite(theta_q),
            ErrorKind::numerical, "hyperparameters must be finite");
    require(theta_q < 0.0, ErrorKind::numerical, "theta_q must be negative");
    require(g > 0.0, ErrorKind::usage, "g must be positive");
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::usage, "epsilon must lie in (0,1)");
    require(m_max >= 1, ErrorKind::usage, "m_max must be at least 1");
    require(nu == 0.5 || nu == 1.5 || nu == 2.5, ErrorKind::usage,
            "Matern smoothness must be 0.5, 1.5 or 2.5");
  }

  bool is_linear() const {
    return linear_only || theta_sigma1 == -std::numeric_limits<double>::infinity();
  }
};

/// Number of relevant neighbors: max{k : exp(theta_q k) >= epsilon}, capped.
inline Index active_neighbors(double theta_q, double epsilon, Index m_max) {
  if (!(theta_q < 0.0)) return m_max;
  const double bound = std::log(epsilon) / theta_q;
  if (bound >= static_cast<double>(m_max)) return m_max;
  auto k = static_cast<Index>(std::floor(bound));
  while (k > 0 && std::exp(theta_q * static_cast<double>(k)) < epsilon) --k;
  while (k < m_max && std::exp(theta_q * static_cast<double>(k + 1)) >= epsilon) ++k;
  return k;
}

struct RowPrior {
  double sigma2 = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double mean_d2 = 1.0;
  double gamma = 1.0;
  double nu = 1.5;
  Vector q;     // relevance weights for neighbors k = 1..m
  Index m = 0;  // active neighbor count at this row
};

/// Prior for ordered row `i` (0-based) with length scale `ell`. The active
/// neighbor count is clipped to i.
inline RowPrior row_prior(const Hyper& hyper, double ell, Index i) {
  hyper.validate();
  require(ell > 0.0 && std::isfinite(ell), ErrorKind::numerical, "length scale must be positive");
  RowPrior p;
  p.sigma2 = hyper.is_linear() ? 0.0
                               : std::exp(hyper.theta_sigma1) * std::pow(ell, hyper.theta_sigma2);
  const double ig = 1.0 / (hyper.g * hyper.g);
  p.alpha = 2.0 + ig;
  p.mean_d2 = std::exp(hyper.theta_d1) * std::pow(ell, hyper.theta_d2);
  p.beta = p.mean_d2 * (1.0 + ig);
  p.gamma = std::exp(hyper.theta_gamma);
  p.nu = hyper.nu;
  p.m = std::min(active_neighbors(hyper.theta_q, hyper.epsilon, hyper.m_max), i);
  p.q.resize(p.m);
  for (Index k = 0; k < p.m; ++k) p.q[k] = std::exp(hyper.theta_q * static_cast<double>(k + 1));
  return p;
}

/// Matern correlation at scaled distance t, closed forms for nu in {0.5,1.5,2.5}.
inline double matern(double t, double nu) {
  if (nu == 0.5) return std::exp(-t);
  if (nu == 1.5) {
    const double s = std::sqrt(3.0) * t;
    return (1.0 + s) * std::exp(-s);
  }
  const double s = std::sqrt(5.0) * t;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

inline Eigen::ArrayXXd matern_array(const Eigen::ArrayXXd& t, double nu) {
  if (nu == 0.5) return (-t).exp();
  if (nu == 1.5) {
    const Eigen::ArrayXXd s = std::sqrt(3.0) * t;
    return (1.0 + s) * (-s).exp();
  }
  const Eigen::ArrayXXd s = std::sqrt(5.0) * t;
  return (1.0 + s + s.square() / 3.0) * (-s).exp();
}

/// Unnormalized row covariance C(x, x') = u'u + sigma2 * rho(|u - u'| / gamma)
/// with u = diag(q) x. Rows of X and X2 are inputs; columns are neighbors.
inline Matrix covariance_eval(const RowPrior& prior, const Matrix& X, const Matrix& X2) {
  require(X.cols() == prior.m && X2.cols() == prior.m, ErrorKind::usage,
          "kernel input arity " + std::to_string(X.cols()) + "/" + std::to_string(X2.cols()) +
              " does not match relevance weights " + std::to_string(prior.m));
  if (prior.m == 0) return Matrix::Zero(X.rows(), X2.rows());
  const Matrix U = X * prior.q.asDiagonal();
  const Matrix U2 = X2 * prior.q.asDiagonal();
  Matrix C = U * U2.transpose();
  if (prior.sigma2 > 0.0) {
    // Squared distances from the Gram matrix, clamped against cancellation.
    const Eigen::ArrayXd n1 = U.rowwise().squaredNorm().array();
    const Eigen::ArrayXd n2 = U2.rowwise().squaredNorm().array();
    Eigen::ArrayXXd t = (-2.0 * C.array()).colwise() + n1;
    t = (t.rowwise() + n2.transpose()).max(0.0).sqrt() / prior.gamma;
    C.array() += prior.sigma2 * matern_array(t, prior.nu);
  }
  return C;
}

/// Kernel K = C / E(d_i^2).
inline Matrix kernel_eval(const RowPrior& prior, const Matrix& X, const Matrix& X2) {
  return covariance_eval(prior, X, X2) / prior.mean_d2;
}

}  // namespace btmap
