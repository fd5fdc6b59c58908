#pragma once

// Conjugate GP / inverse-gamma regressions of each ordered variable on its
// neighbors: posterior sufficient statistics, the integrated likelihood and
// empirical-Bayes hyperparameter estimation.

#include "btmap/common.hpp"
#include "btmap/kernel_prior.hpp"
#include "btmap/nelder_mead.hpp"
#include "btmap/ordering.hpp"
#include "btmap/parallel.hpp"
#include "btmap/standardize.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace btmap {

struct FittedRow {
  RowPrior prior;
  Matrix train_X;  // n x m neighbor covariates
  Matrix chol_G;   // lower Cholesky factor of G = K + I (possibly jittered)
  Vector solve_y;  // G^{-1} y
  double alpha_tilde = 0.0;
  double beta_tilde = 0.0;
  double d_hat2 = 0.0;
  double logdet_G = 0.0;
  int jitter_steps = 0;

  Index m() const { return train_X.cols(); }
  Index n() const { return solve_y.size(); }

  double loglik() const;
};

/// Row contribution to log p(Y) from log|G| and y'G^{-1}y, normalizing
/// constant included.
inline double row_loglik_from(const RowPrior& prior, Index n, double logdet_G, double quad) {
  const double nn = static_cast<double>(n);
  const double a = prior.alpha + 0.5 * nn;
  const double b = prior.beta + 0.5 * quad;
  return -0.5 * logdet_G + prior.alpha * std::log(prior.beta) - a * std::log(b) + std::lgamma(a) -
         std::lgamma(prior.alpha) - 0.5 * nn * std::log(2.0 * std::numbers::pi);
}

inline double FittedRow::loglik() const {
  return row_loglik_from(prior, n(), logdet_G, 2.0 * (beta_tilde - prior.beta));
}

namespace detail {

/// Lower Cholesky factor of A; on failure adds 1e-8 * mean(diag), doubling
/// up to six times.
inline Matrix jittered_cholesky(Matrix A, int& steps, const std::string& what) {
  steps = 0;
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  double jitter = 1e-8 * A.diagonal().mean();
  for (int s = 1; s <= 6; ++s, jitter *= 2.0) {
    Matrix B = A;
    B.diagonal().array() += jitter;
    llt.compute(B);
    if (llt.info() == Eigen::Success) {
      steps = s;
      return llt.matrixL();
    }
  }
  fail(ErrorKind::numerical, "Cholesky failed after maximum jitter for " + what);
}

}  // namespace detail

/// Posterior statistics for one row. `row` only labels error messages.
inline FittedRow fit_row(const Vector& y, const Matrix& X, const RowPrior& prior, Index row = -1) {
  require(X.rows() == y.size(), ErrorKind::usage, "covariate rows do not match response length");
  FittedRow r;
  r.prior = prior;
  r.train_X = X;
  const Index n = y.size();
  Matrix G = kernel_eval(prior, X, X);
  G.diagonal().array() += 1.0;
  r.chol_G = detail::jittered_cholesky(std::move(G), r.jitter_steps, "row " + std::to_string(row));
  const Vector w = r.chol_G.triangularView<Eigen::Lower>().solve(y);
  r.solve_y = r.chol_G.transpose().triangularView<Eigen::Upper>().solve(w);
  r.logdet_G = 2.0 * r.chol_G.diagonal().array().log().sum();
  r.alpha_tilde = prior.alpha + 0.5 * static_cast<double>(n);
  r.beta_tilde = prior.beta + 0.5 * w.squaredNorm();
  r.d_hat2 = r.beta_tilde / r.alpha_tilde;
  return r;
}

/// Neighbor covariates of ordered row i: columns of the ordered data matrix.
inline Matrix row_covariates(const Matrix& Y_ord, const Ordering& ord, Index i, Index m) {
  Matrix X(Y_ord.rows(), m);
  const auto& nb = ord.neighbors[static_cast<std::size_t>(i)];
  for (Index k = 0; k < m; ++k) X.col(k) = Y_ord.col(nb[static_cast<std::size_t>(k)]);
  return X;
}

/// Same value as fit_row(y, X, prior).loglik() without keeping the
/// factorization. Linear rows with m < n go through the m x m system.
inline double row_loglik(const Vector& y, const Matrix& X, const RowPrior& prior, Index row = -1) {
  const Index n = y.size();
  if (prior.m == 0) return row_loglik_from(prior, n, 0.0, y.squaredNorm());
  if (prior.sigma2 == 0.0 && prior.m < n) {
    const Matrix U = X * (prior.q / std::sqrt(prior.mean_d2)).asDiagonal();
    Matrix A = Matrix::Identity(prior.m, prior.m);
    A.selfadjointView<Eigen::Lower>().rankUpdate(U.transpose());
    const Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) {
      const Vector u = U.transpose() * y;
      const Vector w = llt.matrixL().solve(u);
      const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      return row_loglik_from(prior, n, logdet, y.squaredNorm() - w.squaredNorm());
    }
  }
  Matrix G = kernel_eval(prior, X, X);
  G.diagonal().array() += 1.0;
  int steps = 0;
  const Matrix L = detail::jittered_cholesky(std::move(G), steps, "row " + std::to_string(row));
  const Vector w = L.triangularView<Eigen::Lower>().solve(y);
  return row_loglik_from(prior, n, 2.0 * L.diagonal().array().log().sum(), w.squaredNorm());
}

inline FittedRow fit_ordered_row(const Matrix& Y_ord, const Ordering& ord, const Hyper& hyper,
                                 Index i) {
  const RowPrior prior = row_prior(hyper, ord.ell[static_cast<std::size_t>(i)], i);
  require(static_cast<Index>(ord.neighbors[static_cast<std::size_t>(i)].size()) >= prior.m,
          ErrorKind::usage, "ordering carries fewer neighbors than the prior requires");
  return fit_row(Y_ord.col(i), row_covariates(Y_ord, ord, i, prior.m), prior, i);
}

/// Reorders the columns of Y (n x N) into the ordering.
inline Matrix permute_columns(const Matrix& Y, const Ordering& ord) {
  Matrix out(Y.rows(), Y.cols());
  for (Index i = 0; i < ord.size(); ++i) out.col(i) = Y.col(ord.perm[static_cast<std::size_t>(i)]);
  return out;
}

/// Per-row terms of log p(Y) for ordered data Y_ord.
inline Vector row_logliks(const Matrix& Y_ord, const Ordering& ord, const Hyper& hyper) {
  require(Y_ord.cols() == ord.size(), ErrorKind::usage, "data columns do not match ordering");
  Vector terms(Y_ord.cols());
  parallel_for(0, static_cast<std::size_t>(Y_ord.cols()), [&](std::size_t i) {
    const auto row = static_cast<Index>(i);
    const RowPrior prior = row_prior(hyper, ord.ell[i], row);
    require(static_cast<Index>(ord.neighbors[i].size()) >= prior.m, ErrorKind::usage,
            "ordering carries fewer neighbors than the prior requires");
    terms[row] = row_loglik(Y_ord.col(row), row_covariates(Y_ord, ord, row, prior.m), prior, row);
  });
  return terms;
}

/// log p(Y) with f and d integrated out, summed left to right over rows.
inline double integrated_loglik(const Matrix& Y_ord, const Ordering& ord, const Hyper& hyper) {
  const Vector terms = row_logliks(Y_ord, ord, hyper);
  double total = 0.0;
  for (Index i = 0; i < terms.size(); ++i) total += terms[i];
  return total;
}

struct FitConfig {
  Hyper hyper;  // g, epsilon, m_max, nu, linear_only; theta is the fallback start
  bool simplified = false;
  bool standardize = true;
  int restarts = 3;  // total starts: the default plus perturbed ones
  NelderMeadOptions optimizer{1e-4, 500, 0.5};
  double restart_spread = 0.5;
  std::uint64_t seed = 1;
  std::optional<std::array<double, 6>> start;
  bool optimize = true;  // false: use hyper.theta as given
  std::optional<Index> first_point;
  std::optional<double> correlation_range;  // order by correlation distance
};

struct TraceEntry {
  int restart = 0;
  int evals = 0;
  double start_loglik = 0.0;
  double loglik = 0.0;
  bool converged = false;
  std::array<double, 6> theta{};
};

struct FittedMap {
  Ordering ordering;
  Hyper hyper;
  std::vector<FittedRow> rows;
  Index n = 0;
  Standardization standardization;
  bool simplified = false;
  double loglik = 0.0;
  std::vector<TraceEntry> trace;
  std::string warning;
  Matrix Y_ord;  // standardized training data, ordered columns

  Index N() const { return ordering.size(); }
};

namespace detail {

inline std::array<double, 6> default_start(const Matrix& Y) {
  double var = 0.0;
  for (Index j = 0; j < Y.cols(); ++j) {
    const double mu = Y.col(j).mean();
    var += (Y.col(j).array() - mu).square().sum() / static_cast<double>(Y.rows() - 1);
  }
  const double lv = std::log(var / static_cast<double>(Y.cols()));
  return {0.1 * lv, 1.0, lv, 1.0, 0.0, -0.7};
}

// Free optimizer coordinates; theta_q enters as log(-theta_q).
inline Vector to_free(const std::array<double, 6>& t, bool linear) {
  if (linear) return Vector{{t[2], t[3], std::log(-t[5])}};
  return Vector{{t[0], t[1], t[2], t[3], t[4], std::log(-t[5])}};
}

inline std::array<double, 6> from_free(const Vector& x, bool linear) {
  if (linear)
    return {-std::numeric_limits<double>::infinity(), 0.0, x[0], x[1], 0.0, -std::exp(x[2])};
  return {x[0], x[1], x[2], x[3], x[4], -std::exp(x[5])};
}

}  // namespace detail

/// Fits every row at fixed hyperparameters from standardized, ordered data.
inline FittedMap build_map_ordered(Matrix Y_ord, Ordering ordering, const Hyper& hyper,
                                   Standardization standardization, bool simplified) {
  require(Y_ord.cols() == ordering.size(), ErrorKind::data, "data columns do not match ordering");
  hyper.validate();
  FittedMap map;
  map.hyper = hyper;
  map.n = Y_ord.rows();
  map.simplified = simplified;
  map.standardization = std::move(standardization);
  map.ordering = std::move(ordering);
  map.Y_ord = std::move(Y_ord);
  map.rows.resize(static_cast<std::size_t>(map.Y_ord.cols()));
  parallel_for(0, map.rows.size(), [&](std::size_t i) {
    map.rows[i] = fit_ordered_row(map.Y_ord, map.ordering, hyper, static_cast<Index>(i));
  });
  for (const auto& r : map.rows) map.loglik += r.loglik();
  return map;
}

/// Refits every row at fixed hyperparameters. Y_raw rows are replicates in
/// original variable order.
inline FittedMap build_map(const Matrix& Y_raw, Ordering ordering, const Hyper& hyper,
                           Standardization standardization, bool simplified) {
  require(Y_raw.cols() == ordering.size(), ErrorKind::data, "data columns do not match ordering");
  Matrix Y_ord = permute_columns(standardization.apply_rows(Y_raw), ordering);
  return build_map_ordered(std::move(Y_ord), std::move(ordering), hyper, std::move(standardization),
                           simplified);
}

/// Empirical-Bayes fit on a given ordering.
inline FittedMap fit_map(const Matrix& Y_raw, Ordering ordering, const FitConfig& cfg) {
  require(Y_raw.rows() >= 2, ErrorKind::data, "need at least 2 replicates");
  require(Y_raw.allFinite(), ErrorKind::data, "data contain non-finite values");
  Standardization stdz = cfg.standardize ? Standardization::estimate(Y_raw)
                                         : Standardization::identity(Y_raw.cols());
  const Matrix Y_ord = permute_columns(stdz.apply_rows(Y_raw), ordering);

  Hyper hyper = cfg.hyper;
  const bool linear = hyper.linear_only;
  std::vector<TraceEntry> trace;
  std::string warning;
  if (cfg.optimize) {
    const std::array<double, 6> start = cfg.start.value_or(detail::default_start(Y_ord));
    auto objective = [&](const Vector& x) {
      Hyper h = hyper;
      h.set_theta(detail::from_free(x, linear));
      try {
        return -integrated_loglik(Y_ord, ordering, h);
      } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    const Vector x0 = detail::to_free(start, linear);
    const double initial = -objective(x0);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, cfg.restart_spread);
    Vector best_x = x0;
    double best = initial;
    for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
      Vector xs = x0;
      if (r > 0)
        for (Index k = 0; k < xs.size(); ++k) xs[k] += normal(rng);
      const NelderMeadResult res = nelder_mead(objective, xs, cfg.optimizer);
      TraceEntry e;
      e.restart = r;
      e.evals = res.evals;
      e.start_loglik = r == 0 ? initial : -objective(xs);
      e.loglik = -res.fx;
      e.converged = res.converged;
      e.theta = detail::from_free(res.x, linear);
      trace.push_back(e);
      if (-res.fx > best) best = -res.fx, best_x = res.x;
    }
    if (!(best > initial))
      warning = "no optimizer restart improved on the initial hyperparameters";
    hyper.set_theta(detail::from_free(best_x, linear));
  } else if (linear) {
    hyper.theta_sigma1 = -std::numeric_limits<double>::infinity();
  }
  FittedMap map = build_map(Y_raw, std::move(ordering), hyper, std::move(stdz), cfg.simplified);
  map.trace = std::move(trace);
  map.warning = std::move(warning);
  return map;
}

/// Orders the locations (maximin, optionally on correlation distance) and fits.
inline FittedMap fit_map(const Matrix& Y_raw, const Locations& locs, const FitConfig& cfg) {
  require(Y_raw.cols() == locs.size(), ErrorKind::data, "data columns do not match locations");
  Ordering ord;
  if (cfg.correlation_range) {
    const Matrix D = correlation_distance(Y_raw, *cfg.correlation_range, locs);
    ord = maximin_order(Locations::precomputed(D), cfg.hyper.m_max, cfg.first_point);
  } else {
    ord = maximin_order(locs, cfg.hyper.m_max, cfg.first_point);
  }
  return fit_map(Y_raw, std::move(ord), cfg);
}

}  // namespace btmap
