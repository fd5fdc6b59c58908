#pragma once

// Log-scores, KL estimates, Gaussian baselines and map-coefficient
// diagnostics.

#include "btmap/common.hpp"
#include "btmap/map_apply.hpp"
#include "btmap/nelder_mead.hpp"
#include "btmap/ordering.hpp"
#include "btmap/parallel.hpp"
#include "btmap/special.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace btmap {

/// Maps a (count x N) block of fields to one log density per field.
using LogpdfProvider = std::function<Vector(const Matrix&)>;

struct ScoreReport {
  std::string method;
  double mean = 0.0;  // mean negative log density over finite fields
  double se = 0.0;    // sd / sqrt(#finite fields)
  Vector values;      // per-field negative log density, NaN where excluded
  Index excluded = 0;
  Index n = 0;  // training replicates, informational
  Index N = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void mean_and_se(const Vector& v, double& mean, double& se, Index& used) {
  used = 0;
  double sum = 0.0;
  for (Index k = 0; k < v.size(); ++k)
    if (std::isfinite(v[k])) sum += v[k], ++used;
  require(used >= 2, ErrorKind::numerical, "fewer than 2 fields with a finite log density");
  mean = sum / static_cast<double>(used);
  double ss = 0.0;
  for (Index k = 0; k < v.size(); ++k)
    if (std::isfinite(v[k])) ss += (v[k] - mean) * (v[k] - mean);
  se = std::sqrt(ss / static_cast<double>(used - 1) / static_cast<double>(used));
}

}  // namespace detail

inline ScoreReport log_score(const LogpdfProvider& provider, const Matrix& test_fields,
                             std::string method = "") {
  require(test_fields.rows() >= 2, ErrorKind::usage, "need at least 2 test fields");
  ScoreReport r;
  r.method = std::move(method);
  r.N = test_fields.cols();
  const Vector lp = provider(test_fields);
  require(lp.size() == test_fields.rows(), ErrorKind::usage, "provider returned wrong length");
  r.values = -lp;
  for (Index k = 0; k < r.values.size(); ++k)
    if (!std::isfinite(r.values[k])) r.values[k] = std::numeric_limits<double>::quiet_NaN();
  Index used = 0;
  detail::mean_and_se(r.values, r.mean, r.se, used);
  r.excluded = r.values.size() - used;
  return r;
}

struct KLReport {
  double kl = 0.0;
  double se = 0.0;  // Monte Carlo standard error
  Vector values;    // per-field log p0 - log p, NaN where excluded
  Index excluded = 0;
};

/// Monte Carlo KL(p0 || p) from fields drawn under p0.
inline KLReport kl_estimate(const LogpdfProvider& truth, const LogpdfProvider& provider,
                            const Matrix& test_fields) {
  require(test_fields.rows() >= 2, ErrorKind::usage, "need at least 2 test fields");
  KLReport r;
  r.values = truth(test_fields) - provider(test_fields);
  for (Index k = 0; k < r.values.size(); ++k)
    if (!std::isfinite(r.values[k])) r.values[k] = std::numeric_limits<double>::quiet_NaN();
  Index used = 0;
  detail::mean_and_se(r.values, r.kl, r.se, used);
  r.excluded = r.values.size() - used;
  return r;
}

/// Standard error of the paired difference a - b of two score reports.
inline double paired_se(const ScoreReport& a, const ScoreReport& b) {
  require(a.values.size() == b.values.size(), ErrorKind::usage, "score reports differ in length");
  double mean = 0.0, se = 0.0;
  Index used = 0;
  detail::mean_and_se(a.values - b.values, mean, se, used);
  return se;
}

/// Zero-mean multivariate normal evaluated through a Cholesky factor.
struct GaussianModel {
  Matrix cov;
  Matrix chol;  // lower
  double logdet = 0.0;

  explicit GaussianModel(Matrix c) : cov(std::move(c)) {
    Eigen::LLT<Matrix> llt(cov);
    require(llt.info() == Eigen::Success, ErrorKind::numerical, "Gaussian covariance is not positive definite");
    chol = llt.matrixL();
    logdet = 2.0 * chol.diagonal().array().log().sum();
  }

  Vector logpdf_rows(const Matrix& fields) const {
    require(fields.cols() == cov.rows(), ErrorKind::data, "field length does not match covariance");
    const Matrix W = chol.triangularView<Eigen::Lower>().solve(fields.transpose());
    const double c = -0.5 * logdet - 0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi);
    Vector out(fields.rows());
    for (Index r = 0; r < fields.rows(); ++r) out[r] = c - 0.5 * W.col(r).squaredNorm();
    return out;
  }

  LogpdfProvider provider() const {
    return [self = *this](const Matrix& f) { return self.logpdf_rows(f); };
  }
};

inline Matrix pairwise_distances(const Locations& locs) {
  const Index N = locs.size();
  Matrix D(N, N);
  for (Index i = 0; i < N; ++i) {
    D(i, i) = 0.0;
    for (Index j = i + 1; j < N; ++j) D(i, j) = D(j, i) = locs.distance(i, j);
  }
  return D;
}

inline Matrix sample_covariance(const Matrix& Y) {
  const Matrix centered = Y.rowwise() - Y.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(Y.rows() - 1);
}

/// Sample covariance tapered by exp(-d / range), plus a ridge of
/// ridge_factor * mean(diag) for n < N. The range defaults to the largest
/// pairwise distance; an infinite range disables the taper.
inline GaussianModel baseline_samp_tap(const Matrix& Y_train, const Locations& locs,
                                       double ridge_factor = 1e-6,
                                       std::optional<double> taper_range = std::nullopt) {
  require(Y_train.rows() >= 2, ErrorKind::data, "need at least 2 replicates");
  require(Y_train.cols() == locs.size(), ErrorKind::data, "data columns do not match locations");
  const Matrix D = pairwise_distances(locs);
  const double range = taper_range.value_or(D.maxCoeff());
  require(range > 0.0, ErrorKind::usage, "taper range must be positive");
  Matrix S = sample_covariance(Y_train);
  if (std::isfinite(range)) S.array() *= (-D.array() / range).exp();
  S.diagonal().array() += ridge_factor * S.diagonal().mean();
  return GaussianModel(std::move(S));
}

struct ExpCovFit {
  double variance = 0.0;
  double range = 0.0;
  double loglik = 0.0;
  int evals = 0;
};

/// Gaussian log likelihood of the rows of Y under variance * exp(-D / range).
inline double exp_cov_loglik(const Matrix& Y, const Matrix& D, double variance, double range) {
  Matrix S = variance * (-D.array() / range).exp().matrix();
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Matrix W = llt.matrixL().solve(Y.transpose());
  const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  const double n = static_cast<double>(Y.rows()), N = static_cast<double>(Y.cols());
  return -0.5 * n * logdet - 0.5 * W.squaredNorm() - 0.5 * n * N * std::log(2.0 * std::numbers::pi);
}

inline ExpCovFit fit_exp_cov(const Matrix& Y_train, const Locations& locs, NelderMeadOptions opt = {1e-4, 500, 0.5}) {
  require(Y_train.rows() >= 2, ErrorKind::data, "need at least 2 replicates");
  require(Y_train.cols() == locs.size(), ErrorKind::data, "data columns do not match locations");
  const Matrix D = pairwise_distances(locs);
  const double var0 = Y_train.array().square().mean();
  const double range0 = D.sum() / static_cast<double>(D.size()) / 2.0;
  auto objective = [&](const Vector& x) { return -exp_cov_loglik(Y_train, D, std::exp(x[0]), std::exp(x[1])); };
  Vector x0(2);
  x0 << std::log(var0), std::log(range0);
  const NelderMeadResult res = nelder_mead(objective, x0, opt);
  require(std::isfinite(res.fx), ErrorKind::numerical, "exponential covariance fit failed");
  return {std::exp(res.x[0]), std::exp(res.x[1]), -res.fx, res.evals};
}

/// Zero-mean Gaussian with exponential covariance fitted by maximum likelihood.
inline GaussianModel baseline_exp_cov(const Matrix& Y_train, const Locations& locs, ExpCovFit* fit_out = nullptr) {
  const ExpCovFit fit = fit_exp_cov(Y_train, locs);
  if (fit_out) *fit_out = fit;
  const Matrix D = pairwise_distances(locs);
  return GaussianModel(fit.variance * (-D.array() / fit.range).exp().matrix());
}

inline LogpdfProvider map_provider(const FittedMap& map) {
  return [&map](const Matrix& f) { return logpdf_rows(map, f); };
}

struct CoefDiagnostics {
  double mean = 0.0, variance = 0.0, skewness = 0.0, excess_kurtosis = 0.0;
  Index count = 0;
  Vector coord_mean, coord_var;  // per ordered coordinate
  std::vector<double> qq_prob, qq_empirical, qq_normal;
  double qq_max_dev = 0.0;     // max |empirical - normal| over the qq table
  std::optional<Vector> lag1;  // per ordered coordinate, fields taken as a sequence
  Index clamped = 0;
};

/// Summaries of an (count x N) coefficient matrix in ordered coordinates.
inline CoefDiagnostics coef_diagnostics_from(const Matrix& Z, bool sequence = false) {
  require(Z.rows() >= 2, ErrorKind::usage, "need at least 2 coefficient vectors");
  CoefDiagnostics d;
  d.count = Z.size();
  const double cnt = static_cast<double>(d.count);
  d.mean = Z.mean();
  const Eigen::ArrayXXd c = Z.array() - d.mean;
  d.variance = c.square().sum() / cnt;
  d.skewness = c.cube().sum() / cnt / std::pow(d.variance, 1.5);
  d.excess_kurtosis = c.square().square().sum() / cnt / (d.variance * d.variance) - 3.0;
  d.coord_mean = Z.colwise().mean().transpose();
  d.coord_var = ((Z.rowwise() - d.coord_mean.transpose()).array().square().colwise().sum() /
                 static_cast<double>(Z.rows() - 1))
                    .transpose();
  std::vector<double> pooled(Z.data(), Z.data() + Z.size());
  std::sort(pooled.begin(), pooled.end());
  for (double p : {0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99}) {
    const double pos = p * (cnt - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, pooled.size() - 1);
    const double q = pooled[lo] + (pos - static_cast<double>(lo)) * (pooled[hi] - pooled[lo]);
    d.qq_prob.push_back(p);
    d.qq_empirical.push_back(q);
    d.qq_normal.push_back(special::normal_quantile(p));
    d.qq_max_dev = std::max(d.qq_max_dev, std::abs(q - d.qq_normal.back()));
  }
  if (sequence) {
    Vector lag(Z.cols());
    for (Index i = 0; i < Z.cols(); ++i) {
      const Vector col = Z.col(i).array() - d.coord_mean[i];
      const double den = col.squaredNorm();
      lag[i] = den > 0.0 ? col.head(col.size() - 1).dot(col.tail(col.size() - 1)) / den : 0.0;
    }
    d.lag1 = lag;
  }
  return d;
}

inline CoefDiagnostics coef_diagnostics(const FittedMap& map, const Matrix& test_fields, bool sequence = false) {
  Matrix Z(test_fields.rows(), test_fields.cols());
  Index clamped = 0;
  for (Index r = 0; r < test_fields.rows(); ++r) {
    const Coefficients c = forward(map, test_fields.row(r).transpose());
    Z.row(r) = c.z.transpose();
    clamped += c.clamped;
  }
  CoefDiagnostics d = coef_diagnostics_from(Z, sequence);
  d.clamped = clamped;
  return d;
}

inline nlohmann::json to_json(const ScoreReport& r) {
  std::vector<double> v(r.values.data(), r.values.data() + r.values.size());
  nlohmann::json values = nlohmann::json::array();
  for (double x : v) values.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return {{"method", r.method}, {"mean", r.mean}, {"se", r.se}, {"excluded", r.excluded},
          {"n", r.n}, {"N", r.N}, {"seed", r.seed}, {"values", values}};
}

inline nlohmann::json to_json(const KLReport& r) {
  nlohmann::json values = nlohmann::json::array();
  for (Index k = 0; k < r.values.size(); ++k)
    values.push_back(std::isfinite(r.values[k]) ? nlohmann::json(r.values[k]) : nlohmann::json(nullptr));
  return {{"kl", r.kl}, {"se", r.se}, {"excluded", r.excluded}, {"values", values}};
}

inline nlohmann::json to_json(const CoefDiagnostics& d) {
  nlohmann::json j = {{"mean", d.mean},
                      {"variance", d.variance},
                      {"skewness", d.skewness},
                      {"excess_kurtosis", d.excess_kurtosis},
                      {"count", d.count},
                      {"clamped", d.clamped},
                      {"qq_max_dev", d.qq_max_dev},
                      {"qq_prob", d.qq_prob},
                      {"qq_empirical", d.qq_empirical},
                      {"qq_normal", d.qq_normal}};
  return j;
}

/// CSV table of per-coordinate diagnostics: i,mean,var[,lag1].
inline std::string coord_csv(const CoefDiagnostics& d) {
  std::ostringstream os;
  os.precision(17);
  os << "i,mean,var" << (d.lag1 ? ",lag1" : "") << "\n";
  for (Index i = 0; i < d.coord_mean.size(); ++i) {
    os << i << "," << d.coord_mean[i] << "," << d.coord_var[i];
    if (d.lag1) os << "," << (*d.lag1)[i];
    os << "\n";
  }
  return os.str();
}

/// CSV table of per-field scores: field,neg_logpdf.
inline std::string score_csv(const ScoreReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "field,neg_logpdf\n";
  for (Index k = 0; k < r.values.size(); ++k) {
    os << k << ",";
    if (std::isfinite(r.values[k])) os << r.values[k];
    else os << "nan";
    os << "\n";
  }
  return os.str();
}

}  // namespace btmap
