#pragma once

// Dirichlet-process-mixture residuals for the per-row GP regressions.
//
// Each ordered variable follows y_i = f_i(neighbors) + eps_i with
// f_i ~ GP(0, C_i) and eps_i^{(j)} ~ N(mu, d^2), (mu, d^2) ~ DP(NIG, zeta_i).
// The sampler cycles through
//   1. eps_i | y_i, cluster params      (Gaussian, via a Matheron-style update)
//   2. labels | eps_i                   (collapsed, sequential over replicates)
//   3. cluster params | labels, eps_i   (normal-inverse-gamma)
//   4. theta                            (three random-walk Metropolis blocks)
// Theta layout: sigma1 sigma2 d1 d2 gamma q zeta1 zeta2 eta1 eta2.

#include "btmap/common.hpp"
#include "btmap/kernel_prior.hpp"
#include "btmap/map_fit.hpp"
#include "btmap/ordering.hpp"
#include "btmap/parallel.hpp"
#include "btmap/special.hpp"
#include "btmap/standardize.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace btmap {

using DPMTheta = std::array<double, 10>;

namespace dpm_index {
inline constexpr std::size_t sigma1 = 0, sigma2 = 1, d1 = 2, d2 = 3, gamma = 4, q = 5, zeta1 = 6,
                             zeta2 = 7, eta1 = 8, eta2 = 9;
}

/// Normal-inverse-gamma parameters: mu | d2 ~ N(xi, d2/eta), d2 ~ IG(alpha, beta).
struct NIG {
  double xi = 0.0;
  double eta = 1.0;
  double alpha = 2.0;
  double beta = 1.0;
};

/// Conjugate update from a cluster's count, sum and sum of squares. The
/// scale is floored at 1e-12 against cancellation.
inline NIG nig_update(const NIG& prior, double count, double sum, double sumsq) {
  if (count <= 0.0) return prior;
  const double mean = sum / count;
  const double ss = std::max(0.0, sumsq - sum * mean);
  NIG post;
  post.eta = prior.eta + count;
  post.xi = (prior.eta * prior.xi + count * mean) / post.eta;
  post.alpha = prior.alpha + 0.5 * count;
  post.beta = std::max(1e-12, prior.beta + 0.5 * ss +
                                  0.5 * count * prior.eta * (mean - prior.xi) * (mean - prior.xi) / post.eta);
  return post;
}

/// log density of a new draw under the NIG predictive t_{2a}(xi, b(eta+1)/(a eta)).
inline double nig_predictive_logpdf(const NIG& p, double x) {
  const double scale2 = p.beta * (p.eta + 1.0) / (p.alpha * p.eta);
  return special::t_logpdf(x, 2.0 * p.alpha, p.xi, scale2);
}

inline double nig_logpdf(const NIG& p, double mu, double d2) {
  const double log_ig = p.alpha * std::log(p.beta) - std::lgamma(p.alpha) -
                        (p.alpha + 1.0) * std::log(d2) - p.beta / d2;
  return special::normal_logpdf(mu, p.xi, d2 / p.eta) + log_ig;
}

template <class Rng>
std::pair<double, double> nig_draw(const NIG& p, Rng& rng) {
  std::gamma_distribution<double> gam(p.alpha, 1.0);
  const double d2 = p.beta / gam(rng);
  std::normal_distribution<double> normal(p.xi, std::sqrt(d2 / p.eta));
  return {normal(rng), d2};
}

struct DPMRowState {
  Vector eps;               // residuals, one per replicate
  std::vector<int> labels;  // contiguous cluster ids 0..K-1
  std::vector<double> mu;   // per cluster
  std::vector<double> d2;   // per cluster
  double fresh_mu = 0.0;    // base-measure draw for an unseen cluster
  double fresh_d2 = 1.0;

  Index clusters() const { return static_cast<Index>(mu.size()); }
  std::vector<Index> sizes() const {
    std::vector<Index> s(mu.size(), 0);
    for (int l : labels) ++s[static_cast<std::size_t>(l)];
    return s;
  }
};

struct DPMState {
  DPMTheta theta{};
  std::vector<DPMRowState> rows;
  Index iteration = 0;
};

struct DPMConfig {
  Index iterations = 5000;
  Index burn_in = 2000;
  Index thin = 10;
  DPMTheta theta0{0.0, 1.0, 0.0, 1.0, 0.0, -0.7, 0.0, 0.0, 0.0, 0.0};
  double g = 4.0;
  double epsilon = 0.01;
  Index m_max = 30;
  double nu = 1.5;
  bool standardize = true;
  // Random-walk step per coordinate for blocks (zeta, gp, d/eta).
  std::array<double, 3> proposal_scale{0.2, 0.05, 0.05};
  bool adapt = true;
  double target_accept = 0.3;
  std::array<bool, 3> update_block{true, true, true};
  // GP block targets p(theta | y, mu, D) with eps integrated out; false
  // uses N(y - eps | 0, C) directly.
  bool collapse_gp_block = true;
  double theta_bound = 30.0;  // box on |theta_k| for the flat prior
};

/// Everything needed to evaluate the DPM predictive apart from the chain.
struct DPMContext {
  Ordering ordering;
  Matrix Y_ord;  // standardized training data in ordered coordinates
  Standardization standardization;
  double g = 4.0;
  double epsilon = 0.01;
  Index m_max = 30;
  double nu = 1.5;

  Index n() const { return Y_ord.rows(); }
  Index N() const { return Y_ord.cols(); }
};

struct DPMChain {
  DPMContext context;
  std::vector<DPMState> states;
  std::array<double, 3> acceptance{0.0, 0.0, 0.0};  // post burn-in rates per block
  std::array<double, 3> final_scale{0.0, 0.0, 0.0};
};

namespace detail {

inline Hyper dpm_hyper(const DPMContext& ctx, const DPMTheta& t) {
  Hyper h;
  h.set_theta({t[0], t[1], t[2], t[3], t[4], t[5]});
  h.g = ctx.g;
  h.epsilon = ctx.epsilon;
  h.m_max = ctx.m_max;
  h.nu = ctx.nu;
  return h;
}

inline double power_law(double a, double b, double ell) { return std::exp(a) * std::pow(ell, b); }

struct RowModel {
  RowPrior prior;
  NIG base;
  double zeta = 1.0;
};

inline RowModel row_model(const DPMContext& ctx, const DPMTheta& t, Index i) {
  const double ell = ctx.ordering.ell[static_cast<std::size_t>(i)];
  RowModel rm;
  rm.prior = row_prior(dpm_hyper(ctx, t), ell, i);
  rm.base = {0.0, power_law(t[dpm_index::eta1], t[dpm_index::eta2], ell), rm.prior.alpha, rm.prior.beta};
  rm.zeta = power_law(t[dpm_index::zeta1], t[dpm_index::zeta2], ell);
  return rm;
}

inline Vector replicate_means(const DPMRowState& s) {
  Vector mu(static_cast<Index>(s.labels.size()));
  for (std::size_t j = 0; j < s.labels.size(); ++j) mu[static_cast<Index>(j)] = s.mu[static_cast<std::size_t>(s.labels[j])];
  return mu;
}

inline Vector replicate_vars(const DPMRowState& s) {
  Vector d(static_cast<Index>(s.labels.size()));
  for (std::size_t j = 0; j < s.labels.size(); ++j) d[static_cast<Index>(j)] = s.d2[static_cast<std::size_t>(s.labels[j])];
  return d;
}

/// Lower Cholesky factor of C + D for one row of one state.
struct RowFactor {
  RowPrior prior;
  Matrix X;
  Matrix chol;
  Vector resid_solve;  // (C + D)^{-1} (y - mu)
};

inline RowFactor factor_row(const DPMContext& ctx, const RowModel& rm, const DPMRowState& s, Index i) {
  RowFactor f;
  f.prior = rm.prior;
  f.X = row_covariates(ctx.Y_ord, ctx.ordering, i, rm.prior.m);
  Matrix G = covariance_eval(rm.prior, f.X, f.X);
  G.diagonal() += replicate_vars(s);
  int steps = 0;
  f.chol = jittered_cholesky(std::move(G), steps, "DPM row " + std::to_string(i));
  const Vector r = ctx.Y_ord.col(i) - replicate_means(s);
  const Vector w = f.chol.triangularView<Eigen::Lower>().solve(r);
  f.resid_solve = f.chol.transpose().triangularView<Eigen::Upper>().solve(w);
  return f;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

template <class Rng>
std::size_t draw_log_weights(const std::vector<double>& logw, Rng& rng) {
  const double lse = log_sum_exp(logw);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  for (std::size_t k = 0; k < logw.size(); ++k) {
    u -= std::exp(logw[k] - lse);
    if (u <= 0.0) return k;
  }
  return logw.size() - 1;
}

/// Step 1: eps ~ N(mu + D G^{-1}(y - mu), D - D G^{-1} D), G = C + D, drawn
/// as eps_hat + a - D G^{-1}(a + b) with a ~ N(0, D), b ~ N(0, C).
template <class Rng>
void sample_residuals(const DPMContext& ctx, const RowModel& rm, DPMRowState& s, Index i, Rng& rng) {
  const RowFactor f = factor_row(ctx, rm, s, i);
  const Index n = ctx.n();
  const Vector D = replicate_vars(s);
  std::normal_distribution<double> normal;
  Vector a(n), b = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) a[j] = std::sqrt(D[j]) * normal(rng);
  if (rm.prior.m > 0) {
    const Matrix C = covariance_eval(rm.prior, f.X, f.X);
    Eigen::LDLT<Matrix> ldlt(C);
    Vector w(n);
    for (Index j = 0; j < n; ++j) w[j] = std::sqrt(std::max(0.0, ldlt.vectorD()[j])) * normal(rng);
    const Vector Lw = ldlt.matrixL() * w;
    b = ldlt.transpositionsP().transpose() * Lw;
  }
  const Vector ab = a + b;
  const Vector t = f.chol.triangularView<Eigen::Lower>().solve(ab);
  const Vector Ginv_ab = f.chol.transpose().triangularView<Eigen::Upper>().solve(t);
  s.eps = replicate_means(s) + D.cwiseProduct(f.resid_solve) + a - D.cwiseProduct(Ginv_ab);
}

/// Step 2: sequential collapsed label updates.
template <class Rng>
void sample_labels(const RowModel& rm, DPMRowState& s, Rng& rng) {
  const std::size_t n = s.labels.size();
  std::vector<double> cnt(s.mu.size(), 0.0), sum(s.mu.size(), 0.0), sq(s.mu.size(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto k = static_cast<std::size_t>(s.labels[j]);
    const double e = s.eps[static_cast<Index>(j)];
    cnt[k] += 1.0, sum[k] += e, sq[k] += e * e;
  }
  std::vector<double> logw;
  for (std::size_t j = 0; j < n; ++j) {
    const double e = s.eps[static_cast<Index>(j)];
    auto k = static_cast<std::size_t>(s.labels[j]);
    cnt[k] -= 1.0, sum[k] -= e, sq[k] -= e * e;
    if (cnt[k] == 0.0) {
      // Drop the empty cluster by moving the last one into its slot.
      const std::size_t last = cnt.size() - 1;
      if (k != last) {
        cnt[k] = cnt[last], sum[k] = sum[last], sq[k] = sq[last];
        s.mu[k] = s.mu[last], s.d2[k] = s.d2[last];
        for (auto& l : s.labels)
          if (static_cast<std::size_t>(l) == last) l = static_cast<int>(k);
      }
      cnt.pop_back(), sum.pop_back(), sq.pop_back();
      s.mu.pop_back(), s.d2.pop_back();
    } else if (cnt[k] == 1.0) {
      sum[k] = 0.0, sq[k] = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        if (l != j && static_cast<std::size_t>(s.labels[l]) == k) {
          sum[k] = s.eps[static_cast<Index>(l)];
          sq[k] = sum[k] * sum[k];
        }
    }
    logw.assign(cnt.size() + 1, 0.0);
    for (std::size_t c = 0; c < cnt.size(); ++c)
      logw[c] = std::log(cnt[c]) + nig_predictive_logpdf(nig_update(rm.base, cnt[c], sum[c], sq[c]), e);
    logw.back() = std::log(rm.zeta) + nig_predictive_logpdf(rm.base, e);
    const std::size_t pick = draw_log_weights(logw, rng);
    if (pick == cnt.size()) {
      cnt.push_back(0.0), sum.push_back(0.0), sq.push_back(0.0);
      s.mu.push_back(0.0), s.d2.push_back(rm.base.beta / (rm.base.alpha - 1.0));
    }
    s.labels[j] = static_cast<int>(pick);
    cnt[pick] += 1.0, sum[pick] += e, sq[pick] += e * e;
  }
}

/// Step 3: cluster parameters, plus a fresh base-measure draw.
template <class Rng>
void sample_clusters(const RowModel& rm, DPMRowState& s, Rng& rng) {
  const std::size_t K = s.mu.size();
  std::vector<double> cnt(K, 0.0), sum(K, 0.0), sq(K, 0.0);
  for (std::size_t j = 0; j < s.labels.size(); ++j) {
    const auto k = static_cast<std::size_t>(s.labels[j]);
    const double e = s.eps[static_cast<Index>(j)];
    cnt[k] += 1.0, sum[k] += e, sq[k] += e * e;
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto [mu, d2] = nig_draw(nig_update(rm.base, cnt[k], sum[k], sq[k]), rng);
    s.mu[k] = mu;
    s.d2[k] = d2;
  }
  const auto [mu, d2] = nig_draw(rm.base, rng);
  s.fresh_mu = mu;
  s.fresh_d2 = d2;
}

inline double zeta_block_logtarget(const DPMContext& ctx, const DPMState& st, const DPMTheta& t) {
  double total = 0.0;
  const double n = static_cast<double>(ctx.n());
  for (Index i = 0; i < ctx.N(); ++i) {
    const double ell = ctx.ordering.ell[static_cast<std::size_t>(i)];
    const double zeta = power_law(t[dpm_index::zeta1], t[dpm_index::zeta2], ell);
    const double K = static_cast<double>(st.rows[static_cast<std::size_t>(i)].clusters());
    total += K * std::log(zeta) + std::lgamma(zeta) - std::lgamma(n + zeta);
  }
  return total;
}

inline double nig_block_logtarget(const DPMContext& ctx, const DPMState& st, const DPMTheta& t) {
  double total = 0.0;
  for (Index i = 0; i < ctx.N(); ++i) {
    const RowModel rm = row_model(ctx, t, i);
    const auto& s = st.rows[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < s.mu.size(); ++k) total += nig_logpdf(rm.base, s.mu[k], s.d2[k]);
  }
  return total;
}

inline double gp_block_logtarget(const DPMContext& ctx, const DPMState& st, const DPMTheta& t,
                                 bool collapse) {
  Vector terms(ctx.N());
  parallel_for(0, static_cast<std::size_t>(ctx.N()), [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    const RowModel rm = row_model(ctx, t, i);
    const auto& s = st.rows[ui];
    const Matrix X = row_covariates(ctx.Y_ord, ctx.ordering, i, rm.prior.m);
    Matrix G = covariance_eval(rm.prior, X, X);
    Vector r;
    if (collapse) {
      G.diagonal() += replicate_vars(s);
      r = ctx.Y_ord.col(i) - replicate_means(s);
    } else {
      if (rm.prior.m == 0) {
        terms[i] = 0.0;
        return;
      }
      r = ctx.Y_ord.col(i) - s.eps;
    }
    int steps = 0;
    const Matrix L = jittered_cholesky(std::move(G), steps, "DPM row " + std::to_string(i));
    const Vector w = L.triangularView<Eigen::Lower>().solve(r);
    terms[i] = -L.diagonal().array().log().sum() - 0.5 * w.squaredNorm() -
               0.5 * static_cast<double>(ctx.n()) * std::log(2.0 * std::numbers::pi);
  });
  double total = 0.0;
  for (Index i = 0; i < terms.size(); ++i) total += terms[i];
  return total;
}

inline bool theta_in_support(const DPMTheta& t, double bound) {
  if (!(t[dpm_index::q] < 0.0)) return false;
  for (double v : t)
    if (!(std::abs(v) <= bound)) return false;
  return true;
}

}  // namespace detail

inline DPMContext make_dpm_context(const Matrix& Y_raw, Ordering ordering, const DPMConfig& cfg) {
  require(Y_raw.rows() >= 2, ErrorKind::data, "need at least 2 replicates");
  require(Y_raw.cols() == ordering.size(), ErrorKind::data, "data columns do not match ordering");
  DPMContext ctx;
  ctx.standardization = cfg.standardize ? Standardization::estimate(Y_raw)
                                        : Standardization::identity(Y_raw.cols());
  ctx.Y_ord = permute_columns(ctx.standardization.apply_rows(Y_raw), ordering);
  ctx.ordering = std::move(ordering);
  ctx.g = cfg.g;
  ctx.epsilon = cfg.epsilon;
  ctx.m_max = cfg.m_max;
  ctx.nu = cfg.nu;
  return ctx;
}

/// Single-cluster starting state: mu = 0, d^2 at its prior mean, eps = y.
inline DPMState initial_dpm_state(const DPMContext& ctx, const DPMTheta& theta) {
  DPMState st;
  st.theta = theta;
  st.rows.resize(static_cast<std::size_t>(ctx.N()));
  for (Index i = 0; i < ctx.N(); ++i) {
    const auto rm = detail::row_model(ctx, theta, i);
    auto& s = st.rows[static_cast<std::size_t>(i)];
    s.eps = ctx.Y_ord.col(i);
    s.labels.assign(static_cast<std::size_t>(ctx.n()), 0);
    s.mu = {0.0};
    s.d2 = {rm.prior.mean_d2};
    s.fresh_mu = 0.0;
    s.fresh_d2 = rm.prior.mean_d2;
  }
  return st;
}

/// Runs the Metropolis-within-Gibbs sampler and returns the thinned
/// post-burn-in states.
template <class Rng>
DPMChain dpm_gibbs(const Matrix& Y_raw, Ordering ordering, const DPMConfig& cfg, Rng& rng) {
  require(cfg.iterations > cfg.burn_in && cfg.burn_in >= 0 && cfg.thin >= 1, ErrorKind::usage,
          "need iterations > burn_in >= 0 and thin >= 1");
  require(detail::theta_in_support(cfg.theta0, cfg.theta_bound), ErrorKind::usage,
          "initial theta outside the prior support");
  DPMChain chain;
  chain.context = make_dpm_context(Y_raw, std::move(ordering), cfg);
  const DPMContext& ctx = chain.context;
  DPMState st = initial_dpm_state(ctx, cfg.theta0);

  static constexpr std::array<std::array<std::size_t, 4>, 3> blocks{{
      {dpm_index::zeta1, dpm_index::zeta2, 99, 99},
      {dpm_index::sigma1, dpm_index::sigma2, dpm_index::gamma, dpm_index::q},
      {dpm_index::d1, dpm_index::d2, dpm_index::eta1, dpm_index::eta2},
  }};
  std::array<double, 3> log_scale{std::log(cfg.proposal_scale[0]), std::log(cfg.proposal_scale[1]),
                                  std::log(cfg.proposal_scale[2])};
  std::array<double, 3> accepted{0, 0, 0}, proposed{0, 0, 0};
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(ctx.N()));

  for (Index iter = 0; iter < cfg.iterations; ++iter) {
    for (auto& s : seeds) s = rng();
    parallel_for(0, static_cast<std::size_t>(ctx.N()), [&](std::size_t ui) {
      std::mt19937_64 row_rng(seeds[ui]);
      const auto i = static_cast<Index>(ui);
      const auto rm = detail::row_model(ctx, st.theta, i);
      auto& s = st.rows[ui];
      detail::sample_residuals(ctx, rm, s, i, row_rng);
      detail::sample_labels(rm, s, row_rng);
      detail::sample_clusters(rm, s, row_rng);
    });

    for (std::size_t b = 0; b < 3; ++b) {
      if (!cfg.update_block[b]) continue;
      auto target = [&](const DPMTheta& t) {
        if (b == 0) return detail::zeta_block_logtarget(ctx, st, t);
        if (b == 1) return detail::gp_block_logtarget(ctx, st, t, cfg.collapse_gp_block);
        return detail::nig_block_logtarget(ctx, st, t);
      };
      DPMTheta prop = st.theta;
      const double step = std::exp(log_scale[b]);
      for (std::size_t c : blocks[b])
        if (c < prop.size()) prop[c] += step * normal(rng);
      bool accept = false;
      if (detail::theta_in_support(prop, cfg.theta_bound)) {
        double delta = -std::numeric_limits<double>::infinity();
        try {
          delta = target(prop) - target(st.theta);
        } catch (const Error&) {
        }
        accept = std::log(unif(rng)) < delta;
      }
      if (accept) st.theta = prop;
      if (iter < cfg.burn_in) {
        if (cfg.adapt)
          log_scale[b] += ((accept ? 1.0 : 0.0) - cfg.target_accept) /
                          std::pow(static_cast<double>(iter + 1), 0.6);
      } else {
        proposed[b] += 1.0;
        accepted[b] += accept ? 1.0 : 0.0;
      }
    }

    st.iteration = iter;
    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0) chain.states.push_back(st);
  }
  for (std::size_t b = 0; b < 3; ++b) {
    chain.acceptance[b] = proposed[b] > 0 ? accepted[b] / proposed[b] : 0.0;
    chain.final_scale[b] = std::exp(log_scale[b]);
  }
  return chain;
}

/// Starting theta for the DPM from an empirical-Bayes map fit.
inline DPMTheta dpm_initial_theta(const Hyper& fitted, double zeta1 = 0.0, double zeta2 = 0.0,
                                  double eta1 = 0.0, double eta2 = 0.0) {
  const double s1 = fitted.is_linear() ? -10.0 : fitted.theta_sigma1;
  return {s1, fitted.theta_sigma2, fitted.theta_d1, fitted.theta_d2, fitted.theta_gamma,
          fitted.theta_q, zeta1, zeta2, eta1, eta2};
}

/// Mixture posterior predictive log densities of the fields (rows, raw
/// units), averaged over the chain's states.
inline Vector dpm_logpdf_rows(const DPMChain& chain, const Matrix& fields) {
  const DPMContext& ctx = chain.context;
  require(!chain.states.empty(), ErrorKind::usage, "DPM chain is empty");
  require(fields.cols() == ctx.N(), ErrorKind::data, "field length does not match chain");
  const Index count = fields.rows();
  const Matrix F = permute_columns(ctx.standardization.apply_rows(fields), ctx.ordering);
  const std::size_t L = chain.states.size();
  const double n = static_cast<double>(ctx.n());
  Matrix terms(ctx.N(), count);
  parallel_for(0, static_cast<std::size_t>(ctx.N()), [&](std::size_t ui) {
    const auto i = static_cast<Index>(ui);
    std::vector<std::vector<double>> per_state(static_cast<std::size_t>(count), std::vector<double>(L));
    std::vector<double> comp;
    for (std::size_t l = 0; l < L; ++l) {
      const auto& st = chain.states[l];
      const auto& s = st.rows[ui];
      const auto rm = detail::row_model(ctx, st.theta, i);
      const auto f = detail::factor_row(ctx, rm, s, i);
      const auto sizes = s.sizes();
      const Matrix Xs = row_covariates(F, ctx.ordering, i, rm.prior.m);
      for (Index r = 0; r < count; ++r) {
        double mean = 0.0, v = 0.0;
        if (rm.prior.m > 0) {
          const Matrix xs = Xs.row(r);
          const Vector c = covariance_eval(rm.prior, f.X, xs).col(0);
          const double css = covariance_eval(rm.prior, xs, xs)(0, 0);
          const Vector w = f.chol.triangularView<Eigen::Lower>().solve(c);
          mean = c.dot(f.resid_solve);
          v = std::max(0.0, css - w.squaredNorm());
        }
        const double y = F(r, i);
        comp.clear();
        for (std::size_t k = 0; k < s.mu.size(); ++k)
          comp.push_back(std::log(static_cast<double>(sizes[k]) / (n + rm.zeta)) +
                         special::normal_logpdf(y, mean + s.mu[k], v + s.d2[k]));
        comp.push_back(std::log(rm.zeta / (n + rm.zeta)) +
                       special::normal_logpdf(y, mean + s.fresh_mu, v + s.fresh_d2));
        per_state[static_cast<std::size_t>(r)][l] = detail::log_sum_exp(comp);
      }
    }
    for (Index r = 0; r < count; ++r)
      terms(i, r) = detail::log_sum_exp(per_state[static_cast<std::size_t>(r)]) - std::log(static_cast<double>(L));
  });
  Vector out(count);
  for (Index r = 0; r < count; ++r) {
    double total = ctx.standardization.log_jacobian();
    for (Index i = 0; i < ctx.N(); ++i) total += terms(i, r);
    out[r] = total;
  }
  return out;
}

inline double dpm_logpdf(const DPMChain& chain, const Vector& y) {
  return dpm_logpdf_rows(chain, Matrix(y.transpose()))[0];
}

/// Ancestral draws from the mixture predictive, count x N in raw units.
template <class Rng>
Matrix dpm_sample(const DPMChain& chain, Rng& rng, Index count) {
  const DPMContext& ctx = chain.context;
  require(!chain.states.empty(), ErrorKind::usage, "DPM chain is empty");
  const std::size_t L = chain.states.size();
  const double n = static_cast<double>(ctx.n());
  Matrix Y(count, ctx.N());
  std::uniform_int_distribution<std::size_t> pick_state(0, L - 1);
  std::normal_distribution<double> normal;
  std::vector<detail::RowFactor> factors(L);
  std::vector<detail::RowModel> models(L);
  for (Index i = 0; i < ctx.N(); ++i) {
    parallel_for(0, L, [&](std::size_t l) {
      const auto& st = chain.states[l];
      models[l] = detail::row_model(ctx, st.theta, i);
      factors[l] = detail::factor_row(ctx, models[l], st.rows[static_cast<std::size_t>(i)], i);
    });
    for (Index r = 0; r < count; ++r) {
      const std::size_t l = pick_state(rng);
      const auto& s = chain.states[l].rows[static_cast<std::size_t>(i)];
      const auto& rm = models[l];
      const auto& f = factors[l];
      double mean = 0.0, v = 0.0;
      if (rm.prior.m > 0) {
        const Matrix xs = row_covariates(Y.row(r), ctx.ordering, i, rm.prior.m);
        const Vector c = covariance_eval(rm.prior, f.X, xs).col(0);
        const double css = covariance_eval(rm.prior, xs, xs)(0, 0);
        const Vector w = f.chol.triangularView<Eigen::Lower>().solve(c);
        mean = c.dot(f.resid_solve);
        v = std::max(0.0, css - w.squaredNorm());
      }
      const auto sizes = s.sizes();
      std::vector<double> logw;
      for (std::size_t k = 0; k < sizes.size(); ++k)
        logw.push_back(std::log(static_cast<double>(sizes[k]) / (n + rm.zeta)));
      logw.push_back(std::log(rm.zeta / (n + rm.zeta)));
      const std::size_t k = detail::draw_log_weights(logw, rng);
      const double mu = k < s.mu.size() ? s.mu[k] : s.fresh_mu;
      const double d2 = k < s.mu.size() ? s.d2[k] : s.fresh_d2;
      Y(r, i) = mean + mu + std::sqrt(v + d2) * normal(rng);
    }
  }
  Matrix out(count, ctx.N());
  for (Index i = 0; i < ctx.N(); ++i) out.col(ctx.ordering.perm[static_cast<std::size_t>(i)]) = Y.col(i);
  return ctx.standardization.unapply_rows(out);
}

}  // namespace btmap
