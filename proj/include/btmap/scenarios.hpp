#pragma once

// Ground-truth triangular maps built from an exponential-covariance Gaussian
// process on the unit square, with optional sine nonlinearity and bimodal
// noise. Samples are returned in original location order.

#include "btmap/common.hpp"
#include "btmap/ordering.hpp"
#include "btmap/parallel.hpp"
#include "btmap/special.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace btmap {

enum class TrueKind { linear, sine, sine_bimodal };

struct TrueMap {
  Ordering ordering;
  std::vector<Vector> coef;  // b_{i,k} for the truncated neighbor set
  Vector d;                  // conditional standard deviations d_i
  TrueKind kind = TrueKind::linear;
  double amplitude = 2.0;
  double frequency = 4.0;
  double offset = 3.5;  // bimodal noise means are +-offset * d_i

  Index N() const { return ordering.size(); }

  /// f_i evaluated on ordered values y_ord.
  double mean(const Vector& y_ord, Index i) const {
    const auto& b = coef[static_cast<std::size_t>(i)];
    const auto& nb = ordering.neighbors[static_cast<std::size_t>(i)];
    double lin = 0.0;
    for (Index k = 0; k < b.size(); ++k) lin += b[k] * y_ord[nb[static_cast<std::size_t>(k)]];
    if (kind == TrueKind::linear || b.size() == 0) return lin;
    double pair = 0.0;
    for (Index k = 0; k < std::min<Index>(2, b.size()); ++k)
      pair += b[k] * y_ord[nb[static_cast<std::size_t>(k)]];
    return lin + amplitude * std::sin(frequency * pair);
  }
};

struct Scenario {
  std::string name;
  Locations locs;
  TrueMap truth;
};

/// n_side x n_side grid on [0,1]^2, first coordinate varying fastest.
inline Matrix unit_grid(Index n_side) {
  Matrix g(n_side * n_side, 2);
  for (Index r = 0; r < n_side; ++r)
    for (Index c = 0; c < n_side; ++c) {
      g(r * n_side + c, 0) = static_cast<double>(c) / static_cast<double>(n_side - 1);
      g(r * n_side + c, 1) = static_cast<double>(r) / static_cast<double>(n_side - 1);
    }
  return g;
}

/// Per-row regressions implied by exp(-h/range) on the maximin ordering,
/// truncated to the `cap` nearest earlier neighbors.
inline TrueMap build_true_map(const Locations& locs, TrueKind kind, Index cap = 30,
                              double range = 0.3) {
  TrueMap t;
  t.kind = kind;
  t.ordering = maximin_order(locs, cap);
  const Index N = locs.size();
  t.coef.resize(static_cast<std::size_t>(N));
  t.d.resize(N);
  const auto& perm = t.ordering.perm;
  parallel_for(0, static_cast<std::size_t>(N), [&](std::size_t ui) {
    const auto& nb = t.ordering.neighbors[ui];
    const auto m = static_cast<Index>(nb.size());
    if (m == 0) {
      t.coef[ui] = Vector();
      t.d[static_cast<Index>(ui)] = 1.0;
      return;
    }
    Matrix K(m, m);
    Vector k(m);
    for (Index a = 0; a < m; ++a) {
      const Index pa = perm[static_cast<std::size_t>(nb[static_cast<std::size_t>(a)])];
      k[a] = std::exp(-locs.distance(perm[ui], pa) / range);
      for (Index b = 0; b < m; ++b) {
        const Index pb = perm[static_cast<std::size_t>(nb[static_cast<std::size_t>(b)])];
        K(a, b) = std::exp(-locs.distance(pa, pb) / range);
      }
    }
    Eigen::LLT<Matrix> llt(K);
    require(llt.info() == Eigen::Success, ErrorKind::numerical, "neighbor covariance not positive definite");
    t.coef[ui] = llt.solve(k);
    t.d[static_cast<Index>(ui)] = std::sqrt(std::max(1e-300, 1.0 - k.dot(t.coef[ui])));
  });
  return t;
}

inline TrueKind scenario_kind(const std::string& name) {
  if (name == "LR900") return TrueKind::linear;
  if (name == "NR900" || name == "NI3600") return TrueKind::sine;
  if (name == "NR900B") return TrueKind::sine_bimodal;
  fail(ErrorKind::usage, "unknown scenario '" + name + "' (expected LR900, NR900, NI3600, NR900B)");
}

/// The four simulation scenarios. Only NI3600 consumes randomness (its
/// locations).
template <class Rng>
Scenario make_scenario(const std::string& name, Rng& rng) {
  Scenario s;
  s.name = name;
  const TrueKind kind = scenario_kind(name);
  if (name == "NI3600") {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix pts(3600, 2);
    for (Index i = 0; i < pts.rows(); ++i) {
      pts(i, 0) = unif(rng);
      pts(i, 1) = unif(rng);
    }
    s.locs = Locations::euclidean(std::move(pts));
  } else {
    s.locs = Locations::euclidean(unit_grid(30));
  }
  s.truth = build_true_map(s.locs, kind);
  return s;
}

/// Ancestral draws from the true map, count x N in original order.
template <class Rng>
Matrix scenario_sample(const TrueMap& t, Rng& rng, Index count) {
  const Index N = t.N();
  Matrix noise(count, N);
  Matrix sign(count, N);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  for (Index r = 0; r < count; ++r)
    for (Index i = 0; i < N; ++i) {
      noise(r, i) = normal(rng);
      sign(r, i) = t.kind == TrueKind::sine_bimodal ? (coin(rng) ? 1.0 : -1.0) : 0.0;
    }
  Matrix out(count, N);
  parallel_for(0, static_cast<std::size_t>(count), [&](std::size_t ur) {
    const auto r = static_cast<Index>(ur);
    Vector y(N);
    for (Index i = 0; i < N; ++i)
      y[i] = t.mean(y, i) + t.d[i] * (noise(r, i) + t.offset * sign(r, i));
    for (Index i = 0; i < N; ++i) out(r, t.ordering.perm[static_cast<std::size_t>(i)]) = y[i];
  });
  return out;
}

/// Exact log density of the true map at a field in original order.
inline double true_logpdf(const TrueMap& t, const Vector& y_raw) {
  require(y_raw.size() == t.N(), ErrorKind::data, "field length does not match true map");
  Vector y(t.N());
  for (Index i = 0; i < t.N(); ++i) y[i] = y_raw[t.ordering.perm[static_cast<std::size_t>(i)]];
  double total = 0.0;
  for (Index i = 0; i < t.N(); ++i) {
    const double f = t.mean(y, i);
    const double d2 = t.d[i] * t.d[i];
    if (t.kind == TrueKind::sine_bimodal) {
      const double mu = t.offset * t.d[i];
      const double a = special::normal_logpdf(y[i], f + mu, d2);
      const double b = special::normal_logpdf(y[i], f - mu, d2);
      const double hi = std::max(a, b);
      total += hi + std::log(0.5 * (std::exp(a - hi) + std::exp(b - hi)));
    } else {
      total += special::normal_logpdf(y[i], f, d2);
    }
  }
  return total;
}

inline Vector true_logpdf_rows(const TrueMap& t, const Matrix& fields) {
  Vector out(fields.rows());
  parallel_for(0, static_cast<std::size_t>(fields.rows()), [&](std::size_t r) {
    out[static_cast<Index>(r)] = true_logpdf(t, fields.row(static_cast<Index>(r)).transpose());
  });
  return out;
}

}  // namespace btmap
