#include "btmap/scenarios.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <catch2/catch.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace btmap;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix exp_cov(const Locations& L, double range = 0.3) {
  const Index N = L.size();
  Matrix C(N, N);
  for (Index a = 0; a < N; ++a)
    for (Index b = 0; b < N; ++b) C(a, b) = std::exp(-L.distance(a, b) / range);
  return C;
}

// Conditional regression of ordered point i on all of its predecessors.
std::pair<Vector, double> exact_conditional(const Matrix& C, const Ordering& ord, Index i) {
  Matrix K(i, i);
  Vector k(i);
  for (Index a = 0; a < i; ++a) {
    k[a] = C(ord.perm[i], ord.perm[a]);
    for (Index b = 0; b < i; ++b) K(a, b) = C(ord.perm[a], ord.perm[b]);
  }
  const Vector w = K.llt().solve(k);
  return {w, 1.0 - k.dot(w)};
}

double r_squared(const Matrix& X, const Vector& y) {
  const Vector beta = X.colPivHouseholderQr().solve(y);
  const double ss = (y.array() - y.mean()).square().sum();
  return 1.0 - (y - X * beta).squaredNorm() / ss;
}

}  // namespace

TEST_CASE("LR900 first row and scenario shapes") {
  std::mt19937_64 rng(1);
  const Scenario s = make_scenario("LR900", rng);
  CHECK(s.locs.size() == 900);
  CHECK(s.truth.coef[0].size() == 0);
  CHECK(s.truth.d[0] == 1.0);
  for (Index i = 0; i < 900; ++i) {
    CHECK(s.truth.coef[i].size() <= 30);
    CHECK(s.truth.d[i] > 0.0);
  }
  const Scenario ni = make_scenario("NI3600", rng);
  CHECK(ni.locs.size() == 3600);
  CHECK(make_scenario("NR900B", rng).truth.kind == TrueKind::sine_bimodal);
  CHECK_THROWS_AS(make_scenario("XX", rng), Error);
}

TEST_CASE("LR900 rows agree with the dense conditional") {
  std::mt19937_64 rng(1);
  const Scenario s = make_scenario("LR900", rng);
  const Matrix C = exp_cov(s.locs);
  const Ordering& ord = s.truth.ordering;
  for (Index i = 1; i < 40; ++i) {
    const auto [w, v] = exact_conditional(C, ord, i);
    const double dt2 = s.truth.d[i] * s.truth.d[i];
    if (i <= 30) {
      // all predecessors are neighbors, so the truncation is exact
      Vector wt = Vector::Zero(i);
      for (Index k = 0; k < i; ++k) wt[ord.neighbors[i][k]] = s.truth.coef[i][k];
      CHECK((wt - w).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK_THAT(dt2, WithinRel(v, 1e-9));
    } else {
      // truncation cannot reduce the conditional variance, and only
      // slightly inflates it on this grid
      CHECK(dt2 >= v * (1.0 - 1e-10));
      CHECK(dt2 <= v * 1.02);
    }
  }
}

TEST_CASE("bimodal noise sits at +-3.5 d_i") {
  std::mt19937_64 rng(2);
  const Scenario s = make_scenario("NR900B", rng);
  const Matrix Y = scenario_sample(s.truth, rng, 400);
  const TrueMap& t = s.truth;
  for (Index i : {Index(0), Index(10), Index(300), Index(899)}) {
    int plus = 0;
    for (Index r = 0; r < Y.rows(); ++r) {
      Vector yo(t.N());
      for (Index j = 0; j < t.N(); ++j) yo[j] = Y(r, t.ordering.perm[j]);
      const double e = (yo[i] - t.mean(yo, i)) / t.d[i];
      // each residual lies within 5 sd of one of the two modes
      CHECK(std::min(std::abs(e - 3.5), std::abs(e + 3.5)) < 5.0);
      plus += e > 0;
    }
    CHECK(std::abs(plus - 200) < 4 * 10);  // binomial sd is 10
  }
}

TEST_CASE("LR900 sample covariance matches the exponential covariance") {
  std::mt19937_64 rng(3);
  const Scenario s = make_scenario("LR900", rng);
  const Index draws = 10000;
  const Matrix Y = scenario_sample(s.truth, rng, draws);
  std::mt19937_64 pick(4);
  std::uniform_int_distribution<Index> loc(0, 899);
  for (int p = 0; p < 20; ++p) {
    const Index a = loc(pick);
    const Index b = p < 10 ? std::min<Index>(899, a + 1 + p % 3) : loc(pick);
    const Eigen::ArrayXd prod = Y.col(a).array() * Y.col(b).array();
    const double cov = prod.mean();
    const double se = std::sqrt((prod - cov).square().sum() / (draws - 1) / draws);
    CHECK(std::abs(cov - std::exp(-s.locs.distance(a, b) / 0.3)) <= 4 * se);
  }
}

TEST_CASE("NR900 exhibits the sine ridge") {
  std::mt19937_64 rng(5);
  const Scenario s = make_scenario("NR900", rng);
  const TrueMap& t = s.truth;
  const Index draws = 500, i = 79;
  const Matrix Y = scenario_sample(t, rng, draws);
  const auto& nb = t.ordering.neighbors[i];
  Matrix Xl(draws, 3), Xs(draws, 4);
  Vector y(draws);
  for (Index r = 0; r < draws; ++r) {
    const double a = Y(r, t.ordering.perm[nb[0]]), b = Y(r, t.ordering.perm[nb[1]]);
    Xl.row(r) << 1.0, a, b;
    Xs.row(r) << 1.0, a, b, std::sin(4.0 * (t.coef[i][0] * a + t.coef[i][1] * b));
    y[r] = Y(r, t.ordering.perm[i]);
  }
  CHECK(r_squared(Xs, y) > r_squared(Xl, y) + 0.05);
}

TEST_CASE("linear log density equals the dense Gaussian") {
  const Locations L = Locations::euclidean(unit_grid(5));
  const TrueMap t = build_true_map(L, TrueKind::linear, 24);
  const Matrix C = exp_cov(L);
  const Eigen::LLT<Matrix> llt(C);
  const double logdet = 2.0 * Eigen::ArrayXd(Matrix(llt.matrixL()).diagonal()).log().sum();
  std::mt19937_64 rng(6);
  const Matrix Y = scenario_sample(t, rng, 5);
  for (Index r = 0; r < 5; ++r) {
    const Vector y = Y.row(r).transpose();
    const double quad = y.dot(llt.solve(y));
    const double expect = -0.5 * (25 * std::log(2 * std::numbers::pi) + logdet + quad);
    CHECK_THAT(true_logpdf(t, y), WithinAbs(expect, 1e-8));
  }
  const Vector zero = Vector::Zero(25);
  Vector bumped = zero;
  bumped[12] = 3.0;
  CHECK(true_logpdf(t, zero) > true_logpdf(t, bumped));
}

TEST_CASE("bimodal density integrates to one") {
  Matrix P(2, 2);
  P << 0.2, 0.5, 0.3, 0.5;
  const TrueMap t = build_true_map(Locations::euclidean(P), TrueKind::sine_bimodal);
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto outer = [&](double a) {
    auto inner = [&](double b) { return std::exp(true_logpdf(t, Vector{{a, b}})); };
    return GK::integrate(inner, -15.0, 15.0, 15, 1e-12);
  };
  CHECK_THAT(GK::integrate(outer, -15.0, 15.0, 15, 1e-12), WithinAbs(1.0, 1e-6));
}

TEST_CASE("sampling is seeded") {
  std::mt19937_64 a(7), b(7);
  const Scenario s1 = make_scenario("NI3600", a), s2 = make_scenario("NI3600", b);
  CHECK(scenario_sample(s1.truth, a, 3) == scenario_sample(s2.truth, b, 3));
}

TEST_CASE("sampler and density agree on the entropy") {
  std::mt19937_64 rng(8);
  const Scenario s = make_scenario("LR900", rng);
  const Index draws = 2000;
  const Vector lp = true_logpdf_rows(s.truth, scenario_sample(s.truth, rng, draws));
  const double est = -lp.mean();
  const double se = std::sqrt((lp.array() + est).square().sum() / (draws - 1) / draws);
  double exact = 0.0;
  for (Index i = 0; i < 900; ++i)
    exact += 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * s.truth.d[i] * s.truth.d[i]);
  CHECK(std::abs(est - exact) <= 3 * se);
}
