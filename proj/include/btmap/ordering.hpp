#pragma once

// Maximin orderings, length scales and ordered nearest-neighbor sets.
//
// All indices are 0-based. `perm[i]` is the original index of the variable
// placed at ordered position i; neighbor lists hold ordered positions.

#include "btmap/common.hpp"
#include "btmap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace btmap {

enum class Metric { euclidean, chordal, precomputed };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::euclidean: return "euclidean";
    case Metric::chordal: return "chordal";
    case Metric::precomputed: return "precomputed";
  }
  return "unknown";
}

/// Points in the input domain together with the metric used to compare them.
class Locations {
 public:
  Locations() = default;

  static Locations euclidean(Matrix coords) {
    Locations l;
    l.metric_ = Metric::euclidean;
    l.coords_ = std::move(coords);
    l.validate();
    l.embedded_ = l.coords_;
    return l;
  }

  /// `lonlat` holds longitude, latitude in degrees. Distances are chordal
  /// lengths on the unit sphere.
  static Locations chordal(Matrix lonlat) {
    Locations l;
    l.metric_ = Metric::chordal;
    l.coords_ = std::move(lonlat);
    l.validate();
    const Index n = l.coords_.rows();
    l.embedded_.resize(n, 3);
    constexpr double deg = std::numbers::pi / 180.0;
    for (Index i = 0; i < n; ++i) {
      const double lon = l.coords_(i, 0) * deg;
      const double lat = l.coords_(i, 1) * deg;
      l.embedded_(i, 0) = std::cos(lat) * std::cos(lon);
      l.embedded_(i, 1) = std::cos(lat) * std::sin(lon);
      l.embedded_(i, 2) = std::sin(lat);
    }
    return l;
  }

  static Locations precomputed(Matrix distances) {
    Locations l;
    l.metric_ = Metric::precomputed;
    l.distances_ = std::move(distances);
    l.validate();
    return l;
  }

  Metric metric() const { return metric_; }
  Index size() const {
    return metric_ == Metric::precomputed ? distances_.rows() : coords_.rows();
  }
  const Matrix& coords() const { return coords_; }
  const Matrix& distance_matrix() const { return distances_; }

  double distance(Index i, Index j) const {
    if (metric_ == Metric::precomputed) return distances_(i, j);
    return (embedded_.row(i) - embedded_.row(j)).norm();
  }

  /// Index of the point nearest the coordinate-wise centroid. For a
  /// precomputed metric this is the point minimizing the summed squared
  /// distance, which coincides with the centroid rule in Euclidean space.
  Index central_point() const {
    const Index n = size();
    Index best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    Vector score(n);
    if (metric_ == Metric::precomputed) {
      for (Index i = 0; i < n; ++i) score[i] = distances_.row(i).squaredNorm();
    } else {
      const Eigen::RowVectorXd centroid = embedded_.colwise().mean();
      for (Index i = 0; i < n; ++i) score[i] = (embedded_.row(i) - centroid).squaredNorm();
    }
    // Symmetric layouts (grids) have exact ties; a tolerance keeps the
    // lowest-index choice stable under rounding.
    const double tol = 1e-10 * score.mean();
    for (Index i = 0; i < n; ++i)
      if (score[i] < best_val - tol) best_val = score[i], best = i;
    return best;
  }

 private:
  void validate() const {
    if (metric_ == Metric::precomputed) {
      require(distances_.rows() >= 2 && distances_.rows() == distances_.cols(), ErrorKind::data,
              "precomputed distance matrix must be square with at least 2 rows");
      require(distances_.allFinite(), ErrorKind::data, "distance matrix has non-finite entries");
      return;
    }
    require(coords_.rows() >= 2, ErrorKind::data, "need at least 2 locations");
    require(coords_.allFinite(), ErrorKind::data, "location coordinates must be finite");
    if (metric_ == Metric::chordal) {
      require(coords_.cols() == 2, ErrorKind::data, "chordal metric needs lon,lat columns");
      for (Index i = 0; i < coords_.rows(); ++i) {
        require(std::abs(coords_(i, 0)) <= 180.0 && std::abs(coords_(i, 1)) <= 90.0,
                ErrorKind::data, "lon/lat out of range at row " + std::to_string(i));
      }
    } else {
      require(coords_.cols() == 2 || coords_.cols() == 3, ErrorKind::data,
              "locations must have 2 or 3 columns");
    }
  }

  Metric metric_ = Metric::euclidean;
  Matrix coords_;
  Matrix embedded_;
  Matrix distances_;
};

struct Ordering {
  std::vector<Index> perm;
  /// ell[0] is the domain diameter; ell[i] the distance from ordered point i
  /// to its nearest predecessor.
  std::vector<double> ell;
  std::vector<std::vector<Index>> neighbors;

  Index size() const { return static_cast<Index>(perm.size()); }
};

namespace detail {
/// Drops the low 16 mantissa bits so that distances equal up to rounding
/// compare equal regardless of how the compiler contracted the arithmetic.
inline double snap_distance(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  bits = (bits + (std::uint64_t{1} << 15)) & ~((std::uint64_t{1} << 16) - 1);
  std::memcpy(&d, &bits, sizeof bits);
  return d;
}
}  // namespace detail

/// For each ordered position i, the min(m_max, i) nearest earlier positions,
/// ascending by distance with ties going to the lower position.
inline std::vector<std::vector<Index>> nearest_neighbors(const std::vector<Index>& perm,
                                                         const Locations& locs, Index m_max) {
  require(m_max >= 1, ErrorKind::usage, "m_max must be at least 1");
  const std::size_t n = perm.size();
  std::vector<std::vector<Index>> out(n);
  parallel_for(1, n, [&](std::size_t i) {
    std::vector<std::pair<double, Index>> cand;
    cand.reserve(i);
    for (std::size_t j = 0; j < i; ++j)
      cand.emplace_back(detail::snap_distance(locs.distance(perm[i], perm[j])), static_cast<Index>(j));
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(m_max), i);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    out[i].resize(k);
    for (std::size_t r = 0; r < k; ++r) out[i][r] = cand[r].second;
  });
  return out;
}

/// Exact greedy maximin ordering. The first point is the one nearest the
/// centroid unless `first` is given; ties go to the lowest original index.
inline Ordering maximin_order(const Locations& locs, Index m_max = 30,
                              std::optional<Index> first = std::nullopt) {
  const Index n = locs.size();
  require(n >= 2, ErrorKind::data, "need at least 2 locations");
  const Index start = first.value_or(locs.central_point());
  require(start >= 0 && start < n, ErrorKind::usage, "first point index out of range");

  Ordering ord;
  ord.perm.reserve(static_cast<std::size_t>(n));
  ord.ell.reserve(static_cast<std::size_t>(n));

  double diameter = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) diameter = std::max(diameter, locs.distance(i, j));

  std::vector<double> mindist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Index current = start;
  double current_ell = diameter;
  for (Index step = 0; step < n; ++step) {
    ord.perm.push_back(current);
    ord.ell.push_back(current_ell);
    taken[static_cast<std::size_t>(current)] = 1;
    Index next = -1;
    double next_val = -1.0;
    for (Index j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      auto& md = mindist[static_cast<std::size_t>(j)];
      md = std::min(md, locs.distance(current, j));
      // Values within 1e-12 (relative) count as ties; the lowest index wins.
      if (md > next_val * (1.0 + 1e-12)) next_val = md, next = j;
    }
    if (next < 0) break;
    if (next_val <= 0.0)
      fail(ErrorKind::data, "duplicate locations: point " + std::to_string(next) +
                                " coincides with an earlier point");
    current = next;
    current_ell = next_val;
  }
  ord.neighbors = nearest_neighbors(ord.perm, locs, m_max);
  return ord;
}

/// Correlation-based dissimilarity (1 - |R|)^{1/2}, where R is the
/// correlation of the sample covariance of Y (n x N) tapered elementwise by
/// exp(-dist/range).
inline Matrix correlation_distance(const Matrix& Y, double range, const Locations& locs) {
  require(Y.rows() >= 2, ErrorKind::data, "need at least 2 replicates");
  require(range > 0.0, ErrorKind::usage, "taper range must be positive");
  require(Y.cols() == locs.size(), ErrorKind::data, "data columns do not match locations");
  const Index N = Y.cols();
  const Matrix centered = Y.rowwise() - Y.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(Y.rows() - 1);
  for (Index j = 0; j < N; ++j)
    require(cov(j, j) > 0.0, ErrorKind::data, "column " + std::to_string(j) + " has zero variance");
  Matrix D = Matrix::Zero(N, N);
  for (Index i = 0; i < N; ++i) {
    for (Index j = i + 1; j < N; ++j) {
      const double taper = std::exp(-locs.distance(i, j) / range);
      const double r = std::clamp(cov(i, j) * taper / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
      const double d = std::sqrt(1.0 - std::abs(r));
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

}  // namespace btmap
