#pragma once

#include "btmap/common.hpp"

#include <cmath>
#include <string>

namespace btmap {

/// Per-variable affine standardization y_std = (y_raw - mean) / sd.
/// A disabled standardization is the identity (mean 0, sd 1).
struct Standardization {
  Vector mean;
  Vector sd;

  static Standardization identity(Index N) {
    return {Vector::Zero(N), Vector::Ones(N)};
  }

  /// Column means and (n-1)-denominator standard deviations of Y (n x N).
  static Standardization estimate(const Matrix& Y) {
    require(Y.rows() >= 2, ErrorKind::data, "need at least 2 replicates to standardize");
    Standardization s;
    s.mean = Y.colwise().mean().transpose();
    s.sd.resize(Y.cols());
    for (Index j = 0; j < Y.cols(); ++j) {
      const double ss = (Y.col(j).array() - s.mean[j]).square().sum();
      s.sd[j] = std::sqrt(ss / static_cast<double>(Y.rows() - 1));
      require(s.sd[j] > 0.0 && std::isfinite(s.sd[j]), ErrorKind::data,
              "column " + std::to_string(j) + " is constant");
    }
    return s;
  }

  Index size() const { return mean.size(); }

  Vector apply(const Vector& y) const { return (y - mean).cwiseQuotient(sd); }
  Vector unapply(const Vector& y) const { return y.cwiseProduct(sd) + mean; }

  /// Rows of Y are fields.
  Matrix apply_rows(const Matrix& Y) const {
    return (Y.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  }
  Matrix unapply_rows(const Matrix& Y) const {
    return (Y.array().rowwise() * sd.transpose().array()).matrix().rowwise() + mean.transpose();
  }

  /// log |d y_std / d y_raw|.
  double log_jacobian() const { return -sd.array().log().sum(); }
};

}  // namespace btmap
