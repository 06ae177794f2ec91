#pragma once

#include <Eigen/Dense>

#include "toolcall/errors.hpp"

namespace toolcall {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-feature z-score transform. Zero-variance features keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw InvalidArgument("standardizer: feature dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Vector apply(const Vector& x) const {
    if (x.size() != mean.size()) throw InvalidArgument("standardizer: feature dimension mismatch");
    return (x - mean).cwiseQuotient(scale);
  }
};

// Population statistics (divide by n).
inline Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() < 2) throw InvalidArgument("fit_standardizer: need at least 2 rows");
  Standardizer st{Vector(x.cols()), Vector(x.cols())};
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j);
    if (col.minCoeff() == col.maxCoeff()) {
      st.mean(j) = col(0);
      st.scale(j) = 1.0;
      continue;
    }
    const double mu = col.sum() / n;
    const double var = (col.array() - mu).square().sum() / n;
    st.mean(j) = mu;
    st.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

}  // namespace toolcall
