#pragma once

// Small dense real linear algebra used by the certificate machinery.
//
// Matrices here are tiny (a few dozen rows at most), so everything is dense
// and direct. The symmetric eigen-solver is Eigen's SelfAdjointEigenSolver
// (Householder tridiagonalization followed by implicit symmetric QR).

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "stocon/errors.hpp"

namespace stocon {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace matalg {

inline constexpr double kSymmetryTolerance = 1e-10;

struct SymEigResult {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

struct BlockBound {
  bool applicable = false;
  double bound = 0.0;
};

inline Mat symmetric_part(const Mat& a) {
  require(a.rows() == a.cols(), ErrorKind::kDimensionMismatch,
          "symmetric_part needs a square matrix");
  return 0.5 * (a + a.transpose());
}

inline bool is_symmetric(const Mat& a, double tol = kSymmetryTolerance) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline SymEigResult extreme_eigs(const Mat& a) {
  require(a.rows() == a.cols() && a.rows() > 0, ErrorKind::kDimensionMismatch,
          "extreme_eigs needs a non-empty square matrix");
  require(is_symmetric(a), ErrorKind::kNotSymmetric,
          "extreme_eigs input is not symmetric");
  if (a.rows() == 1) return {a(0, 0), a(0, 0)};
  // Only the lower triangle is read; symmetrize so tolerance-level asymmetry
  // cannot bias the result.
  Eigen::SelfAdjointEigenSolver<Mat> solver(symmetric_part(a),
                                            Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

/// λ_max of the symmetric part of an arbitrary square matrix.
inline double lambda_max_sym(const Mat& a) {
  return extreme_eigs(symmetric_part(a)).lambda_max;
}

inline double lambda_min_sym(const Mat& a) {
  return extreme_eigs(symmetric_part(a)).lambda_min;
}

inline double largest_singular_value(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

/// Ratio of extreme singular values; +inf for singular input.
inline double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

/// [[a1, a21ᵀ], [a21, a2]].
inline Mat assemble_block(const Mat& a1, const Mat& a2, const Mat& a21) {
  require(a21.rows() == a2.rows() && a21.cols() == a1.cols(),
          ErrorKind::kDimensionMismatch, "assemble_block: a21 shape");
  const auto n1 = a1.rows();
  const auto n2 = a2.rows();
  Mat out(n1 + n2, n1 + n2);
  out.topLeftCorner(n1, n1) = a1;
  out.topRightCorner(n1, n2) = a21.transpose();
  out.bottomLeftCorner(n2, n1) = a21;
  out.bottomRightCorner(n2, n2) = a2;
  return out;
}

inline Mat block_diag(const Mat& a, const Mat& b) {
  Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

/// Lower bound on λ_min([[a1, a21ᵀ], [a21, a2]]) from the diagonal blocks'
/// smallest eigenvalues and the coupling's largest singular value. Applicable
/// when sing²(a21) < λ_min(a1)·λ_min(a2), which also makes the block matrix
/// positive definite.
inline BlockBound block_min_eig_lower_bound(const Mat& a1, const Mat& a2,
                                            const Mat& a21) {
  require(a21.rows() == a2.rows() && a21.cols() == a1.cols(),
          ErrorKind::kDimensionMismatch, "block bound: a21 shape");
  const double l1 = extreme_eigs(a1).lambda_min;
  const double l2 = extreme_eigs(a2).lambda_min;
  require(l1 > 0.0, ErrorKind::kNotPositiveDefinite, "block bound: a1");
  require(l2 > 0.0, ErrorKind::kNotPositiveDefinite, "block bound: a2");
  const double s = largest_singular_value(a21);
  const double s2 = s * s;
  const double half_gap = 0.5 * (l1 - l2);
  BlockBound out;
  out.applicable = s2 < l1 * l2;
  out.bound = 0.5 * (l1 + l2) - std::sqrt(half_gap * half_gap + s2);
  return out;
}

}  // namespace matalg
}  // namespace stocon
