#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace menet {

/// Real-valued dense matrix. Images, masks-as-indicators and gradients all
/// travel in this type; entries are required to be finite at module
/// boundaries (see require_finite).
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD, k = min(rows, cols).
///
/// sigma is non-increasing and non-negative. Each left singular vector is
/// sign-normalized so that its largest-magnitude entry is positive (the
/// first such entry on ties); the matching right vector flips with it.
struct SvdResult {
  DenseMatrix u;   // m x k
  Vector sigma;    // k
  DenseMatrix vt;  // k x n
};

/// Throws Error{non_finite} naming `what` if any entry is NaN or infinite.
void require_finite(const DenseMatrix& a, std::string_view what);

SvdResult svd(const DenseMatrix& a);

/// Proximal operator of lambda * nuclear norm: U diag(max(sigma - lambda, 0)) V^T.
DenseMatrix svt_shrink(const DenseMatrix& a, double lambda);

double frobenius_norm(const DenseMatrix& a);
double nuclear_norm(const DenseMatrix& a);

/// Reassemble u * diag(sigma) * vt using only the leading `rank` triplets.
DenseMatrix reconstruct(const SvdResult& s, Eigen::Index rank);

}  // namespace menet
