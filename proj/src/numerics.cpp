#include "menet/numerics.hpp"

#include <cmath>
#include <string>

#include "menet/error.hpp"

namespace menet {
namespace {

std::string shape_of(const DenseMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

// Largest-magnitude entry of each left vector made positive.
void normalize_signs(SvdResult& s) {
  for (Eigen::Index j = 0; j < s.u.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < s.u.rows(); ++i) {
      const double mag = std::abs(s.u(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (s.u(arg, j) < 0.0) {
      s.u.col(j) = -s.u.col(j);
      s.vt.row(j) = -s.vt.row(j);
    }
  }
}

}  // namespace

void require_finite(const DenseMatrix& a, std::string_view what) {
  if (!a.allFinite()) {
    throw Error(Errc::non_finite,
                std::string(what) + ": matrix " + shape_of(a) + " has non-finite entries");
  }
}

SvdResult svd(const DenseMatrix& a) {
  require_finite(a, "svd");
  if (a.size() == 0) throw Error(Errc::shape_mismatch, "svd: empty matrix");

  // Two-sided Jacobi is the more accurate of the two and is fast on the small
  // image-sized matrices this library lives on; larger inputs go through
  // divide-and-conquer bidiagonalization.
  constexpr Eigen::Index kJacobiLimit = 64;
  SvdResult out;
  Eigen::ComputationInfo info;
  if (std::min(a.rows(), a.cols()) <= kJacobiLimit) {
    Eigen::JacobiSVD<DenseMatrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    info = solver.info();
    out.u = solver.matrixU();
    out.sigma = solver.singularValues();
    out.vt = solver.matrixV().transpose();
  } else {
    Eigen::BDCSVD<DenseMatrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    info = solver.info();
    out.u = solver.matrixU();
    out.sigma = solver.singularValues();
    out.vt = solver.matrixV().transpose();
  }
  if (info != Eigen::Success || !out.sigma.allFinite()) {
    throw Error(Errc::numerical_failure, "svd did not converge on a " + shape_of(a) + " matrix");
  }
  normalize_signs(out);
  return out;
}

DenseMatrix reconstruct(const SvdResult& s, Eigen::Index rank) {
  rank = std::min<Eigen::Index>(rank, s.sigma.size());
  if (rank <= 0) return DenseMatrix::Zero(s.u.rows(), s.vt.cols());
  return s.u.leftCols(rank) * s.sigma.head(rank).asDiagonal() * s.vt.topRows(rank);
}

DenseMatrix svt_shrink(const DenseMatrix& a, double lambda) {
  if (!(lambda >= 0.0)) throw Error(Errc::invalid_argument, "svt_shrink: lambda must be >= 0");
  SvdResult s = svd(a);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < s.sigma.size(); ++i) {
    s.sigma[i] = std::max(s.sigma[i] - lambda, 0.0);
    if (s.sigma[i] > 0.0) kept = i + 1;
  }
  return reconstruct(s, kept);
}

double frobenius_norm(const DenseMatrix& a) {
  require_finite(a, "frobenius_norm");
  return a.norm();
}

double nuclear_norm(const DenseMatrix& a) { return svd(a).sigma.sum(); }

}  // namespace menet
