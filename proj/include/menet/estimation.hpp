#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "menet/image.hpp"
#include "menet/masking.hpp"
#include "menet/numerics.hpp"

namespace menet {

enum class EstimatorMethod { usvt, soft_impute, nuclear_norm };

std::string to_string(EstimatorMethod m);
EstimatorMethod parse_estimator_method(const std::string& name);

struct EstimatorConfig {
  EstimatorMethod method = EstimatorMethod::nuclear_norm;
  double usvt_eta = 0.01;
  double si_lambda = 0.1;
  int max_iters = 200;
  double tol = 1e-4;
  double nn_lambda_min = 1e-3;
  double nn_anneal = 0.7;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  /// Throws Error{invalid_argument} on the first violated constraint.
  void validate() const;

  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

/// Universal singular value thresholding: zero-fill, rescale by 1/p_hat, keep
/// singular values above (2 + eta) sqrt(max(m, n) p_hat), clip.
DenseMatrix usvt(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg);

/// Diagnostics of one Soft-Impute run.
struct SoftImputeTrace {
  DenseMatrix estimate;            // unclipped
  std::vector<double> objective;   // objective[k] evaluated at iterate k; iterate 0 is the start
  int iterations = 0;
  bool converged = false;
};

/// Soft-Impute iteration M <- svt_shrink(P_obs(x) + P_unobs(M), lambda) from
/// `start` (zero when empty) until the relative Frobenius change drops to
/// cfg.tol or cfg.max_iters is reached. The output is not clipped.
SoftImputeTrace soft_impute_trace(const DenseMatrix& x, const Mask& mask,
                                  const EstimatorConfig& cfg, double lambda,
                                  const std::optional<DenseMatrix>& start = std::nullopt);

/// 0.5 * sum over observed (m_ij - x_ij)^2 + lambda * ||m||_*.
double soft_impute_objective(const DenseMatrix& m, const DenseMatrix& x, const Mask& mask,
                             double lambda);

/// Soft-Impute at cfg.si_lambda, clipped.
DenseMatrix soft_impute(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg);

/// Minimum nuclear norm completion with observed entries held fixed.
///
/// Solved by continuation: Soft-Impute along lambda_0 = sigma_1(P_obs(x)),
/// lambda_{k+1} = nn_anneal * lambda_k, warm-starting each stage, down to
/// nn_lambda_min. Observed entries are then reset to their observed values
/// and the result clipped.
DenseMatrix nuclear_norm_min(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg);

/// Dispatch on cfg.method.
DenseMatrix estimate(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg);

/// Mask the wide matrix of `img` with probability p under `seed`, estimate,
/// and convert back.
ImageTensor reconstruct_image(const ImageTensor& img, double p, std::uint64_t seed,
                              const EstimatorConfig& cfg);

}  // namespace menet
