#include "menet/estimation.hpp"

#include <algorithm>
#include <cmath>

#include "menet/error.hpp"

namespace menet {
namespace {

void check_inputs(const DenseMatrix& x, const Mask& mask, std::string_view who) {
  if (static_cast<std::size_t>(x.rows()) != mask.rows() ||
      static_cast<std::size_t>(x.cols()) != mask.cols()) {
    throw Error(Errc::shape_mismatch, std::string(who) + ": mask shape does not match matrix");
  }
  require_finite(x, who);
  if (mask.observed_count() == 0) {
    throw Error(Errc::insufficient_observations,
                std::string(who) + ": mask observes no entries");
  }
}

DenseMatrix clip(DenseMatrix m, const EstimatorConfig& cfg) {
  return m.cwiseMax(cfg.clip_lo).cwiseMin(cfg.clip_hi);
}

DenseMatrix zero_filled(const DenseMatrix& x, const Mask& mask) {
  return x.cwiseProduct(mask.indicator());
}

}  // namespace

std::string to_string(EstimatorMethod m) {
  switch (m) {
    case EstimatorMethod::usvt: return "usvt";
    case EstimatorMethod::soft_impute: return "soft_impute";
    case EstimatorMethod::nuclear_norm: return "nuclear_norm";
  }
  return "unknown";
}

EstimatorMethod parse_estimator_method(const std::string& name) {
  if (name == "usvt") return EstimatorMethod::usvt;
  if (name == "soft_impute" || name == "softimpute" || name == "soft-impute")
    return EstimatorMethod::soft_impute;
  if (name == "nuclear_norm" || name == "nuclear") return EstimatorMethod::nuclear_norm;
  throw Error(Errc::invalid_argument, "unknown estimator method '" + name + "'");
}

void EstimatorConfig::validate() const {
  if (!(usvt_eta > 0.0)) throw Error(Errc::invalid_argument, "usvt_eta must be > 0");
  if (!(si_lambda >= 0.0)) throw Error(Errc::invalid_argument, "si_lambda must be >= 0");
  if (max_iters < 1) throw Error(Errc::invalid_argument, "max_iters must be >= 1");
  if (!(tol > 0.0)) throw Error(Errc::invalid_argument, "tol must be > 0");
  if (!(nn_lambda_min > 0.0)) throw Error(Errc::invalid_argument, "nn_lambda_min must be > 0");
  if (!(nn_anneal > 0.0 && nn_anneal < 1.0))
    throw Error(Errc::invalid_argument, "nn_anneal must lie in (0, 1)");
  if (!(clip_lo <= clip_hi)) throw Error(Errc::invalid_argument, "clip range is empty");
}

DenseMatrix usvt(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg) {
  cfg.validate();
  check_inputs(x, mask, "usvt");
  const double p_hat = mask.observed_fraction();
  const SvdResult s = svd(zero_filled(x, mask) / p_hat);
  const double dim = static_cast<double>(std::max(x.rows(), x.cols()));
  const double threshold = (2.0 + cfg.usvt_eta) * std::sqrt(dim * p_hat);
  Eigen::Index kept = 0;
  while (kept < s.sigma.size() && s.sigma[kept] > threshold) ++kept;
  return clip(reconstruct(s, kept), cfg);
}

double soft_impute_objective(const DenseMatrix& m, const DenseMatrix& x, const Mask& mask,
                             double lambda) {
  const double fit = 0.5 * (m - x).cwiseProduct(mask.indicator()).squaredNorm();
  return fit + lambda * nuclear_norm(m);
}

SoftImputeTrace soft_impute_trace(const DenseMatrix& x, const Mask& mask,
                                  const EstimatorConfig& cfg, double lambda,
                                  const std::optional<DenseMatrix>& start) {
  cfg.validate();
  check_inputs(x, mask, "soft_impute");
  if (!(lambda >= 0.0)) throw Error(Errc::invalid_argument, "soft_impute: lambda must be >= 0");

  const DenseMatrix observed = mask.indicator();
  const DenseMatrix x_obs = x.cwiseProduct(observed);
  const DenseMatrix unobserved = DenseMatrix::Ones(x.rows(), x.cols()) - observed;

  SoftImputeTrace out;
  out.estimate = start ? *start : DenseMatrix::Zero(x.rows(), x.cols());
  if (out.estimate.rows() != x.rows() || out.estimate.cols() != x.cols()) {
    throw Error(Errc::shape_mismatch, "soft_impute: warm start shape does not match");
  }
  auto fit = [&](const DenseMatrix& m) {
    return 0.5 * (m.cwiseProduct(observed) - x_obs).squaredNorm();
  };
  out.objective.push_back(start ? soft_impute_objective(out.estimate, x, mask, lambda)
                                : fit(out.estimate));

  for (int it = 0; it < cfg.max_iters; ++it) {
    const DenseMatrix filled = x_obs + out.estimate.cwiseProduct(unobserved);
    SvdResult s = svd(filled);
    double shrunk_sum = 0.0;
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < s.sigma.size(); ++i) {
      s.sigma[i] = std::max(s.sigma[i] - lambda, 0.0);
      shrunk_sum += s.sigma[i];
      if (s.sigma[i] > 0.0) kept = i + 1;
    }
    DenseMatrix next = reconstruct(s, kept);
    require_finite(next, "soft_impute");

    const double prev_norm = out.estimate.norm();
    const double change = (next - out.estimate).norm();
    out.estimate = std::move(next);
    out.iterations = it + 1;
    out.objective.push_back(fit(out.estimate) + lambda * shrunk_sum);

    const bool done = prev_norm > 0.0 ? change / prev_norm <= cfg.tol : change == 0.0;
    if (done) {
      out.converged = true;
      break;
    }
  }
  return out;
}

DenseMatrix soft_impute(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg) {
  return clip(soft_impute_trace(x, mask, cfg, cfg.si_lambda).estimate, cfg);
}

DenseMatrix nuclear_norm_min(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg) {
  cfg.validate();
  check_inputs(x, mask, "nuclear_norm_min");
  if (mask.all_observed()) return clip(x, cfg);

  const DenseMatrix observed = mask.indicator();
  const DenseMatrix x_obs = x.cwiseProduct(observed);
  const double lambda0 = svd(x_obs).sigma[0];

  DenseMatrix current = DenseMatrix::Zero(x.rows(), x.cols());
  if (lambda0 > 0.0) {
    // Stage at lambda0 itself is the zero matrix; start one step down.
    double lambda = lambda0 * cfg.nn_anneal;
    while (true) {
      const double stage = std::max(lambda, cfg.nn_lambda_min);
      current = soft_impute_trace(x, mask, cfg, stage, current).estimate;
      if (stage <= cfg.nn_lambda_min) break;
      lambda *= cfg.nn_anneal;
    }
  }
  const DenseMatrix result = x_obs + current.cwiseProduct(DenseMatrix::Ones(x.rows(), x.cols()) - observed);
  return clip(result, cfg);
}

DenseMatrix estimate(const DenseMatrix& x, const Mask& mask, const EstimatorConfig& cfg) {
  switch (cfg.method) {
    case EstimatorMethod::usvt: return usvt(x, mask, cfg);
    case EstimatorMethod::soft_impute: return soft_impute(x, mask, cfg);
    case EstimatorMethod::nuclear_norm: return nuclear_norm_min(x, mask, cfg);
  }
  throw Error(Errc::invalid_argument, "estimate: unknown method");
}

ImageTensor reconstruct_image(const ImageTensor& img, double p, std::uint64_t seed,
                              const EstimatorConfig& cfg) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error(Errc::invalid_argument, "reconstruct_image: p must lie in (0, 1]");
  }
  const DenseMatrix wide = to_wide_matrix(img);
  const Mask mask = sample_mask(static_cast<std::size_t>(wide.rows()),
                                static_cast<std::size_t>(wide.cols()), p, seed);
  return from_wide_matrix(estimate(wide, mask, cfg), img.channels());
}

}  // namespace menet
