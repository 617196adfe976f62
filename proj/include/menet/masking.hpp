#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "menet/numerics.hpp"

namespace menet {

/// Bernoulli observation pattern over a rows x cols grid.
class Mask {
 public:
  Mask(std::size_t rows, std::size_t cols, std::vector<bool> observed, double p_nominal);

  /// Every entry observed; used when a caller needs the identity pattern.
  static Mask full(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double p_nominal() const { return p_nominal_; }

  bool observed(std::size_t r, std::size_t c) const { return observed_[r * cols_ + c]; }
  const std::vector<bool>& entries() const { return observed_; }

  std::size_t observed_count() const;
  double observed_fraction() const;
  bool all_observed() const { return observed_count() == observed_.size(); }

  /// 1.0 where observed, 0.0 elsewhere.
  DenseMatrix indicator() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<bool> observed_;  // row-major
  double p_nominal_;
};

/// Each entry is observed independently with probability p. Entry k is kept
/// iff the k-th output of CounterRng(seed) is below p, so the mask is a pure
/// function of (rows, cols, p, seed).
Mask sample_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed);

enum class ScheduleEndpoint { exclusive, inclusive };

/// The n training observation probabilities.
struct MaskSchedule {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  friend bool operator==(const MaskSchedule&, const MaskSchedule&) = default;
};

/// n probabilities spaced evenly from a toward b.
///
/// exclusive (default): a + i (b - a) / n for i = 0..n-1, so "0.6 -> 0.8"
/// with n = 10 gives 0.60, 0.62, ..., 0.78.
/// inclusive: a + i (b - a) / (n - 1), ending exactly at b.
MaskSchedule make_schedule(double a, double b, std::size_t n,
                           ScheduleEndpoint endpoint = ScheduleEndpoint::exclusive);

/// Mean of the schedule: the single p used at inference time.
double inference_p(const MaskSchedule& s);

}  // namespace menet
