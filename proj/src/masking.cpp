#include "menet/masking.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "menet/error.hpp"
#include "menet/rng.hpp"

namespace menet {

Mask::Mask(std::size_t rows, std::size_t cols, std::vector<bool> observed, double p_nominal)
    : rows_(rows), cols_(cols), observed_(std::move(observed)), p_nominal_(p_nominal) {
  if (observed_.size() != rows_ * cols_) {
    throw Error(Errc::shape_mismatch, "mask: entry count " + std::to_string(observed_.size()) +
                                          " does not match " + std::to_string(rows_) + "x" +
                                          std::to_string(cols_));
  }
}

Mask Mask::full(std::size_t rows, std::size_t cols) {
  return Mask(rows, cols, std::vector<bool>(rows * cols, true), 1.0);
}

std::size_t Mask::observed_count() const {
  return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), true));
}

double Mask::observed_fraction() const {
  return observed_.empty() ? 0.0
                           : static_cast<double>(observed_count()) /
                                 static_cast<double>(observed_.size());
}

DenseMatrix Mask::indicator() const {
  DenseMatrix m(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) m(r, c) = observed(r, c) ? 1.0 : 0.0;
  return m;
}

Mask sample_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(Errc::invalid_argument, "sample_mask: p must lie in [0, 1], got " +
                                            std::to_string(p));
  }
  const CounterRng rng(seed);
  std::vector<bool> observed(rows * cols);
  for (std::size_t k = 0; k < observed.size(); ++k) observed[k] = rng.uniform_at(k) < p;
  return Mask(rows, cols, std::move(observed), p);
}

MaskSchedule make_schedule(double a, double b, std::size_t n, ScheduleEndpoint endpoint) {
  if (n == 0) throw Error(Errc::invalid_argument, "make_schedule: n must be >= 1");
  if (!(a > 0.0 && b <= 1.0)) {
    throw Error(Errc::invalid_range, "make_schedule: need 0 < a <= b <= 1");
  }
  if (a > b) {
    throw Error(Errc::invalid_range, "make_schedule: a (" + std::to_string(a) +
                                         ") exceeds b (" + std::to_string(b) + ")");
  }
  MaskSchedule s;
  s.probs.reserve(n);
  if (n == 1) {
    s.probs.push_back(a);
    return s;
  }
  const double denom = endpoint == ScheduleEndpoint::exclusive ? static_cast<double>(n)
                                                                : static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    s.probs.push_back(a + static_cast<double>(i) * (b - a) / denom);
  }
  return s;
}

double inference_p(const MaskSchedule& s) {
  if (s.probs.empty()) throw Error(Errc::empty_input, "inference_p: empty schedule");
  return std::accumulate(s.probs.begin(), s.probs.end(), 0.0) /
         static_cast<double>(s.probs.size());
}

}  // namespace menet
