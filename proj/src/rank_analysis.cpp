#include "menet/rank_analysis.hpp"

#include <algorithm>
#include <iomanip>

#include "menet/error.hpp"
#include "menet/numerics.hpp"

namespace menet {

ApproxRank approximate_rank(const ImageTensor& img, double energy_fraction, EnergyMode mode) {
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "approximate_rank: energy fraction must lie in (0, 1]");
  }
  const Vector sigma = svd(to_wide_matrix(img)).sigma;
  const Vector energy = mode == EnergyMode::squared ? Vector(sigma.array().square()) : sigma;
  const double total = energy.sum();
  if (total <= 0.0) return {0, true};

  double running = 0.0;
  for (Eigen::Index k = 0; k < energy.size(); ++k) {
    running += energy[k];
    if (running >= energy_fraction * total) return {static_cast<std::size_t>(k + 1), false};
  }
  // Only reachable through rounding when energy_fraction == 1.
  return {static_cast<std::size_t>(energy.size()), false};
}

double RankReport::cdf_at(std::size_t r) const {
  if (cdf.empty()) return 0.0;
  return r < cdf.size() ? cdf[r] : 1.0;
}

RankReport rank_report(std::span<const ImageTensor> dataset, double energy_fraction,
                       EnergyMode mode) {
  if (dataset.empty()) throw Error(Errc::empty_input, "rank_report: empty dataset");
  RankReport report;
  report.ranks.reserve(dataset.size());
  for (const auto& img : dataset) {
    const ApproxRank r = approximate_rank(img, energy_fraction, mode);
    report.ranks.push_back(r.rank);
    if (r.degenerate) ++report.degenerate_count;
  }
  const std::size_t max_rank = *std::max_element(report.ranks.begin(), report.ranks.end());
  report.histogram.assign(max_rank + 1, 0);
  for (std::size_t r : report.ranks) ++report.histogram[r];

  report.cdf.resize(max_rank + 1);
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r <= max_rank; ++r) {
    cumulative += report.histogram[r];
    report.cdf[r] = static_cast<double>(cumulative) / static_cast<double>(dataset.size());
  }
  report.cdf.back() = 1.0;
  return report;
}

void write_rank_csv(std::ostream& os, const RankReport& report) {
  os << "rank,count,cdf\n";
  const auto old = os.precision(17);
  for (std::size_t r = 0; r < report.histogram.size(); ++r) {
    os << r << ',' << report.histogram[r] << ',' << report.cdf[r] << '\n';
  }
  os.precision(old);
}

}  // namespace menet
