#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "menet/image.hpp"

namespace menet {

/// How spectral energy is measured: squared singular values (Frobenius
/// energy, the default) or the singular values themselves.
enum class EnergyMode { squared, linear };

struct ApproxRank {
  std::size_t rank = 0;
  bool degenerate = false;  // all-zero input; rank reported as 0
};

/// Smallest k whose leading singular values carry at least `energy_fraction`
/// of the total energy, on the channel-concatenated wide matrix.
ApproxRank approximate_rank(const ImageTensor& img, double energy_fraction = 0.9,
                            EnergyMode mode = EnergyMode::squared);

struct RankReport {
  std::vector<std::size_t> ranks;       // one per image
  std::vector<std::size_t> histogram;   // histogram[r] = images with rank r
  std::vector<double> cdf;              // cdf[r] = fraction with rank <= r
  std::size_t degenerate_count = 0;

  /// Fraction of images with rank <= r (1 past the last bucket).
  double cdf_at(std::size_t r) const;
};

RankReport rank_report(std::span<const ImageTensor> dataset, double energy_fraction = 0.9,
                       EnergyMode mode = EnergyMode::squared);

/// CSV with header `rank,count,cdf`, one row per rank bucket from 0.
void write_rank_csv(std::ostream& os, const RankReport& report);

}  // namespace menet
