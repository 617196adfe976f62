#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "menet/image.hpp"

namespace menet {

struct Dataset {
  std::vector<ImageTensor> images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  /// Examples [offset, offset + count), clamped to the available range.
  Dataset slice(std::size_t offset, std::size_t count) const;

  /// Per-class example counts, indexed by label.
  std::vector<std::size_t> label_counts() const;
};

/// Big-endian IDX pair: images with magic 0x00000803 (count x rows x cols,
/// unsigned bytes) and labels with magic 0x00000801. Pixels are divided by
/// 255 so byte 255 maps to exactly 1.0.
///
/// Errors: Errc::format_error for a bad magic (the message carries the
/// observed value), Errc::truncated for a short payload and
/// Errc::count_mismatch when the two files disagree on the example count.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes the IDX pair read by load_idx; pixels are rounded to bytes.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

struct SyntheticSpec {
  std::size_t count = 200;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::size_t rank = 2;
  double noise_sigma = 0.0;
  std::size_t classes = 2;

  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Low-rank images drawn from class-specific factor pools.
///
/// Each class owns non-negative base factors; an image of that class jitters
/// them, combines `rank` outer products with random weights, divides by the
/// maximum (so the rank is preserved and values land in [0, 1]) and adds
/// clipped Gaussian noise. Labels cycle 0, 1, ..., classes - 1.
Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace menet
