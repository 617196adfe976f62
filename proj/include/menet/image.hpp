#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "menet/numerics.hpp"

namespace menet {

/// H x W x C image with entries in [0, 1], stored height-major then width
/// then channel (HWC).
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<double> data);

  static ImageTensor zeros(std::size_t height, std::size_t width, std::size_t channels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * width_ + w) * channels_ + c];
  }

  std::span<const double> data() const { return data_; }
  Vector flat() const { return Eigen::Map<const Vector>(data_.data(), data_.size()); }

  /// Same shape, new pixel values; values are checked against [0, 1].
  ImageTensor with_data(std::span<const double> values) const;
  ImageTensor with_data(const Vector& values) const;

  bool same_shape(const ImageTensor& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

/// Wide-matrix layout for arbitrary HWC values (gradients, perturbations).
DenseMatrix wide_from_hwc(const Vector& hwc, std::size_t height, std::size_t width,
                          std::size_t channels);
Vector hwc_from_wide(const DenseMatrix& wide, std::size_t channels);

/// Channels concatenated along columns: H x (W * C), channel c occupying
/// columns [c * W, (c + 1) * W).
DenseMatrix to_wide_matrix(const ImageTensor& img);

/// Inverse of to_wide_matrix; entries are clipped into [0, 1].
ImageTensor from_wide_matrix(const DenseMatrix& m, std::size_t channels);

}  // namespace menet
