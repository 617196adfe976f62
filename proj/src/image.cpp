#include "menet/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "menet/error.hpp"

namespace menet {
namespace {

void check_pixels(std::span<const double> values) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(std::isfinite(v) ? Errc::invalid_range : Errc::non_finite,
                  "image: pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

}  // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height_ == 0 || width_ == 0 || (channels_ != 1 && channels_ != 3)) {
    throw Error(Errc::shape_mismatch, "image: need positive height/width and 1 or 3 channels");
  }
  if (data_.size() != height_ * width_ * channels_) {
    throw Error(Errc::shape_mismatch, "image: data length " + std::to_string(data_.size()) +
                                          " != H*W*C");
  }
  check_pixels(data_);
}

ImageTensor ImageTensor::zeros(std::size_t height, std::size_t width, std::size_t channels) {
  return ImageTensor(height, width, channels, std::vector<double>(height * width * channels, 0.0));
}

ImageTensor ImageTensor::with_data(std::span<const double> values) const {
  return ImageTensor(height_, width_, channels_, std::vector<double>(values.begin(), values.end()));
}

ImageTensor ImageTensor::with_data(const Vector& values) const {
  return with_data(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

DenseMatrix wide_from_hwc(const Vector& hwc, std::size_t height, std::size_t width,
                          std::size_t channels) {
  if (static_cast<std::size_t>(hwc.size()) != height * width * channels) {
    throw Error(Errc::shape_mismatch, "wide_from_hwc: length does not match H*W*C");
  }
  DenseMatrix m(height, width * channels);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t x = 0; x < width; ++x)
        m(r, c * width + x) = hwc[static_cast<Eigen::Index>((r * width + x) * channels + c)];
  return m;
}

Vector hwc_from_wide(const DenseMatrix& wide, std::size_t channels) {
  if (channels == 0 || wide.cols() % static_cast<Eigen::Index>(channels) != 0) {
    throw Error(Errc::shape_mismatch, "hwc_from_wide: " + std::to_string(wide.cols()) +
                                          " columns not divisible by " +
                                          std::to_string(channels) + " channels");
  }
  const auto h = static_cast<std::size_t>(wide.rows());
  const auto w = static_cast<std::size_t>(wide.cols()) / channels;
  Vector out(static_cast<Eigen::Index>(h * w * channels));
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t x = 0; x < w; ++x)
        out[static_cast<Eigen::Index>((r * w + x) * channels + c)] = wide(r, c * w + x);
  return out;
}

DenseMatrix to_wide_matrix(const ImageTensor& img) {
  return wide_from_hwc(img.flat(), img.height(), img.width(), img.channels());
}

ImageTensor from_wide_matrix(const DenseMatrix& m, std::size_t channels) {
  if (channels == 0 || m.cols() % static_cast<Eigen::Index>(channels) != 0) {
    throw Error(Errc::shape_mismatch, "from_wide_matrix: " + std::to_string(m.cols()) +
                                          " columns not divisible by " +
                                          std::to_string(channels) + " channels");
  }
  require_finite(m, "from_wide_matrix");
  const Vector hwc = hwc_from_wide(m, channels).cwiseMax(0.0).cwiseMin(1.0);
  return ImageTensor(static_cast<std::size_t>(m.rows()),
                     static_cast<std::size_t>(m.cols()) / channels, channels,
                     std::vector<double>(hwc.data(), hwc.data() + hwc.size()));
}

}  // namespace menet
