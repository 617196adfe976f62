#include "menet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "menet/error.hpp"
#include "menet/rng.hpp"

namespace menet {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08X", v);
  return buf;
}

void require_header(const std::vector<unsigned char>& b, std::size_t bytes,
                    const std::filesystem::path& path) {
  if (b.size() < bytes) throw Error(Errc::truncated, path.string() + ": truncated IDX header");
}

}  // namespace

Dataset Dataset::slice(std::size_t offset, std::size_t count) const {
  Dataset out;
  out.num_classes = num_classes;
  const std::size_t begin = std::min(offset, size());
  const std::size_t end = std::min(size(), begin + count);
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin),
                    images.begin() + static_cast<std::ptrdiff_t>(end));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::vector<std::size_t> Dataset::label_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) {
    if (y >= counts.size()) counts.resize(y + 1, 0);
    ++counts[y];
  }
  return counts;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);

  require_header(ib, 4, images);
  if (const auto magic = be32(ib, 0); magic != kImageMagic) {
    throw Error(Errc::format_error, images.string() + ": expected image magic " +
                                        hex(kImageMagic) + ", found " + hex(magic));
  }
  require_header(lb, 4, labels);
  if (const auto magic = be32(lb, 0); magic != kLabelMagic) {
    throw Error(Errc::format_error, labels.string() + ": expected label magic " +
                                        hex(kLabelMagic) + ", found " + hex(magic));
  }
  require_header(ib, 16, images);
  require_header(lb, 8, labels);

  const std::size_t n_images = be32(ib, 4);
  const std::size_t rows = be32(ib, 8);
  const std::size_t cols = be32(ib, 12);
  const std::size_t n_labels = be32(lb, 4);
  if (rows == 0 || cols == 0) throw Error(Errc::format_error, images.string() + ": zero image size");
  if (ib.size() - 16 < n_images * rows * cols) {
    throw Error(Errc::truncated, images.string() + ": payload holds " +
                                     std::to_string(ib.size() - 16) + " bytes, header promises " +
                                     std::to_string(n_images * rows * cols));
  }
  if (lb.size() - 8 < n_labels) {
    throw Error(Errc::truncated, labels.string() + ": payload holds " +
                                     std::to_string(lb.size() - 8) + " labels, header promises " +
                                     std::to_string(n_labels));
  }
  if (n_images != n_labels) {
    throw Error(Errc::count_mismatch, "IDX count mismatch: " + std::to_string(n_images) +
                                          " images vs " + std::to_string(n_labels) + " labels");
  }

  Dataset out;
  out.images.reserve(n_images);
  out.labels.reserve(n_images);
  const std::size_t pixels = rows * cols;
  for (std::size_t k = 0; k < n_images; ++k) {
    std::vector<double> data(pixels);
    const unsigned char* src = ib.data() + 16 + k * pixels;
    for (std::size_t i = 0; i < pixels; ++i) data[i] = static_cast<double>(src[i]) / 255.0;
    out.images.emplace_back(rows, cols, 1, std::move(data));
    out.labels.push_back(lb[8 + k]);
    out.num_classes = std::max<std::size_t>(out.num_classes, lb[8 + k] + 1u);
  }
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (data.empty()) throw Error(Errc::empty_input, "write_idx: empty dataset");
  const auto& first = data.images.front();
  if (first.channels() != 1) throw Error(Errc::shape_mismatch, "write_idx: single-channel only");
  std::ofstream io(images, std::ios::binary | std::ios::trunc);
  std::ofstream lo(labels, std::ios::binary | std::ios::trunc);
  if (!io || !lo) throw Error(Errc::io_error, "write_idx: cannot open output files");
  put_be32(io, kImageMagic);
  put_be32(io, static_cast<std::uint32_t>(data.size()));
  put_be32(io, static_cast<std::uint32_t>(first.height()));
  put_be32(io, static_cast<std::uint32_t>(first.width()));
  put_be32(lo, kLabelMagic);
  put_be32(lo, static_cast<std::uint32_t>(data.size()));
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!data.images[k].same_shape(first))
      throw Error(Errc::shape_mismatch, "write_idx: images differ in shape");
    for (double v : data.images[k].data()) io.put(static_cast<char>(std::lround(v * 255.0)));
    lo.put(static_cast<char>(data.labels[k]));
  }
}

void SyntheticSpec::validate() const {
  if (count == 0 || height == 0 || width == 0 || classes == 0 || rank == 0)
    throw Error(Errc::invalid_argument, "synthetic: count, sizes, rank and classes must be positive");
  if (channels != 1 && channels != 3)
    throw Error(Errc::invalid_argument, "synthetic: channels must be 1 or 3");
  if (rank > std::min(height, width * channels))
    throw Error(Errc::invalid_argument, "synthetic: rank " + std::to_string(rank) +
                                            " exceeds min(height, width * channels)");
  if (!(noise_sigma >= 0.0)) throw Error(Errc::invalid_argument, "synthetic: noise sigma must be >= 0");
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto h = static_cast<Eigen::Index>(spec.height);
  const auto wc = static_cast<Eigen::Index>(spec.width * spec.channels);
  const auto rank = static_cast<Eigen::Index>(spec.rank);
  constexpr double kJitter = 0.1;

  std::vector<DenseMatrix> left_pool, right_pool;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    CounterRng rng(derive_seed(seed, 1000000 + c));
    DenseMatrix u(h, rank), v(wc, rank);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.uniform();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform();
    left_pool.push_back(std::move(u));
    right_pool.push_back(std::move(v));
  }

  Dataset out;
  out.num_classes = spec.classes;
  for (std::size_t k = 0; k < spec.count; ++k) {
    const std::size_t label = k % spec.classes;
    CounterRng rng(derive_seed(seed, k));
    DenseMatrix img = DenseMatrix::Zero(h, wc);
    for (Eigen::Index i = 0; i < rank; ++i) {
      Vector u = left_pool[label].col(i);
      Vector v = right_pool[label].col(i);
      for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = std::max(0.0, u[j] + kJitter * rng.normal());
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = std::max(0.0, v[j] + kJitter * rng.normal());
      img += rng.uniform(0.5, 1.0) * u * v.transpose();
    }
    const double peak = img.maxCoeff();
    if (peak > 0.0) img /= peak;
    if (spec.noise_sigma > 0.0) {
      for (Eigen::Index i = 0; i < img.size(); ++i)
        img.data()[i] = std::clamp(img.data()[i] + spec.noise_sigma * rng.normal(), 0.0, 1.0);
    }
    out.images.push_back(from_wide_matrix(img, spec.channels));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace menet
