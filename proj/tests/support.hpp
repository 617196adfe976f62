#pragma once

// Seeded generators shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "menet/image.hpp"
#include "menet/model.hpp"
#include "menet/numerics.hpp"
#include "menet/rng.hpp"

namespace menet::testing {

inline DenseMatrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  CounterRng rng(seed);
  DenseMatrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = rng.normal();
  return a;
}

inline DenseMatrix orthonormal_columns(Eigen::Index rows, Eigen::Index k, std::uint64_t seed) {
  Eigen::HouseholderQR<DenseMatrix> qr(gaussian_matrix(rows, k, seed));
  return qr.householderQ() * DenseMatrix::Identity(rows, k);
}

/// U diag(sigmas) V^T with random orthonormal U and V.
inline DenseMatrix low_rank_matrix(Eigen::Index rows, Eigen::Index cols,
                                   const std::vector<double>& sigmas, std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(sigmas.size());
  const DenseMatrix u = orthonormal_columns(rows, k, derive_seed(seed, 1));
  const DenseMatrix v = orthonormal_columns(cols, k, derive_seed(seed, 2));
  Vector s(k);
  for (Eigen::Index i = 0; i < k; ++i) s(i) = sigmas[static_cast<std::size_t>(i)];
  return u * s.asDiagonal() * v.transpose();
}

inline Vector unit_vector(Eigen::Index n, std::uint64_t seed) {
  Vector v = gaussian_matrix(n, 1, seed).col(0);
  return v / v.norm();
}

inline ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> data(h * w * c);
  for (auto& v : data) v = rng.uniform();
  return ImageTensor(h, w, c, std::move(data));
}

inline double rel_error(const DenseMatrix& est, const DenseMatrix& truth) {
  return (est - truth).norm() / truth.norm();
}

/// Linear "model" with loss c^T x; logits are (c^T x, -c^T x) so label 1
/// is the correct class whenever c^T x < 0.
class LinearLossModel final : public DifferentiableModel {
 public:
  explicit LinearLossModel(Vector c) : c_(std::move(c)) {}
  std::size_t input_size() const override { return static_cast<std::size_t>(c_.size()); }
  std::size_t num_classes() const override { return 2; }
  Vector logits(const Vector& x) const override {
    Vector z(2);
    z << c_.dot(x), -c_.dot(x);
    return z;
  }
  double loss(const Vector& x, std::size_t) const override { return c_.dot(x); }
  Vector input_gradient(const Vector&, std::size_t) const override { return c_; }

 private:
  Vector c_;
};

// Central differences of the loss with respect to every parameter and input.
inline Gradients finite_difference(ClassifierParams params, Vector x, std::size_t label, double h) {
  Gradients g = Gradients::zeros_like(params);
  auto loss = [&] { return loss_and_grad(params, x, label).loss; };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    DenseLayer& layer = params.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      double& w = layer.weight.data()[i];
      const double saved = w;
      w = saved + h;
      const double up = loss();
      w = saved - h;
      const double down = loss();
      w = saved;
      g.layers[l].weight.data()[i] = (up - down) / (2 * h);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      double& b = layer.bias(i);
      const double saved = b;
      b = saved + h;
      const double up = loss();
      b = saved - h;
      const double down = loss();
      b = saved;
      g.layers[l].bias(i) = (up - down) / (2 * h);
    }
  }
  g.input = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x(i);
    x(i) = saved + h;
    const double up = loss();
    x(i) = saved - h;
    const double down = loss();
    x(i) = saved;
    g.input(i) = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace menet::testing
