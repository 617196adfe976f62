#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "menet/numerics.hpp"

namespace menet {

/// Anything an attack can differentiate through: per-class scores and the
/// gradient of a scalar loss with respect to the input.
class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;

  virtual std::size_t input_size() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual Vector logits(const Vector& x) const = 0;
  virtual double loss(const Vector& x, std::size_t label) const = 0;
  virtual Vector input_gradient(const Vector& x, std::size_t label) const = 0;

  /// Logits for a batch stored one example per column.
  virtual DenseMatrix logits_batch(const DenseMatrix& xs) const;

  std::size_t predict(const Vector& x) const;
};

struct DenseLayer {
  DenseMatrix weight;  // out x in
  Vector bias;         // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected ReLU network; the last layer is linear.
struct ClassifierParams {
  std::vector<DenseLayer> layers;

  /// Layer widths, input first: e.g. {784, 256, 128, 10}.
  std::vector<std::size_t> sizes() const;
  std::size_t input_size() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(layers.back().weight.rows()); }

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static ClassifierParams init(std::span<const std::size_t> sizes, std::uint64_t seed);
  static ClassifierParams zeros(std::span<const std::size_t> sizes);

  bool all_finite() const;
  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// Same layout as ClassifierParams plus the gradient with respect to the input.
struct Gradients {
  std::vector<DenseLayer> layers;
  Vector input;

  static Gradients zeros_like(const ClassifierParams& params);
  bool all_finite() const;
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

Vector forward(const ClassifierParams& params, const Vector& x);

/// Columns of `xs` are examples.
DenseMatrix forward_batch(const ClassifierParams& params, const DenseMatrix& xs);

/// Softmax cross-entropy -log softmax(logits)[label] with exact gradients.
LossAndGrad loss_and_grad(const ClassifierParams& params, const Vector& x, std::size_t label);

/// Mean loss over the batch; parameter gradients are batch means and
/// `input_grads` (in x batch) holds each example's own input gradient.
struct BatchLossAndGrad {
  double loss = 0.0;
  std::vector<DenseLayer> layers;
  DenseMatrix input_grads;
  std::size_t correct = 0;
};
BatchLossAndGrad batch_loss_and_grad(const ClassifierParams& params, const DenseMatrix& xs,
                                     std::span<const std::size_t> labels);

/// Momentum SGD: v <- momentum * v + g; theta <- theta - lr * v.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum);

  /// Throws Error{non_finite} and leaves params untouched if any gradient
  /// entry is NaN or infinite.
  void step(ClassifierParams& params, std::span<const DenseLayer> grads);
  void step(ClassifierParams& params, const Gradients& grads) { step(params, grads.layers); }

  double lr() const { return lr_; }
  void set_lr(double lr);

 private:
  double lr_;
  double momentum_;
  std::vector<DenseLayer> velocity_;
};

/// Cross-entropy classifier over a parameter snapshot.
class Classifier final : public DifferentiableModel {
 public:
  explicit Classifier(ClassifierParams params);

  const ClassifierParams& params() const { return params_; }

  std::size_t input_size() const override { return params_.input_size(); }
  std::size_t num_classes() const override { return params_.num_classes(); }
  Vector logits(const Vector& x) const override { return forward(params_, x); }
  DenseMatrix logits_batch(const DenseMatrix& xs) const override {
    return forward_batch(params_, xs);
  }
  double loss(const Vector& x, std::size_t label) const override;
  Vector input_gradient(const Vector& x, std::size_t label) const override;

 private:
  ClassifierParams params_;
};

/// Little-endian binary: magic "MENETCKP", u32 version, u32 layer count,
/// (u64 rows, u64 cols) per layer, then each layer's weights row-major and
/// biases as IEEE-754 doubles.
void save_checkpoint(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_checkpoint(const std::filesystem::path& path);

}  // namespace menet
