#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "menet/error.hpp"
#include "menet/model.hpp"
#include "support.hpp"

namespace menet {
namespace {

namespace fs = std::filesystem;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

double rel_diff(const DenseMatrix& a, const DenseMatrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}


TEST(Forward, ZeroParamsGiveZeroLogits) {
  const std::vector<std::size_t> sizes{6, 4, 3};
  EXPECT_EQ(forward(ClassifierParams::zeros(sizes), Vector::Ones(6)), Vector::Zero(3));
}

TEST(Forward, SingleLinearLayer) {
  ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{5, 3}, 1);
  const Vector x = testing::gaussian_matrix(5, 1, 2).col(0);
  EXPECT_LT((forward(p, x) - (p.layers[0].weight * x + p.layers[0].bias)).norm(), 1e-14);
}

TEST(Forward, SeededInitIsBitReproducible) {
  const std::vector<std::size_t> sizes{20, 16, 8, 4};
  const Vector x = testing::random_image(4, 5, 1, 3).flat();
  const ClassifierParams a = ClassifierParams::init(sizes, 42);
  const ClassifierParams b = ClassifierParams::init(sizes, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(forward(a, x), forward(b, x));
  EXPECT_NE(a, ClassifierParams::init(sizes, 43));
}

TEST(Forward, InitScale) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{100, 10}, 7);
  EXPECT_LE(p.layers[0].weight.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_GT(p.layers[0].weight.cwiseAbs().maxCoeff(), 0.09);
}

TEST(Forward, ShapeMismatch) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{5, 3}, 1);
  EXPECT_EQ(code_of([&] { (void)forward(p, Vector::Zero(4)); }), Errc::shape_mismatch);
}

TEST(Forward, BatchMatchesColumns) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{7, 5, 3}, 9);
  const DenseMatrix xs = testing::gaussian_matrix(7, 4, 10);
  const DenseMatrix batch = forward_batch(p, xs);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_LT((batch.col(j) - forward(p, xs.col(j))).norm(), 1e-13);
}

TEST(Loss, UniformLogitsGiveLogClasses) {
  const std::vector<std::size_t> sizes{4, 10};
  const LossAndGrad lg = loss_and_grad(ClassifierParams::zeros(sizes), Vector::Ones(4), 3);
  EXPECT_NEAR(lg.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(lg.loss, 2.302585, 1e-6);
}

TEST(Loss, InvalidLabel) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{4, 3}, 1);
  EXPECT_EQ(code_of([&] { (void)loss_and_grad(p, Vector::Zero(4), 3); }), Errc::invalid_label);
}

TEST(Loss, StableForHugeLogits) {
  ClassifierParams p = ClassifierParams::zeros(std::vector<std::size_t>{1, 2});
  p.layers[0].weight(0, 0) = 1e4;
  const LossAndGrad lg = loss_and_grad(p, Vector::Ones(1), 1);
  EXPECT_NEAR(lg.loss, 1e4, 1e-6);
  EXPECT_TRUE(lg.grads.all_finite());
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed);
    const std::vector<std::size_t> sizes{6 + rng.below(6), 4 + rng.below(5), 3 + rng.below(4), 2 + rng.below(4)};
    const ClassifierParams p = ClassifierParams::init(sizes, derive_seed(seed, 1));
    const Vector x = testing::random_image(sizes[0], 1, 1, derive_seed(seed, 2)).flat();
    const std::size_t label = rng.below(sizes.back());
    const Gradients analytic = loss_and_grad(p, x, label).grads;
    const Gradients numeric = testing::finite_difference(p, x, label, 1e-5);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      EXPECT_LT(rel_diff(analytic.layers[l].weight, numeric.layers[l].weight), 1e-4) << seed << "/" << l;
      EXPECT_LT(rel_diff(analytic.layers[l].bias, numeric.layers[l].bias), 1e-4) << seed << "/" << l;
    }
    EXPECT_LT(rel_diff(analytic.input, numeric.input), 1e-4) << seed;
  }
}

TEST(Gradients, BatchIsMeanOfExamples) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{5, 6, 3}, 4);
  const DenseMatrix xs = testing::gaussian_matrix(5, 4, 5);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  const BatchLossAndGrad batch = batch_loss_and_grad(p, xs, labels);
  double loss = 0.0;
  Gradients mean = Gradients::zeros_like(p);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const LossAndGrad lg = loss_and_grad(p, xs.col(j), labels[static_cast<std::size_t>(j)]);
    loss += lg.loss / 4;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      mean.layers[l].weight += lg.grads.layers[l].weight / 4;
      mean.layers[l].bias += lg.grads.layers[l].bias / 4;
    }
    EXPECT_LT((batch.input_grads.col(j) - lg.grads.input).norm(), 1e-12);
  }
  EXPECT_NEAR(batch.loss, loss, 1e-12);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    EXPECT_LT((batch.layers[l].weight - mean.layers[l].weight).norm(), 1e-12);
    EXPECT_LT((batch.layers[l].bias - mean.layers[l].bias).norm(), 1e-12);
  }
}

TEST(DifferentiableModel, DefaultBatchAndPredict) {
  Vector c(3);
  c << 1.0, -2.0, 0.5;
  const testing::LinearLossModel m(c);
  Vector x(3);
  x << 1.0, 1.0, 1.0;  // c.x = -0.5, so class 1 wins
  EXPECT_EQ(m.predict(x), 1u);
  EXPECT_EQ(m.input_gradient(x, 0), c);
  const DenseMatrix xs = DenseMatrix::Identity(3, 3);
  const DenseMatrix z = m.logits_batch(xs);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(z.col(j), m.logits(xs.col(j)));
}

TEST(Sgd, ZeroGradientLeavesParams) {
  ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{4, 3}, 1);
  const ClassifierParams before = p;
  MomentumSgd sgd(0.1, 0.9);
  sgd.step(p, Gradients::zeros_like(p));
  EXPECT_EQ(p, before);
}

TEST(Sgd, PlainStep) {
  ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{4, 3}, 1);
  const ClassifierParams before = p;
  Gradients g = Gradients::zeros_like(p);
  g.layers[0].weight = testing::gaussian_matrix(3, 4, 2);
  g.layers[0].bias = Vector::Ones(3);
  MomentumSgd sgd(0.1, 0.0);
  sgd.step(p, g);
  EXPECT_LT((p.layers[0].weight - (before.layers[0].weight - 0.1 * g.layers[0].weight)).norm(), 1e-15);
  EXPECT_LT((p.layers[0].bias - (before.layers[0].bias - 0.1 * g.layers[0].bias)).norm(), 1e-15);
}

TEST(Sgd, MomentumRecursionScalar) {
  ClassifierParams p = ClassifierParams::zeros(std::vector<std::size_t>{1, 1});
  p.layers[0].weight(0, 0) = 1.0;
  Gradients g = Gradients::zeros_like(p);
  MomentumSgd sgd(0.1, 0.9);
  g.layers[0].weight(0, 0) = 2.0;
  sgd.step(p, g);
  g.layers[0].weight(0, 0) = -1.0;
  sgd.step(p, g);
  // v1 = 2, w1 = 1 - 0.2 = 0.8; v2 = 0.9 * 2 - 1 = 0.8, w2 = 0.8 - 0.08 = 0.72.
  EXPECT_NEAR(p.layers[0].weight(0, 0), 0.72, 1e-15);
}

TEST(Sgd, NonFiniteGradientIsRejected) {
  ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{4, 3}, 1);
  const ClassifierParams before = p;
  Gradients g = Gradients::zeros_like(p);
  g.layers[0].weight(1, 1) = std::numeric_limits<double>::infinity();
  MomentumSgd sgd(0.1, 0.9);
  EXPECT_EQ(code_of([&] { sgd.step(p, g); }), Errc::non_finite);
  EXPECT_EQ(p, before);
}

TEST(Sgd, InvalidSettings) {
  EXPECT_THROW(MomentumSgd(0.0, 0.9), Error);
  EXPECT_THROW(MomentumSgd(0.1, 1.0), Error);
}

class CheckpointTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / "menet_ckpt_test";
  void SetUp() override { fs::create_directories(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{9, 7, 4}, 3);
  save_checkpoint(p, dir / "a.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), p);
}

TEST_F(CheckpointTest, TruncatedFile) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{9, 7, 4}, 3);
  save_checkpoint(p, dir / "a.ckpt");
  fs::resize_file(dir / "a.ckpt", fs::file_size(dir / "a.ckpt") - 9);
  EXPECT_EQ(code_of([&] { (void)load_checkpoint(dir / "a.ckpt"); }), Errc::corrupt_checkpoint);
}

TEST_F(CheckpointTest, TrailingBytes) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{3, 2}, 3);
  save_checkpoint(p, dir / "a.ckpt");
  std::ofstream(dir / "a.ckpt", std::ios::app | std::ios::binary) << 'x';
  EXPECT_EQ(code_of([&] { (void)load_checkpoint(dir / "a.ckpt"); }), Errc::corrupt_checkpoint);
}

TEST_F(CheckpointTest, WrongMagic) {
  std::ofstream(dir / "b.ckpt", std::ios::binary) << "NOTACKPTxxxxxxxxxxxxxxxx";
  EXPECT_EQ(code_of([&] { (void)load_checkpoint(dir / "b.ckpt"); }), Errc::format_error);
}

TEST_F(CheckpointTest, VersionMismatch) {
  const ClassifierParams p = ClassifierParams::init(std::vector<std::size_t>{3, 2}, 3);
  save_checkpoint(p, dir / "c.ckpt");
  std::fstream f(dir / "c.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  f.put(static_cast<char>(9));
  f.close();
  EXPECT_EQ(code_of([&] { (void)load_checkpoint(dir / "c.ckpt"); }), Errc::version_mismatch);
}

TEST_F(CheckpointTest, MissingFile) {
  EXPECT_EQ(code_of([&] { (void)load_checkpoint(dir / "missing.ckpt"); }), Errc::io_error);
}

}  // namespace
}  // namespace menet
