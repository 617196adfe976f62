#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "menet/attacks.hpp"
#include "menet/error.hpp"
#include "menet/pipeline.hpp"
#include "support.hpp"

namespace menet {
namespace {

using testing::LinearLossModel;
using testing::random_image;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

double linf(const ImageTensor& a, const ImageTensor& b) {
  return (a.flat() - b.flat()).cwiseAbs().maxCoeff();
}

Vector signs(const Vector& v) {
  return v.unaryExpr([](double e) { return e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0); });
}

// Images live in the interior so the box never binds unless a test wants it to.
ImageTensor interior_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  const ImageTensor raw = random_image(h, w, 1, seed);
  return raw.with_data((0.3 + 0.4 * raw.flat().array()).matrix().eval());
}

Defense affine_defense() {
  return [](const ImageTensor& x, std::uint64_t) {
    return x.with_data((0.5 * x.flat().array() + 0.25).matrix().eval());
  };
}

ClassifierParams small_net(std::size_t in, std::uint64_t seed) {
  const std::vector<std::size_t> sizes = {in, 16, 3};
  return ClassifierParams::init(sizes, seed);
}

// Shared toy classifier trained once on clean synthetic data.
struct Toy {
  Dataset train_data;
  Dataset test_data;
  ClassifierParams params;
};

const Toy& toy() {
  static const Toy t = [] {
    SyntheticSpec spec;
    spec.count = 240;
    spec.height = 12;
    spec.width = 12;
    spec.noise_sigma = 0.05;
    spec.classes = 3;
    const Dataset all = gen_synthetic(spec, 404);
    TrainPlan plan;
    plan.hidden = {32};
    plan.defense.enabled = false;
    plan.epochs = 15;
    plan.lr = 0.05;
    plan.seed = 9;
    Dataset tr = all.slice(0, 180);
    Dataset te = all.slice(180, 60);
    return Toy{tr, te, train(plan, tr).params};
  }();
  return t;
}

double accuracy_under(const AttackConfig& cfg, bool use_fgsm = false) {
  const Toy& t = toy();
  const Classifier model(t.params);
  const AttackTarget target{model, {}, {}};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < t.test_data.size(); ++i) {
    AttackConfig c = cfg;
    c.seed = image_seed(cfg.seed, i);
    const AttackResult r = use_fgsm ? fgsm(target, t.test_data.images[i], t.test_data.labels[i], c)
                                    : pgd(target, t.test_data.images[i], t.test_data.labels[i], c);
    correct += r.success ? 0 : 1;
  }
  return static_cast<double>(correct) / static_cast<double>(t.test_data.size());
}

double clean_accuracy() {
  const Toy& t = toy();
  const Classifier model(t.params);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < t.test_data.size(); ++i)
    correct += model.predict(t.test_data.images[i].flat()) == t.test_data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(t.test_data.size());
}

TEST(Fgsm, ZeroEpsilonReturnsInput) {
  const ImageTensor x = random_image(6, 5, 1, 1);
  const LinearLossModel model(testing::unit_vector(30, 2));
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  const AttackResult r = fgsm({model, {}, {}}, x, 0, cfg);
  EXPECT_EQ(r.adversarial, x);
}

TEST(Fgsm, LinearLossMatchesAnalyticStep) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageTensor x = random_image(7, 4, 1, seed);
    const Vector c = testing::unit_vector(28, seed + 100);
    const LinearLossModel model(c);
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    const AttackResult r = fgsm({model, {}, {}}, x, 0, cfg);
    const Vector expected = (x.flat() + cfg.epsilon * signs(c)).cwiseMax(0.0).cwiseMin(1.0);
    EXPECT_LE((r.adversarial.flat() - expected).cwiseAbs().maxCoeff(), 1e-15) << seed;
    EXPECT_NEAR(r.final_loss, c.dot(expected), 1e-12);
    EXPECT_EQ(r.queries, 1u);
  }
}

TEST(Fgsm, TrainedToyModelLosesAccuracy) {
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.backward_mode = BackwardMode::none;
  const double clean = clean_accuracy();
  EXPECT_GT(clean, 0.9);
  EXPECT_LT(accuracy_under(cfg, true), clean);
}

TEST(Fgsm, NonFiniteGradientIsRejected) {
  Vector c = Vector::Ones(4);
  c[2] = std::numeric_limits<double>::quiet_NaN();
  const LinearLossModel model(c);
  EXPECT_EQ(code_of([&] { fgsm({model, {}, {}}, random_image(2, 2, 1, 3), 0, AttackConfig{}); }),
            Errc::non_finite);
}

TEST(Pgd, OneStepWithFullStepEqualsFgsm) {
  const Toy& t = toy();
  const Classifier model(t.params);
  for (std::size_t i = 0; i < 10; ++i) {
    AttackConfig cfg;
    cfg.epsilon = 0.2;
    cfg.step_size = 0.2;
    cfg.steps = 1;
    cfg.seed = i;
    for (BackwardMode mode : {BackwardMode::none, BackwardMode::identity_bpda}) {
      cfg.backward_mode = mode;
      const AttackResult a = pgd({model, {}, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
      const AttackResult b = fgsm({model, {}, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
      EXPECT_EQ(a.adversarial, b.adversarial);
      EXPECT_EQ(a.success, b.success);
    }
  }
}

TEST(Pgd, LinearLossIsMonotoneInSteps) {
  const ImageTensor x = random_image(5, 6, 1, 77);
  const LinearLossModel model(testing::unit_vector(30, 78));
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  cfg.step_size = 0.03;
  double previous = -std::numeric_limits<double>::infinity();
  for (int steps = 0; steps <= 12; ++steps) {
    cfg.steps = steps;
    const double loss = pgd({model, {}, {}}, x, 0, cfg).final_loss;
    EXPECT_GE(loss, previous - 1e-12) << steps;
    previous = loss;
  }
}

TEST(Pgd, LinearLossMonotoneWithRandomStart) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ImageTensor x = random_image(4, 4, 1, seed);
    const LinearLossModel model(testing::unit_vector(16, seed + 50));
    AttackConfig cfg;
    cfg.epsilon = 0.15;
    cfg.step_size = 0.02;
    cfg.random_start = true;
    cfg.seed = seed;
    double previous = -std::numeric_limits<double>::infinity();
    for (int steps = 1; steps <= 10; ++steps) {
      cfg.steps = steps;
      const double loss = pgd({model, {}, {}}, x, 0, cfg).final_loss;
      EXPECT_GE(loss, previous - 1e-12);
      previous = loss;
    }
  }
}

// Property: every mode, random budgets and step sizes, result inside the
// budget around its anchor and inside the box.
TEST(Attacks, BudgetAndBoxHoldForEveryMode) {
  const BackwardMode modes[] = {BackwardMode::none, BackwardMode::identity_bpda,
                                BackwardMode::projected_bpda, BackwardMode::approx_input};
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    CounterRng rng(seed);
    const ImageTensor x = random_image(6, 6, 1, seed + 1000);
    const ClassifierParams params = small_net(36, seed);
    const Classifier model(params);
    const Defense defense = affine_defense();
    AttackConfig cfg;
    cfg.epsilon = rng.uniform(0.0, 0.5);
    cfg.step_size = rng.uniform(0.0, 0.3);
    cfg.steps = 1 + static_cast<int>(rng.uniform() * 4);
    cfg.restarts = 1 + static_cast<int>(rng.uniform() * 3);
    cfg.random_start = rng.uniform() < 0.5;
    cfg.projection_rank_k = 2;
    cfg.spsa_batch = 8;
    cfg.seed = seed;
    const AttackTarget target{model, defense, {}};
    for (BackwardMode mode : modes) {
      cfg.backward_mode = mode;
      const AttackResult r = pgd(target, x, 1, cfg);
      const ImageTensor anchor = mode == BackwardMode::approx_input ? defense(x, 0) : x;
      EXPECT_LE(linf(r.adversarial, anchor), cfg.epsilon + 1e-9) << to_string(mode);
      EXPECT_GE(r.adversarial.flat().minCoeff(), 0.0);
      EXPECT_LE(r.adversarial.flat().maxCoeff(), 1.0);
    }
    const AttackResult f = fgsm(target, x, 1, cfg);
    EXPECT_LE(linf(f.adversarial, x), cfg.epsilon + 1e-9);
    const AttackResult s = spsa_attack(target, x, 1, cfg);
    EXPECT_LE(linf(s.adversarial, x), cfg.epsilon + 1e-9);
    EXPECT_GE(s.adversarial.flat().minCoeff(), 0.0);
    EXPECT_LE(s.adversarial.flat().maxCoeff(), 1.0);
  }
}

TEST(Pgd, BoxClipsNearEdges) {
  const ImageTensor x = ImageTensor::zeros(3, 3, 1);
  const LinearLossModel model(-Vector::Ones(9));
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.step_size = 0.1;
  cfg.steps = 5;
  const AttackResult r = pgd({model, {}, {}}, x, 0, cfg);
  EXPECT_EQ(r.adversarial, x);
}

TEST(Pgd, MoreRestartsNeverRaiseAccuracy) {
  AttackConfig cfg;
  cfg.epsilon = 0.12;
  cfg.step_size = 0.02;
  cfg.steps = 5;
  cfg.random_start = true;
  cfg.backward_mode = BackwardMode::none;
  cfg.seed = 31;
  double previous = 1.0;
  for (int restarts : {1, 2, 4}) {
    cfg.restarts = restarts;
    const double acc = accuracy_under(cfg);
    EXPECT_LE(acc, previous) << restarts;
    previous = acc;
  }
}

TEST(Pgd, RestartWithHighestLossIsReturned) {
  const Toy& t = toy();
  const Classifier model(t.params);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.step_size = 0.02;
  cfg.steps = 3;
  cfg.random_start = true;
  cfg.backward_mode = BackwardMode::none;
  for (std::size_t i = 0; i < 5; ++i) {
    cfg.seed = 500 + i;
    cfg.restarts = 3;
    const AttackResult all = pgd({model, {}, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
    cfg.restarts = 1;
    const AttackResult first =
        pgd({model, {}, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
    EXPECT_GE(all.final_loss, first.final_loss);
    EXPECT_TRUE(!first.success || all.success);
  }
}

TEST(Pgd, AccuracyNonIncreasingInSteps) {
  AttackConfig cfg;
  cfg.epsilon = 0.15;
  cfg.step_size = 0.01;
  cfg.backward_mode = BackwardMode::none;
  cfg.seed = 3;
  double previous = clean_accuracy();
  for (int steps : {1, 7, 20, 40}) {
    cfg.steps = steps;
    const double acc = accuracy_under(cfg);
    EXPECT_LE(acc, previous + 1e-12) << steps;
    previous = acc;
  }
}

TEST(Bpda, IdentityDefenseGivesPlainGradient) {
  const ClassifierParams params = small_net(20, 4);
  const Classifier model(params);
  const ImageTensor x = random_image(4, 5, 1, 5);
  const Defense identity = [](const ImageTensor& img, std::uint64_t) { return img; };
  const Vector plain = model.input_gradient(x.flat(), 2);
  EXPECT_EQ(bpda_gradient({model, identity, {}}, x, 2, 0), plain);
  EXPECT_EQ(bpda_gradient({model, {}, {}}, x, 2, 0), plain);
}

TEST(Bpda, ClippingDefenseOnInteriorPointGivesPlainGradient) {
  const ClassifierParams params = small_net(20, 6);
  const Classifier model(params);
  const ImageTensor x = interior_image(4, 5, 7);
  const Defense clip = [](const ImageTensor& img, std::uint64_t) {
    return img.with_data(img.flat().cwiseMax(0.1).cwiseMin(0.9).eval());
  };
  EXPECT_EQ(bpda_gradient({model, clip, {}}, x, 0, 0), model.input_gradient(x.flat(), 0));
}

TEST(Bpda, GradientIsTakenAtTheDefendedInput) {
  const ClassifierParams params = small_net(20, 8);
  const Classifier model(params);
  const ImageTensor x = random_image(4, 5, 1, 9);
  const Defense defense = affine_defense();
  EXPECT_EQ(bpda_gradient({model, defense, {}}, x, 1, 0),
            model.input_gradient(defense(x, 0).flat(), 1));
}

TEST(ApproxInput, IdentityDefenseMatchesPlainPgd) {
  const Toy& t = toy();
  const Classifier model(t.params);
  const Defense identity = [](const ImageTensor& img, std::uint64_t) { return img; };
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.step_size = 0.02;
  cfg.steps = 6;
  cfg.random_start = true;
  for (std::size_t i = 0; i < 5; ++i) {
    cfg.seed = i;
    cfg.backward_mode = BackwardMode::approx_input;
    const AttackResult a =
        pgd({model, identity, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
    cfg.backward_mode = BackwardMode::identity_bpda;
    const AttackResult b =
        pgd({model, identity, {}}, t.test_data.images[i], t.test_data.labels[i], cfg);
    EXPECT_EQ(a.adversarial, b.adversarial);
    EXPECT_EQ(a.final_loss, b.final_loss);
  }
}

TEST(ApproxInput, StaysWithinBudgetOfDefendedInput) {
  const ClassifierParams params = small_net(25, 10);
  const Classifier model(params);
  const Defense defense = affine_defense();
  const ImageTensor x = random_image(5, 5, 1, 11);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.step_size = 0.02;
  cfg.steps = 10;
  const AttackResult r = approx_input_attack({model, defense, {}}, x, 0, cfg);
  EXPECT_LE(linf(r.adversarial, defense(x, 0)), cfg.epsilon + 1e-9);
}

TEST(Projector, IsIdempotent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DenseMatrix basis = testing::gaussian_matrix(12, 20, seed);
    const LowRankProjector p(basis, 1 + seed % 5);
    const DenseMatrix g = testing::gaussian_matrix(12, 20, seed + 40);
    const DenseMatrix once = p.apply(g);
    EXPECT_LE((p.apply(once) - once).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Projector, FullRankIsIdentity) {
  const DenseMatrix basis = testing::gaussian_matrix(8, 11, 1);
  const LowRankProjector p(basis, 8);
  EXPECT_TRUE(p.is_identity());
  const DenseMatrix g = testing::gaussian_matrix(8, 11, 2);
  EXPECT_EQ(p.apply(g), g);
}

TEST(Projector, KeepsGradientsInTheImageSubspace) {
  const DenseMatrix basis = testing::low_rank_matrix(10, 14, {5.0, 3.0, 1.0}, 3);
  const LowRankProjector p(basis, 3);
  const SvdResult s = svd(basis);
  const DenseMatrix a = testing::gaussian_matrix(3, 3, 4);
  const DenseMatrix g = s.u.leftCols(3) * a * s.vt.topRows(3);
  EXPECT_LE((p.apply(g) - g).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Projector, AnnihilatesTheOrthogonalComplement) {
  const DenseMatrix basis = testing::low_rank_matrix(10, 14, {5.0, 3.0}, 5);
  const LowRankProjector p(basis, 2);
  const SvdResult s = svd(basis);
  const DenseMatrix g = s.u.col(5) * s.vt.row(7);
  EXPECT_LE(p.apply(g).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Projector, RankOutOfRange) {
  const DenseMatrix basis = testing::gaussian_matrix(4, 6, 1);
  EXPECT_EQ(code_of([&] { LowRankProjector(basis, 0); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { LowRankProjector(basis, 5); }), Errc::invalid_argument);
}

TEST(ProjectedBpda, FullRankMatchesPlainBpda) {
  const ClassifierParams params = small_net(30, 12);
  const Classifier model(params);
  const Defense defense = affine_defense();
  const ImageTensor x = random_image(5, 6, 1, 13);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.step_size = 0.01;
  cfg.steps = 8;
  cfg.random_start = true;
  cfg.seed = 14;
  cfg.projection_rank_k = 5;
  cfg.backward_mode = BackwardMode::projected_bpda;
  const AttackResult a = pgd({model, defense, {}}, x, 2, cfg);
  cfg.backward_mode = BackwardMode::identity_bpda;
  const AttackResult b = pgd({model, defense, {}}, x, 2, cfg);
  EXPECT_EQ(a.adversarial, b.adversarial);
}

TEST(ProjectedBpda, PerturbationLiesInTheImageSubspace) {
  // Exactly rank-2 interior image, no random start and no box contact: every
  // step is a sign of a projected gradient, so only the projection limits it.
  DenseMatrix m = testing::low_rank_matrix(6, 6, {1.0, 0.5}, 15);
  m = (0.5 + 0.2 * m.array() / m.cwiseAbs().maxCoeff()).matrix();
  const ImageTensor x = from_wide_matrix(m, 1);
  const ClassifierParams params = small_net(36, 16);
  const Classifier model(params);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.step_size = 0.05;
  cfg.steps = 1;
  cfg.projection_rank_k = 2;
  cfg.backward_mode = BackwardMode::projected_bpda;
  const AttackResult r = pgd({model, {}, {}}, x, 0, cfg);
  const DenseMatrix g = wide_from_hwc(model.input_gradient(x.flat(), 0), 6, 6, 1);
  const DenseMatrix projected = LowRankProjector(m, 2).apply(g);
  const DenseMatrix expected = m + cfg.step_size * signs(projected.reshaped()).reshaped(6, 6);
  EXPECT_LE((to_wide_matrix(r.adversarial) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Spsa, QuadraticGradientEstimate) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Vector x = testing::gaussian_matrix(16, 1, seed).col(0);
    const auto f = [](const Vector& v) { return v.squaredNorm(); };
    const Vector est = spsa_gradient(f, x, 4096, 0.01, seed + 20);
    const Vector truth = 2.0 * x;
    EXPECT_LT((est - truth).norm() / truth.norm(), 0.1) << seed;
  }
}

TEST(Spsa, ZeroEpsilonLeavesInputUnchanged) {
  const ClassifierParams params = small_net(16, 17);
  const Classifier model(params);
  const ImageTensor x = random_image(4, 4, 1, 18);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.steps = 3;
  cfg.spsa_batch = 16;
  const AttackResult r = spsa_attack({model, {}, {}}, x, 0, cfg);
  EXPECT_EQ(r.adversarial, x);
  EXPECT_EQ(r.queries, 3u * 2u * 16u);
}

TEST(Spsa, DefaultBatch) { EXPECT_EQ(AttackConfig{}.spsa_batch, 2048u); }

TEST(Spsa, ReducesMarginOnToyModel) {
  const Toy& t = toy();
  const Classifier model(t.params);
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.steps = 20;
  cfg.spsa_batch = 64;
  cfg.spsa_lr = 0.05;
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    cfg.seed = i;
    const ImageTensor& x = t.test_data.images[i];
    const std::size_t y = t.test_data.labels[i];
    const AttackResult r = spsa_attack({model, {}, {}}, x, y, cfg);
    before += margin_loss(model.logits(x.flat()), y);
    after += margin_loss(model.logits(r.adversarial.flat()), y);
  }
  EXPECT_LT(after, before);
}

TEST(Spsa, Deterministic) {
  const ClassifierParams params = small_net(16, 19);
  const Classifier model(params);
  const ImageTensor x = random_image(4, 4, 1, 20);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.steps = 4;
  cfg.spsa_batch = 32;
  cfg.seed = 21;
  const Defense defense = affine_defense();
  EXPECT_EQ(spsa_attack({model, defense, {}}, x, 1, cfg).adversarial,
            spsa_attack({model, defense, {}}, x, 1, cfg).adversarial);
}

TEST(MarginLoss, Values) {
  Vector z(3);
  z << 2.0, 5.0, 1.0;
  EXPECT_DOUBLE_EQ(margin_loss(z, 1), 3.0);
  EXPECT_DOUBLE_EQ(margin_loss(z, 0), 0.0);  // -3 clamped at -kappa = 0
  EXPECT_DOUBLE_EQ(margin_loss(z, 0, 10.0), -3.0);
  EXPECT_EQ(code_of([&] { margin_loss(z, 3); }), Errc::invalid_label);
}

TEST(AttackConfig, Validation) {
  const auto bad = [](auto mutate) {
    AttackConfig c;
    mutate(c);
    return code_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](AttackConfig& c) { c.epsilon = -0.1; }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.epsilon = std::nan(""); }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.steps = -1; }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.restarts = 0; }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.projection_rank_k = 0; }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.spsa_batch = 0; }), Errc::invalid_argument);
  EXPECT_EQ(bad([](AttackConfig& c) { c.spsa_delta = 0.0; }), Errc::invalid_argument);
}

TEST(BackwardModeNames, RoundTrip) {
  for (BackwardMode m : {BackwardMode::none, BackwardMode::identity_bpda,
                         BackwardMode::projected_bpda, BackwardMode::approx_input})
    EXPECT_EQ(parse_backward_mode(to_string(m)), m);
  EXPECT_EQ(code_of([] { parse_backward_mode("sideways"); }), Errc::invalid_argument);
}

}  // namespace
}  // namespace menet
