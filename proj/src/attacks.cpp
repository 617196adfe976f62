#include "menet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "menet/error.hpp"
#include "menet/numerics.hpp"
#include "menet/rng.hpp"

namespace menet {
namespace {

// Stream indices under a restart's seed. Step t uses stream t directly.
constexpr std::uint64_t kRandomStartStream = 1ULL << 40;
constexpr std::uint64_t kJudgeStream = (1ULL << 40) + 1;
constexpr std::uint64_t kApproxInputStream = (1ULL << 40) + 2;

using GradientFn = std::function<Vector(const ImageTensor& current, std::uint64_t seed)>;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

ImageTensor apply_defense(const AttackTarget& t, const ImageTensor& x, std::uint64_t seed) {
  return t.defense ? t.defense(x, seed) : x;
}

std::size_t judge(const AttackTarget& t, const ImageTensor& x, std::uint64_t seed) {
  if (t.judge) return t.judge(x, seed);
  return t.model.predict(apply_defense(t, x, seed).flat());
}

void check_gradient(const Vector& g) {
  if (!g.allFinite()) throw Error(Errc::non_finite, "attack: non-finite input gradient");
}

struct RunOutcome {
  ImageTensor adversarial;
  double loss;
  bool success;
};

RunOutcome finish(const AttackTarget& t, const ImageTensor& adv, std::size_t label,
                  std::uint64_t run_seed) {
  const std::uint64_t seed = derive_seed(run_seed, kJudgeStream);
  const double loss = t.model.loss(apply_defense(t, adv, seed).flat(), label);
  return {adv, loss, judge(t, adv, seed) != label};
}

// Projected sign-gradient ascent around `anchor`, one independent run per restart.
AttackResult run_pgd(const AttackTarget& t, const ImageTensor& anchor, std::size_t label,
                     const AttackConfig& cfg, const GradientFn& gradient) {
  cfg.validate();
  const Vector lo = (anchor.flat().array() - cfg.epsilon).cwiseMax(0.0);
  const Vector hi = (anchor.flat().array() + cfg.epsilon).cwiseMin(1.0);

  std::optional<RunOutcome> best;
  bool any_success = false;
  for (int r = 0; r < cfg.restarts; ++r) {
    const std::uint64_t run_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    Vector cur = anchor.flat();
    if (cfg.random_start) {
      CounterRng rng(derive_seed(run_seed, kRandomStartStream));
      for (Eigen::Index i = 0; i < cur.size(); ++i) cur[i] += rng.uniform(-cfg.epsilon, cfg.epsilon);
      cur = cur.cwiseMax(lo).cwiseMin(hi);
    }
    for (int step = 0; step < cfg.steps; ++step) {
      const Vector g =
          gradient(anchor.with_data(cur), derive_seed(run_seed, static_cast<std::uint64_t>(step)));
      check_gradient(g);
      for (Eigen::Index i = 0; i < cur.size(); ++i) cur[i] += cfg.step_size * sign(g[i]);
      cur = cur.cwiseMax(lo).cwiseMin(hi);
    }
    RunOutcome outcome = finish(t, anchor.with_data(cur), label, run_seed);
    any_success = any_success || outcome.success;
    if (!best || outcome.loss > best->loss) best = std::move(outcome);
  }
  AttackResult result{best->adversarial, best->loss,
                      static_cast<std::size_t>(cfg.steps) * static_cast<std::size_t>(cfg.restarts),
                      any_success};
  return result;
}

GradientFn bpda_fn(const AttackTarget& t, std::size_t label) {
  return [&t, label](const ImageTensor& cur, std::uint64_t seed) {
    return bpda_gradient(t, cur, label, seed);
  };
}

}  // namespace

std::string to_string(BackwardMode m) {
  switch (m) {
    case BackwardMode::none: return "none";
    case BackwardMode::identity_bpda: return "identity_bpda";
    case BackwardMode::projected_bpda: return "projected_bpda";
    case BackwardMode::approx_input: return "approx_input";
  }
  return "unknown";
}

BackwardMode parse_backward_mode(const std::string& name) {
  if (name == "none") return BackwardMode::none;
  if (name == "identity_bpda" || name == "bpda") return BackwardMode::identity_bpda;
  if (name == "projected_bpda" || name == "projected") return BackwardMode::projected_bpda;
  if (name == "approx_input") return BackwardMode::approx_input;
  throw Error(Errc::invalid_argument, "unknown backward mode '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw Error(Errc::invalid_argument, "attack: epsilon must be >= 0");
  if (!(step_size >= 0.0)) throw Error(Errc::invalid_argument, "attack: step_size must be >= 0");
  if (steps < 0) throw Error(Errc::invalid_argument, "attack: steps must be >= 0");
  if (restarts < 1) throw Error(Errc::invalid_argument, "attack: restarts must be >= 1");
  if (projection_rank_k == 0)
    throw Error(Errc::invalid_argument, "attack: projection_rank_k must be >= 1");
  if (spsa_batch == 0) throw Error(Errc::invalid_argument, "attack: spsa_batch must be >= 1");
  if (!(spsa_delta > 0.0)) throw Error(Errc::invalid_argument, "attack: spsa_delta must be > 0");
  if (!(spsa_lr > 0.0)) throw Error(Errc::invalid_argument, "attack: spsa_lr must be > 0");
}

Vector bpda_gradient(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                     std::uint64_t seed) {
  const ImageTensor z = apply_defense(target, x, seed);
  return target.model.input_gradient(z.flat(), label);
}

AttackResult fgsm(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                  const AttackConfig& cfg) {
  cfg.validate();
  const std::uint64_t run_seed = derive_seed(cfg.seed, 0);
  const std::uint64_t step_seed = derive_seed(run_seed, 0);
  const Vector g = cfg.backward_mode == BackwardMode::none
                       ? target.model.input_gradient(x.flat(), label)
                       : bpda_gradient(target, x, label, step_seed);
  check_gradient(g);
  Vector adv = x.flat();
  for (Eigen::Index i = 0; i < adv.size(); ++i) adv[i] += cfg.epsilon * sign(g[i]);
  adv = adv.cwiseMax(0.0).cwiseMin(1.0);
  RunOutcome outcome = finish(target, x.with_data(adv), label, run_seed);
  return {outcome.adversarial, outcome.loss, 1, outcome.success};
}

AttackResult pgd(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                 const AttackConfig& cfg) {
  switch (cfg.backward_mode) {
    case BackwardMode::approx_input: return approx_input_attack(target, x, label, cfg);
    case BackwardMode::projected_bpda: return projected_bpda(target, x, label, cfg);
    case BackwardMode::none:
      return run_pgd(target, x, label, cfg, [&target, label](const ImageTensor& cur, std::uint64_t) {
        return target.model.input_gradient(cur.flat(), label);
      });
    case BackwardMode::identity_bpda: break;
  }
  return run_pgd(target, x, label, cfg, bpda_fn(target, label));
}

AttackResult approx_input_attack(const AttackTarget& target, const ImageTensor& x,
                                 std::size_t label, const AttackConfig& cfg) {
  const ImageTensor start = apply_defense(target, x, derive_seed(cfg.seed, kApproxInputStream));
  return run_pgd(target, start, label, cfg, bpda_fn(target, label));
}

LowRankProjector::LowRankProjector(const DenseMatrix& basis, std::size_t k) {
  const auto limit = static_cast<std::size_t>(std::min(basis.rows(), basis.cols()));
  if (k == 0 || k > limit) {
    throw Error(Errc::invalid_argument, "projection rank " + std::to_string(k) +
                                            " outside [1, " + std::to_string(limit) + "]");
  }
  // The projector on the full singular space is exactly the identity.
  identity_ = k == limit;
  if (identity_) return;
  const SvdResult s = svd(basis);
  const auto kk = static_cast<Eigen::Index>(k);
  u_ = s.u.leftCols(kk);
  v_ = s.vt.topRows(kk).transpose();
}

DenseMatrix LowRankProjector::apply(const DenseMatrix& g) const {
  if (identity_) return g;
  return u_ * (u_.transpose() * g * v_) * v_.transpose();
}

AttackResult projected_bpda(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                            const AttackConfig& cfg) {
  const auto h = x.height(), w = x.width(), c = x.channels();
  const LowRankProjector fixed(to_wide_matrix(x), cfg.projection_rank_k);
  return run_pgd(target, x, label, cfg,
                 [&](const ImageTensor& cur, std::uint64_t seed) {
                   const Vector g = bpda_gradient(target, cur, label, seed);
                   const DenseMatrix wide = wide_from_hwc(g, h, w, c);
                   if (cfg.projection_recompute) {
                     const LowRankProjector current(to_wide_matrix(cur), cfg.projection_rank_k);
                     return hwc_from_wide(current.apply(wide), c);
                   }
                   return hwc_from_wide(fixed.apply(wide), c);
                 });
}

double margin_loss(const Vector& logits, std::size_t label, double kappa) {
  const auto y = static_cast<Eigen::Index>(label);
  if (y >= logits.size()) throw Error(Errc::invalid_label, "margin_loss: label out of range");
  double other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < logits.size(); ++j)
    if (j != y) other = std::max(other, logits[j]);
  return std::max(logits[y] - other, -kappa);
}

Vector spsa_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                     std::size_t batch, double delta, std::uint64_t seed) {
  CounterRng rng(seed);
  Vector sum = Vector::Zero(x.size());
  Vector v(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.rademacher();
    const double diff = (f(x + delta * v) - f(x - delta * v)) / (2.0 * delta);
    sum += diff * v;  // v is its own elementwise inverse
  }
  return sum / static_cast<double>(batch);
}

AttackResult spsa_attack(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                         const AttackConfig& cfg) {
  cfg.validate();
  const Vector lo = (x.flat().array() - cfg.epsilon).cwiseMax(0.0);
  const Vector hi = (x.flat().array() + cfg.epsilon).cwiseMin(1.0);
  const Eigen::Index dim = static_cast<Eigen::Index>(x.size());
  const auto batch = static_cast<Eigen::Index>(cfg.spsa_batch);
  const std::uint64_t run_seed = derive_seed(cfg.seed, 0);

  // Adam state.
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  Vector m = Vector::Zero(dim), v = Vector::Zero(dim);

  Vector cur = x.flat();
  std::size_t queries = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const std::uint64_t step_seed = derive_seed(run_seed, static_cast<std::uint64_t>(step));
    CounterRng rng(step_seed);
    DenseMatrix dirs(dim, batch);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index i = 0; i < dim; ++i) dirs(i, b) = rng.rademacher();

    // Columns [0, batch) are x + delta v, [batch, 2 batch) are x - delta v.
    DenseMatrix probes(dim, 2 * batch);
    probes.leftCols(batch) = (dirs * cfg.spsa_delta).colwise() + cur;
    probes.rightCols(batch) = (dirs * -cfg.spsa_delta).colwise() + cur;
    if (target.defense) {
      for (Eigen::Index b = 0; b < 2 * batch; ++b) {
        // A pair shares one defense draw so the difference isolates the probe.
        const auto pair = static_cast<std::uint64_t>(b % batch);
        const Vector clipped = probes.col(b).cwiseMax(0.0).cwiseMin(1.0);
        probes.col(b) =
            target.defense(x.with_data(clipped), derive_seed(step_seed, pair + 1)).flat();
      }
    }
    const DenseMatrix logits = target.model.logits_batch(probes);
    queries += static_cast<std::size_t>(2 * batch);

    Vector grad = Vector::Zero(dim);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double diff = (margin_loss(logits.col(b), label) -
                           margin_loss(logits.col(b + batch), label)) /
                          (2.0 * cfg.spsa_delta);
      grad += diff * dirs.col(b);
    }
    grad /= static_cast<double>(batch);
    check_gradient(grad);

    const double t = static_cast<double>(step + 1);
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
    const Vector m_hat = m / (1.0 - std::pow(kBeta1, t));
    const Vector v_hat = v / (1.0 - std::pow(kBeta2, t));
    cur -= cfg.spsa_lr * (m_hat.array() / (v_hat.array().sqrt() + kAdamEps)).matrix();
    cur = cur.cwiseMax(lo).cwiseMin(hi);
  }

  const ImageTensor adv = x.with_data(cur);
  const std::uint64_t judge_seed = derive_seed(run_seed, kJudgeStream);
  const double loss = margin_loss(target.model.logits(apply_defense(target, adv, judge_seed).flat()), label);
  return {adv, loss, queries, judge(target, adv, judge_seed) != label};
}

}  // namespace menet
