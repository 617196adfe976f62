#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "menet/image.hpp"
#include "menet/model.hpp"

namespace menet {

/// Input transform applied before the model. `seed` selects the randomness
/// of one application (the mask, for matrix-estimation defenses).
using Defense = std::function<ImageTensor(const ImageTensor&, std::uint64_t seed)>;

/// Predicted label for an image under some inference procedure; used to decide
/// whether an adversarial example succeeded.
using Judge = std::function<std::size_t(const ImageTensor&, std::uint64_t seed)>;

/// How the attack backpropagates through a defense.
enum class BackwardMode {
  none,            // ignore the defense; gradient of the bare model at x
  identity_bpda,   // forward through the defense, identity in the backward pass
  projected_bpda,  // identity BPDA, gradient projected on the image's top-k singular space
  approx_input,    // identity BPDA started from (and budgeted around) defense(x)
};

std::string to_string(BackwardMode m);
BackwardMode parse_backward_mode(const std::string& name);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 7;
  int restarts = 1;
  bool random_start = false;
  BackwardMode backward_mode = BackwardMode::identity_bpda;
  std::size_t projection_rank_k = 5;
  bool projection_recompute = false;  // rebuild the projection basis from every iterate
  std::size_t spsa_batch = 2048;
  double spsa_delta = 0.01;
  double spsa_lr = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct AttackResult {
  ImageTensor adversarial;
  double final_loss = 0.0;
  std::size_t queries = 0;  // gradient steps, or forward evaluations for SPSA
  bool success = false;     // prediction != label (any restart)
};

/// Who the attack is aimed at. `defense` and `judge` may be empty: an empty
/// defense is the identity and an empty judge is argmax of model(defense(x)).
struct AttackTarget {
  const DifferentiableModel& model;
  Defense defense;
  Judge judge;
};

/// Gradient of the model loss taken at z = defense(x), treating the defense
/// as the identity in the backward pass.
Vector bpda_gradient(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                     std::uint64_t seed);

AttackResult fgsm(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                  const AttackConfig& cfg);

/// l-infinity PGD with optional random start and restarts. The restart with
/// the highest final loss is returned; `success` is the OR over restarts.
/// Dispatches on cfg.backward_mode for projected and approximate-input variants.
AttackResult pgd(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                 const AttackConfig& cfg);

/// PGD with identity BPDA from x' = defense(x), budget measured around x'.
AttackResult approx_input_attack(const AttackTarget& target, const ImageTensor& x,
                                 std::size_t label, const AttackConfig& cfg);

/// PGD with identity BPDA whose gradient is projected on U_k U_k^T G V_k V_k^T,
/// U_k and V_k the top-k singular vectors of the clean image's wide matrix.
AttackResult projected_bpda(const AttackTarget& target, const ImageTensor& x,
                            std::size_t label, const AttackConfig& cfg);

/// Orthogonal projector onto the top-k left/right singular spaces of `basis`.
class LowRankProjector {
 public:
  LowRankProjector(const DenseMatrix& basis, std::size_t k);
  DenseMatrix apply(const DenseMatrix& g) const;
  bool is_identity() const { return identity_; }

 private:
  DenseMatrix u_;  // rows x k
  DenseMatrix v_;  // cols x k
  bool identity_ = false;
};

/// Margin loss max(z_label - max_{j != label} z_j, -kappa).
double margin_loss(const Vector& logits, std::size_t label, double kappa = 0.0);

/// SPSA gradient estimate of `f` at x from `batch` Rademacher pairs:
/// mean over v of (f(x + delta v) - f(x - delta v)) / (2 delta) * v.
Vector spsa_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                     std::size_t batch, double delta, std::uint64_t seed);

/// Gradient-free attack: SPSA estimates of the margin loss through the full
/// defended pipeline, Adam descent, projection to the budget and box.
AttackResult spsa_attack(const AttackTarget& target, const ImageTensor& x, std::size_t label,
                         const AttackConfig& cfg);

}  // namespace menet
