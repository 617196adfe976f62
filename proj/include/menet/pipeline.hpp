#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "menet/attacks.hpp"
#include "menet/dataset.hpp"
#include "menet/estimation.hpp"
#include "menet/masking.hpp"
#include "menet/model.hpp"

namespace menet {

/// The preprocessing layer: mask at the schedule mean, then estimate.
/// Disabled means the model sees raw inputs.
struct DefenseConfig {
  bool enabled = true;
  MaskSchedule schedule = make_schedule(0.8, 1.0, 10);
  EstimatorConfig estimator;
  std::size_t votes = 1;  // > 1 switches inference to majority vote

  double p() const { return inference_p(schedule); }
  /// "0.80->1.00" style label, or "none" when disabled.
  std::string range_label() const;
  void validate() const;
  friend bool operator==(const DefenseConfig&, const DefenseConfig&) = default;
};

struct TrainPlan {
  std::vector<std::size_t> hidden = {256, 128};
  DefenseConfig defense;
  int epochs = 10;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  std::vector<int> lr_decay_epochs;  // multiply lr by lr_decay at the start of these epochs
  double lr_decay = 0.1;
  bool adversarial = false;
  int adv_steps = 7;
  double adv_epsilon = 8.0 / 255.0;
  double adv_step_size = 2.0 / 255.0;
  bool adv_through_defense = true;  // craft training-time PGD through the defense (identity BPDA)
  bool resample_per_epoch = false;  // redraw the masked reconstructions every epoch
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainPlan&, const TrainPlan&) = default;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ClassifierParams params;
  std::vector<EpochLog> log;
};

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

/// Per-image seed: base XOR index.
constexpr std::uint64_t image_seed(std::uint64_t base, std::size_t index) {
  return base ^ static_cast<std::uint64_t>(index);
}

/// One reconstruction per (image, schedule probability), image-major, labels
/// copied. Mask j of image i uses derive_seed(image_seed(seed, i), j).
Dataset menet_augment(const Dataset& data, const MaskSchedule& schedule,
                      const EstimatorConfig& estimator, std::uint64_t seed);

TrainResult train(const TrainPlan& plan, const Dataset& data);

/// Reconstruction at the configured inference p; identity when disabled.
Defense make_defense(const DefenseConfig& cfg);

/// One mask at inference_p(schedule), reconstruct, argmax.
std::size_t infer(const ClassifierParams& params, const EstimatorConfig& estimator,
                  const MaskSchedule& schedule, const ImageTensor& img, std::uint64_t seed);

/// Rounds used when majority-vote inference is switched on without a count.
inline constexpr std::size_t kDefaultVotes = 10;

/// Index of the largest tally; the lowest label wins ties.
std::size_t plurality_label(std::span<const std::size_t> tally);

/// Plurality over `votes` mask-reconstruct-predict rounds at probability p;
/// ties go to the lowest label. Round r uses mask seed derive_seed(seed, r),
/// so votes = 1 reproduces infer.
std::size_t infer_vote(const ClassifierParams& params, const EstimatorConfig& estimator, double p,
                       const ImageTensor& img, std::size_t votes, std::uint64_t seed);

/// Prediction through whatever defense configuration is in force.
std::size_t predict(const ClassifierParams& params, const DefenseConfig& defense,
                    const ImageTensor& img, std::uint64_t seed);

enum class AttackKind { fgsm, pgd, spsa };
enum class AttackSource { whitebox, transfer };

std::string to_string(AttackKind k);
std::string to_string(AttackSource s);
AttackKind parse_attack_kind(const std::string& name);
AttackSource parse_attack_source(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::pgd;
  AttackSource source = AttackSource::whitebox;
  AttackConfig config;

  /// e.g. "pgd-40/identity_bpda".
  std::string label() const;
  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

AttackResult run_attack(const AttackSpec& spec, const AttackTarget& target, const ImageTensor& x,
                        std::size_t label);

/// The model an attack is crafted on plus its defense. White-box rows attack
/// the victim; transfer rows attack `transfer_source` (a copy trained the
/// same way with another seed) and are judged on the victim.
struct EvalSubject {
  ClassifierParams params;
  DefenseConfig defense;
};

struct EvalRow {
  std::string p_range;
  std::string method;
  std::string attack;   // "clean" for the first row
  std::string source;
  int steps = 0;
  double epsilon = 0.0;
  double accuracy = 0.0;
  std::size_t evaluated = 0;
  std::string status = "ok";
};

struct EvalReport {
  double clean_accuracy = 0.0;
  std::vector<EvalRow> rows;  // rows[0] is the clean row
};

EvalReport evaluate(const EvalSubject& victim, const Dataset& data,
                    std::span<const AttackSpec> grid, std::uint64_t seed,
                    const std::optional<EvalSubject>& transfer_source = std::nullopt);

/// Header: p_range,method,attack,source,steps,epsilon,accuracy,evaluated,status
void write_eval_csv(std::ostream& os, const EvalReport& report);

struct SweepRow {
  double p_lo = 0.0;
  double p_hi = 0.0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  std::string status = "ok";
};

/// One model per p-range (same plan and seed otherwise), each scored on clean
/// and attacked test data.
std::vector<SweepRow> tradeoff_sweep(const Dataset& train_data, const Dataset& test_data,
                                     std::span<const std::pair<double, double>> p_ranges,
                                     const TrainPlan& base, const AttackSpec& attack,
                                     std::uint64_t seed);

/// Header: p_lo,p_hi,clean_accuracy,robust_accuracy,status
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

}  // namespace menet
