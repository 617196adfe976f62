#include "menet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "menet/error.hpp"
#include "menet/rng.hpp"

namespace menet {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kAugmentStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kAdversarialStream = 4;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}


std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string DefenseConfig::range_label() const {
  if (!enabled) return "none";
  if (schedule.probs.size() == 1) return fixed(schedule.probs.front(), 2);
  // The exclusive schedule's nominal right end is first + n * spacing.
  const double step = schedule.probs[1] - schedule.probs[0];
  const double end = schedule.probs.front() + step * static_cast<double>(schedule.probs.size());
  return fixed(schedule.probs.front(), 2) + "->" + fixed(end, 2);
}

void DefenseConfig::validate() const {
  if (!enabled) return;
  if (schedule.probs.empty()) throw Error(Errc::invalid_argument, "defense: empty mask schedule");
  for (double p : schedule.probs)
    if (!(p > 0.0 && p <= 1.0))
      throw Error(Errc::invalid_argument, "defense: schedule probabilities must lie in (0, 1]");
  if (votes == 0) throw Error(Errc::invalid_argument, "defense: votes must be >= 1");
  estimator.validate();
}

void TrainPlan::validate() const {
  defense.validate();
  if (epochs < 0) throw Error(Errc::invalid_argument, "train: epochs must be >= 0");
  if (batch_size == 0) throw Error(Errc::invalid_argument, "train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error(Errc::invalid_argument, "train: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw Error(Errc::invalid_argument, "train: momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw Error(Errc::invalid_argument, "train: lr_decay must be > 0");
  if (adversarial) {
    if (adv_steps < 1) throw Error(Errc::invalid_argument, "train: adv_steps must be >= 1");
    if (!(adv_epsilon > 0.0 && adv_step_size > 0.0))
      throw Error(Errc::invalid_argument, "train: adversarial epsilon and step size must be > 0");
  }
  for (std::size_t h : hidden)
    if (h == 0) throw Error(Errc::invalid_argument, "train: hidden layer sizes must be positive");
}

Dataset menet_augment(const Dataset& data, const MaskSchedule& schedule,
                      const EstimatorConfig& estimator, std::uint64_t seed) {
  if (schedule.probs.empty()) throw Error(Errc::invalid_argument, "menet_augment: empty schedule");
  Dataset out;
  out.num_classes = data.num_classes;
  out.images.reserve(data.size() * schedule.size());
  out.labels.reserve(data.size() * schedule.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint64_t base = image_seed(seed, i);
    for (std::size_t j = 0; j < schedule.size(); ++j) {
      try {
        out.images.push_back(
            reconstruct_image(data.images[i], schedule.probs[j], derive_seed(base, j), estimator));
      } catch (const Error& e) {
        throw Error(e.code(), "menet_augment: image " + std::to_string(i) + ": " + e.what());
      }
      out.labels.push_back(data.labels[i]);
    }
  }
  return out;
}

Defense make_defense(const DefenseConfig& cfg) {
  if (!cfg.enabled) return [](const ImageTensor& img, std::uint64_t) { return img; };
  return [p = cfg.p(), est = cfg.estimator](const ImageTensor& img, std::uint64_t seed) {
    return reconstruct_image(img, p, seed, est);
  };
}

std::size_t plurality_label(std::span<const std::size_t> tally) {
  if (tally.empty()) throw Error(Errc::empty_input, "plurality_label: no classes");
  // max_element returns the first maximum.
  return static_cast<std::size_t>(std::max_element(tally.begin(), tally.end()) - tally.begin());
}

std::size_t infer_vote(const ClassifierParams& params, const EstimatorConfig& estimator, double p,
                       const ImageTensor& img, std::size_t votes, std::uint64_t seed) {
  if (votes == 0) throw Error(Errc::invalid_argument, "infer_vote: votes must be >= 1");
  std::vector<std::size_t> tally(params.num_classes(), 0);
  for (std::size_t r = 0; r < votes; ++r) {
    const ImageTensor rec = reconstruct_image(img, p, derive_seed(seed, r), estimator);
    Eigen::Index arg = 0;
    forward(params, rec.flat()).maxCoeff(&arg);
    ++tally[static_cast<std::size_t>(arg)];
  }
  return plurality_label(tally);
}

std::size_t infer(const ClassifierParams& params, const EstimatorConfig& estimator,
                  const MaskSchedule& schedule, const ImageTensor& img, std::uint64_t seed) {
  return infer_vote(params, estimator, inference_p(schedule), img, 1, seed);
}

std::size_t predict(const ClassifierParams& params, const DefenseConfig& defense,
                    const ImageTensor& img, std::uint64_t seed) {
  if (!defense.enabled) {
    Eigen::Index arg = 0;
    forward(params, img.flat()).maxCoeff(&arg);
    return static_cast<std::size_t>(arg);
  }
  return infer_vote(params, defense.estimator, defense.p(), img, defense.votes, seed);
}

TrainResult train(const TrainPlan& plan, const Dataset& data) {
  plan.validate();
  if (data.empty()) throw Error(Errc::empty_input, "train: empty dataset");
  const std::size_t classes = std::max<std::size_t>(data.num_classes, 2);

  std::vector<std::size_t> sizes{data.images.front().size()};
  sizes.insert(sizes.end(), plan.hidden.begin(), plan.hidden.end());
  sizes.push_back(classes);

  TrainResult result;
  result.params = ClassifierParams::init(sizes, derive_seed(plan.seed, kInitStream));
  if (plan.epochs == 0) return result;

  const bool me = plan.defense.enabled;
  Dataset train_set =
      me ? menet_augment(data, plan.defense.schedule, plan.defense.estimator,
                         derive_seed(plan.seed, kAugmentStream))
         : data;
  const Defense defense = make_defense(plan.defense);

  MomentumSgd sgd(plan.lr, plan.momentum);
  double lr = plan.lr;
  const auto dim = static_cast<Eigen::Index>(sizes.front());

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    if (std::find(plan.lr_decay_epochs.begin(), plan.lr_decay_epochs.end(), epoch) !=
        plan.lr_decay_epochs.end()) {
      lr *= plan.lr_decay;
      sgd.set_lr(lr);
    }
    if (me && plan.resample_per_epoch && epoch > 0) {
      train_set = menet_augment(data, plan.defense.schedule, plan.defense.estimator,
                                derive_seed(derive_seed(plan.seed, kAugmentStream),
                                            static_cast<std::uint64_t>(epoch)));
    }
    const auto order =
        permutation(train_set.size(), derive_seed(derive_seed(plan.seed, kShuffleStream),
                                                  static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += plan.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + plan.batch_size);
      DenseMatrix xs(dim, static_cast<Eigen::Index>(end - start));
      std::vector<std::size_t> labels;
      labels.reserve(end - start);

      std::optional<Classifier> snapshot;
      if (plan.adversarial) snapshot.emplace(result.params);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto col = static_cast<Eigen::Index>(k - start);
        labels.push_back(train_set.labels[idx]);
        if (!plan.adversarial) {
          xs.col(col) = train_set.images[idx].flat();
          continue;
        }
        AttackConfig ac;
        ac.epsilon = plan.adv_epsilon;
        ac.step_size = plan.adv_step_size;
        ac.steps = plan.adv_steps;
        ac.random_start = true;
        ac.backward_mode = BackwardMode::identity_bpda;
        ac.seed = derive_seed(derive_seed(plan.seed, kAdversarialStream),
                              static_cast<std::uint64_t>(epoch) * train_set.size() + idx);
        const bool through = me && plan.adv_through_defense;
        AttackTarget target{*snapshot, through ? defense : Defense{}, {}};
        const ImageTensor adv = pgd(target, train_set.images[idx], train_set.labels[idx], ac).adversarial;
        xs.col(col) = through ? defense(adv, derive_seed(ac.seed, 0)).flat() : adv.flat();
      }

      const BatchLossAndGrad bg = batch_loss_and_grad(result.params, xs, labels);
      if (!std::isfinite(bg.loss)) {
        throw Error(Errc::numerical_failure, "train: non-finite loss at epoch " +
                                                 std::to_string(epoch) + ", batch " +
                                                 std::to_string(batch_index));
      }
      try {
        sgd.step(result.params, bg.layers);
      } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index) + ")");
      }
      loss_sum += bg.loss * static_cast<double>(labels.size());
      correct += bg.correct;
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(order.size()),
                          static_cast<double>(correct) / static_cast<double>(order.size()), lr});
  }
  return result;
}

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::spsa: return "spsa";
  }
  return "unknown";
}

std::string to_string(AttackSource s) {
  return s == AttackSource::whitebox ? "whitebox" : "transfer";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "spsa") return AttackKind::spsa;
  throw Error(Errc::invalid_argument, "unknown attack kind '" + name + "'");
}

AttackSource parse_attack_source(const std::string& name) {
  if (name == "whitebox" || name == "white-box") return AttackSource::whitebox;
  if (name == "transfer" || name == "blackbox") return AttackSource::transfer;
  throw Error(Errc::invalid_argument, "unknown attack source '" + name + "'");
}

std::string AttackSpec::label() const {
  std::string out = to_string(kind);
  if (kind != AttackKind::fgsm) out += "-" + std::to_string(config.steps);
  return out + "/" + to_string(config.backward_mode);
}

AttackResult run_attack(const AttackSpec& spec, const AttackTarget& target, const ImageTensor& x,
                        std::size_t label) {
  switch (spec.kind) {
    case AttackKind::fgsm: return fgsm(target, x, label, spec.config);
    case AttackKind::pgd: return pgd(target, x, label, spec.config);
    case AttackKind::spsa: return spsa_attack(target, x, label, spec.config);
  }
  throw Error(Errc::invalid_argument, "run_attack: unknown attack kind");
}

EvalReport evaluate(const EvalSubject& victim, const Dataset& data,
                    std::span<const AttackSpec> grid, std::uint64_t seed,
                    const std::optional<EvalSubject>& transfer_source) {
  if (data.empty()) throw Error(Errc::empty_input, "evaluate: empty dataset");
  victim.defense.validate();
  const std::string p_range = victim.defense.range_label();
  const std::string method =
      victim.defense.enabled ? to_string(victim.defense.estimator.method) : "none";

  EvalReport report;
  std::size_t clean_correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(victim.params, victim.defense, data.images[i], image_seed(seed, i)) == data.labels[i])
      ++clean_correct;
  }
  report.clean_accuracy = static_cast<double>(clean_correct) / static_cast<double>(data.size());
  report.rows.push_back({p_range, method, "clean", "-", 0, 0.0, report.clean_accuracy, data.size()});

  const Classifier victim_model(victim.params);
  const Judge victim_judge = [&victim](const ImageTensor& img, std::uint64_t s) {
    return predict(victim.params, victim.defense, img, s);
  };
  std::optional<Classifier> copy_model;
  if (transfer_source) copy_model.emplace(transfer_source->params);

  for (std::size_t a = 0; a < grid.size(); ++a) {
    const AttackSpec& spec = grid[a];
    const int steps = spec.kind == AttackKind::fgsm ? 1 : spec.config.steps;
    EvalRow row{p_range, method, spec.label(), to_string(spec.source), steps,
                spec.config.epsilon, 0.0, 0};
    try {
      if (spec.source == AttackSource::transfer && !transfer_source) {
        throw Error(Errc::invalid_argument, "transfer attack requested without a source model");
      }
      const bool transfer = spec.source == AttackSource::transfer;
      const DefenseConfig& crafted_on = transfer ? transfer_source->defense : victim.defense;
      AttackTarget target{transfer ? *copy_model : victim_model, make_defense(crafted_on),
                          victim_judge};
      std::size_t survived = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        AttackSpec per_image = spec;
        per_image.config.seed = derive_seed(image_seed(seed, i), a + 1);
        if (!run_attack(per_image, target, data.images[i], data.labels[i]).success) ++survived;
      }
      row.evaluated = data.size();
      row.accuracy = static_cast<double>(survived) / static_cast<double>(data.size());
    } catch (const Error& e) {
      row.status = std::string("error: ") + e.what();
      row.accuracy = std::nan("");
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << "p_range,method,attack,source,steps,epsilon,accuracy,evaluated,status\n";
  for (const auto& r : report.rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << r.p_range << ',' << r.method << ',' << r.attack << ',' << r.source << ',' << r.steps
       << ',' << format_real(r.epsilon) << ',' << format_real(r.accuracy) << ',' << r.evaluated << ','
       << status << '\n';
  }
}

std::vector<SweepRow> tradeoff_sweep(const Dataset& train_data, const Dataset& test_data,
                                     std::span<const std::pair<double, double>> p_ranges,
                                     const TrainPlan& base, const AttackSpec& attack,
                                     std::uint64_t seed) {
  if (p_ranges.empty()) throw Error(Errc::invalid_argument, "tradeoff_sweep: no p-ranges given");
  std::vector<SweepRow> rows;
  for (const auto& [lo, hi] : p_ranges) {
    SweepRow row{lo, hi};
    try {
      TrainPlan plan = base;
      plan.defense.enabled = true;
      plan.defense.schedule = make_schedule(lo, hi, base.defense.schedule.size());
      plan.seed = seed;
      const TrainResult trained = train(plan, train_data);
      const AttackSpec grid[] = {attack};
      const EvalReport report =
          evaluate({trained.params, plan.defense}, test_data, grid, seed);
      row.clean_accuracy = report.clean_accuracy;
      row.robust_accuracy = report.rows.back().accuracy;
      row.status = report.rows.back().status;
    } catch (const Error& e) {
      row.status = std::string("error: ") + e.what();
      row.clean_accuracy = row.robust_accuracy = std::nan("");
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "p_lo,p_hi,clean_accuracy,robust_accuracy,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << format_real(r.p_lo) << ',' << format_real(r.p_hi) << ',' << format_real(r.clean_accuracy) << ','
       << format_real(r.robust_accuracy) << ',' << status << '\n';
  }
}

}  // namespace menet
