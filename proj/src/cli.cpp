#include "menet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "menet/config.hpp"
#include "menet/error.hpp"
#include "menet/rank_analysis.hpp"
#include "menet/rng.hpp"

namespace menet {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kCopyStream = 0x636f7079;  // "copy"

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> method;
  std::optional<double> p;
  std::optional<std::size_t> votes;
  std::optional<int> epochs;
  std::optional<std::size_t> test_limit;
};

std::string num(double v) { return format_real(v); }

class Command {
 public:
  Command(std::string name, ExperimentConfig cfg, std::ostream& out)
      : name_(std::move(name)), cfg_(std::move(cfg)), out_(out) {
    fs::create_directories(cfg_.output_dir);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  fs::path path(const std::string& file) const { return fs::path(cfg_.output_dir) / file; }

  // Every CSV starts with a comment line naming the command and root seed.
  std::ofstream csv(const std::string& file) const {
    std::ofstream os(path(file), std::ios::binary);
    if (!os) throw Error(Errc::io_error, "cannot write '" + path(file).string() + "'");
    os << "# menet " << name_ << " seed=" << cfg_.seed << '\n';
    return os;
  }

  void note(const std::string& line) const { out_ << line << '\n'; }

 private:
  std::string name_;
  ExperimentConfig cfg_;
  std::ostream& out_;
};

void cmd_rank(const Command& c) {
  const Dataset data = load_source(c.cfg().test_data);
  const RankReport report =
      rank_report(data.images, c.cfg().rank_energy_fraction, c.cfg().rank_energy);
  auto os = c.csv("rank_cdf.csv");
  write_rank_csv(os, report);
  c.note("rank-analysis: " + std::to_string(data.size()) + " images, cdf(5) = " +
         num(report.cdf_at(5)) + " -> " + c.path("rank_cdf.csv").string());
}

void cmd_reconstruct(const Command& c) {
  const Dataset data = load_source(c.cfg().test_data);
  const EstimatorConfig& est = c.cfg().plan.defense.estimator;
  const double p = c.cfg().reconstruct_p;
  auto os = c.csv("reconstruct.csv");
  os << "index,label,p,method,max_abs_diff,rel_error\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ImageTensor rec = reconstruct_image(data.images[i], p, image_seed(c.cfg().seed, i), est);
    const Vector diff = rec.flat() - data.images[i].flat();
    const double norm = data.images[i].flat().norm();
    const double max_abs = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;
    worst = std::max(worst, max_abs);
    os << i << ',' << data.labels[i] << ',' << num(p) << ',' << to_string(est.method) << ','
       << num(max_abs) << ',' << num(norm > 0 ? diff.norm() / norm : diff.norm()) << '\n';
  }
  c.note("reconstruct: " + std::to_string(data.size()) + " images at p = " + num(p) +
         ", max |x - x_hat| = " + num(worst));
}

void cmd_train(const Command& c) {
  const ExperimentConfig& cfg = c.cfg();
  const Dataset data = load_source(cfg.train_data);
  const TrainResult result = train(cfg.plan, data);
  save_checkpoint(result.params, c.path(cfg.checkpoint));
  auto os = c.csv("train_log.csv");
  os << "epoch,loss,accuracy,lr\n";
  for (const auto& e : result.log)
    os << e.epoch << ',' << num(e.loss) << ',' << num(e.accuracy) << ',' << num(e.lr) << '\n';
  c.note("train: " + std::to_string(result.log.size()) + " epochs -> " +
         c.path(cfg.checkpoint).string());

  if (!cfg.transfer_checkpoint.empty()) {
    TrainPlan copy = cfg.plan;
    copy.seed = derive_seed(cfg.seed, kCopyStream);
    copy.defense.enabled = cfg.transfer_defended;
    save_checkpoint(train(copy, data).params, c.path(cfg.transfer_checkpoint));
    c.note("train: copy model -> " + c.path(cfg.transfer_checkpoint).string());
  }
}

std::optional<EvalSubject> transfer_subject(const Command& c) {
  const ExperimentConfig& cfg = c.cfg();
  if (cfg.transfer_checkpoint.empty()) return std::nullopt;
  DefenseConfig d = cfg.defense();
  d.enabled = cfg.transfer_defended;
  d.votes = 1;
  return EvalSubject{load_checkpoint(c.path(cfg.transfer_checkpoint)), d};
}

void cmd_attack(const Command& c) {
  const ExperimentConfig& cfg = c.cfg();
  const Dataset data = load_source(cfg.test_data);
  const EvalSubject victim{load_checkpoint(c.path(cfg.checkpoint)), cfg.defense()};
  const auto copy = transfer_subject(c);
  const Classifier victim_model(victim.params);
  std::optional<Classifier> copy_model;
  if (copy) copy_model.emplace(copy->params);
  const Judge judge = [&](const ImageTensor& img, std::uint64_t s) {
    return predict(victim.params, victim.defense, img, s);
  };

  auto os = c.csv("attack.csv");
  os << "index,label,attack,source,success,final_loss,queries,linf\n";
  for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
    const AttackSpec& spec = cfg.attacks[a];
    const bool transfer = spec.source == AttackSource::transfer;
    if (transfer && !copy) {
      throw Error(Errc::config_error,
                  "attacks[" + std::to_string(a) + "]: transfer needs model.transfer_checkpoint");
    }
    AttackTarget target{transfer ? *copy_model : victim_model,
                        make_defense(transfer ? copy->defense : victim.defense), judge};
    std::size_t fooled = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      AttackSpec per_image = spec;
      per_image.config.seed = derive_seed(image_seed(cfg.seed, i), a + 1);
      const AttackResult r = run_attack(per_image, target, data.images[i], data.labels[i]);
      const double linf = (r.adversarial.flat() - data.images[i].flat()).cwiseAbs().maxCoeff();
      fooled += r.success ? 1 : 0;
      os << i << ',' << data.labels[i] << ',' << spec.label() << ',' << to_string(spec.source)
         << ',' << (r.success ? 1 : 0) << ',' << num(r.final_loss) << ',' << r.queries << ','
         << num(linf) << '\n';
    }
    c.note("attack " + spec.label() + ": fooled " + std::to_string(fooled) + "/" +
           std::to_string(data.size()));
  }
}

void cmd_eval(const Command& c) {
  const ExperimentConfig& cfg = c.cfg();
  const Dataset data = load_source(cfg.test_data);
  const EvalSubject victim{load_checkpoint(c.path(cfg.checkpoint)), cfg.defense()};
  const EvalReport report = evaluate(victim, data, cfg.attacks, cfg.seed, transfer_subject(c));
  auto os = c.csv("eval.csv");
  write_eval_csv(os, report);
  for (const auto& row : report.rows)
    c.note("eval " + row.attack + " (" + row.source + "): " + num(row.accuracy) + " [" +
           row.status + "]");
}

void cmd_sweep(const Command& c) {
  const ExperimentConfig& cfg = c.cfg();
  if (cfg.sweep_ranges.empty()) throw Error(Errc::config_error, "sweep.ranges: required for sweep");
  if (cfg.attacks.empty()) throw Error(Errc::config_error, "attacks: sweep uses attacks[0]");
  const Dataset train_data = load_source(cfg.train_data);
  const Dataset test_data = load_source(cfg.test_data);
  TrainPlan plan = cfg.plan;
  plan.defense = cfg.defense();
  const auto rows =
      tradeoff_sweep(train_data, test_data, cfg.sweep_ranges, plan, cfg.attacks.front(), cfg.seed);
  auto os = c.csv("sweep.csv");
  write_sweep_csv(os, rows);
  for (const auto& r : rows)
    c.note("sweep " + num(r.p_lo) + "->" + num(r.p_hi) + ": clean " + num(r.clean_accuracy) +
           ", robust " + num(r.robust_accuracy) + " [" + r.status + "]");
}

ExperimentConfig configure(const std::string& path, const Overrides& o) {
  ExperimentConfig cfg = load_config(path);
  if (o.seed) cfg.seed = cfg.plan.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.method) {
    try {
      cfg.plan.defense.estimator.method = parse_estimator_method(*o.method);
    } catch (const Error& e) {
      throw Error(Errc::config_error, std::string("--method: ") + e.what());
    }
  }
  if (o.p) cfg.reconstruct_p = *o.p;
  if (o.votes) cfg.plan.defense.votes = *o.votes;
  if (o.epochs) cfg.plan.epochs = *o.epochs;
  if (o.test_limit) cfg.test_data.limit = *o.test_limit;
  validate_config(cfg);
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"menet: matrix-estimation preprocessing against adversarial examples", "menet"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  Overrides o;
  app.add_option("-c,--config", config_path, "JSON experiment config")->required();
  app.add_option("--seed", o.seed, "Root seed");
  app.add_option("--output-dir", o.output_dir, "Output directory");
  app.add_option("--method", o.method, "Estimator: usvt, soft_impute or nuclear_norm");
  app.add_option("--votes", o.votes, "Majority-vote rounds at inference");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--test-limit", o.test_limit, "Use at most this many test images");

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const Command&);
  };
  const std::vector<Sub> subs = {
      {"rank-analysis", "Approximate-rank histogram and CDF of the test images", cmd_rank},
      {"reconstruct", "Mask and reconstruct the test images", cmd_reconstruct},
      {"train", "Train a classifier and save a checkpoint", cmd_train},
      {"attack", "Per-image attack results for every configured attack", cmd_attack},
      {"eval", "Clean and per-attack accuracy", cmd_eval},
      {"sweep", "Clean/robust accuracy across p-ranges", cmd_sweep},
  };
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "reconstruct") sc->add_option("--p", o.p, "Observation probability");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : static_cast<int>(ErrorCategory::usage);
  }

  try {
    for (const auto& s : subs) {
      if (!app.got_subcommand(s.name)) continue;
      const Command command(s.name, configure(config_path, o), out);
      s.run(command);
    }
    return 0;
  } catch (const Error& e) {
    err << "menet: " << to_string(e.code()) << ": " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "menet: i/o error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::data);
  } catch (const std::exception& e) {
    err << "menet: internal failure: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::numerical);
  }
}

}  // namespace menet
