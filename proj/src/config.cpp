#include "menet/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "menet/error.hpp"

namespace menet {
namespace {

using json = nlohmann::json;

// Collects every schema violation instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    errors.push_back(path + ": expected an object");
    return false;
  }

  void keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j.items())
      if (!ok.count(k)) errors.push_back(path + "." + k + ": unknown key");
  }

  void get(const json& j, const std::string& path, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_boolean()) out = v.get<bool>();
    else errors.push_back(path + "." + key + ": expected a boolean");
  }

  void get(const json& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number()) out = v.get<double>();
    else errors.push_back(path + "." + key + ": expected a number");
  }

  void get(const json& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_string()) out = v.get<std::string>();
    else errors.push_back(path + "." + key + ": expected a string");
  }

  template <class Int>
    requires std::is_integral_v<Int>
  void get(const json& j, const std::string& path, const char* key, Int& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      out = v.get<Int>();
    } else if (v.is_number_integer() && std::is_signed_v<Int>) {
      out = v.get<Int>();
    } else {
      errors.push_back(path + "." + key + ": expected a non-negative integer");
    }
  }

  template <class T, class Parse>
  void get_enum(const json& j, const std::string& path, const char* key, T& out, Parse parse) {
    std::string name;
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) {
      errors.push_back(path + "." + key + ": expected a string");
      return;
    }
    try {
      out = parse(j.at(key).get<std::string>());
    } catch (const Error& e) {
      errors.push_back(path + "." + key + ": " + e.what());
    }
  }

  template <class Int>
  void get_list(const json& j, const std::string& path, const char* key, std::vector<Int>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array()) {
      errors.push_back(path + "." + key + ": expected an array of integers");
      return;
    }
    std::vector<Int> tmp;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
        errors.push_back(path + "." + key + ": expected an array of non-negative integers");
        return;
      }
      tmp.push_back(e.get<Int>());
    }
    out = std::move(tmp);
  }

  void check(bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  }
};

void read_source(Reader& r, const json& j, const std::string& path, DataSource& out) {
  if (!r.object(j, path)) return;
  r.keys(j, path, {"images", "labels", "offset", "limit", "synthetic"});
  if (j.contains("synthetic")) {
    out.synthetic = true;
    const auto& s = j.at("synthetic");
    const std::string sp = path + ".synthetic";
    if (!r.object(s, sp)) return;
    r.keys(s, sp, {"count", "height", "width", "channels", "rank", "noise_sigma", "classes", "seed"});
    r.get(s, sp, "count", out.spec.count);
    r.get(s, sp, "height", out.spec.height);
    r.get(s, sp, "width", out.spec.width);
    r.get(s, sp, "channels", out.spec.channels);
    r.get(s, sp, "rank", out.spec.rank);
    r.get(s, sp, "noise_sigma", out.spec.noise_sigma);
    r.get(s, sp, "classes", out.spec.classes);
    r.get(s, sp, "seed", out.synthetic_seed);
    r.check(!j.contains("images") && !j.contains("labels"),
            path + ": give either images/labels or synthetic, not both");
  } else {
    out.synthetic = false;
    r.get(j, path, "images", out.images);
    r.get(j, path, "labels", out.labels);
    r.check(j.contains("images") && j.contains("labels"),
            path + ": images and labels paths are both required");
  }
  r.get(j, path, "offset", out.offset);
  r.get(j, path, "limit", out.limit);
}

json write_source(const DataSource& s) {
  json j;
  if (s.synthetic) {
    j["synthetic"] = {{"count", s.spec.count},       {"height", s.spec.height},
                      {"width", s.spec.width},       {"channels", s.spec.channels},
                      {"rank", s.spec.rank},         {"noise_sigma", s.spec.noise_sigma},
                      {"classes", s.spec.classes},   {"seed", s.synthetic_seed}};
  } else {
    j["images"] = s.images;
    j["labels"] = s.labels;
  }
  j["offset"] = s.offset;
  j["limit"] = s.limit;
  return j;
}

void read_attack(Reader& r, const json& j, const std::string& path, AttackSpec& a) {
  if (!r.object(j, path)) return;
  r.keys(j, path,
         {"kind", "source", "epsilon", "step_size", "steps", "restarts", "random_start", "backward",
          "projection_rank_k", "projection_recompute", "spsa_batch", "spsa_delta", "spsa_lr"});
  r.get_enum(j, path, "kind", a.kind, parse_attack_kind);
  r.get_enum(j, path, "source", a.source, parse_attack_source);
  r.get_enum(j, path, "backward", a.config.backward_mode, parse_backward_mode);
  r.get(j, path, "epsilon", a.config.epsilon);
  r.get(j, path, "step_size", a.config.step_size);
  r.get(j, path, "steps", a.config.steps);
  r.get(j, path, "restarts", a.config.restarts);
  r.get(j, path, "random_start", a.config.random_start);
  r.get(j, path, "projection_rank_k", a.config.projection_rank_k);
  r.get(j, path, "projection_recompute", a.config.projection_recompute);
  r.get(j, path, "spsa_batch", a.config.spsa_batch);
  r.get(j, path, "spsa_delta", a.config.spsa_delta);
  r.get(j, path, "spsa_lr", a.config.spsa_lr);
}

json write_attack(const AttackSpec& a) {
  const AttackConfig& c = a.config;
  return {{"kind", to_string(a.kind)},
          {"source", to_string(a.source)},
          {"epsilon", c.epsilon},
          {"step_size", c.step_size},
          {"steps", c.steps},
          {"restarts", c.restarts},
          {"random_start", c.random_start},
          {"backward", to_string(c.backward_mode)},
          {"projection_rank_k", c.projection_rank_k},
          {"projection_recompute", c.projection_recompute},
          {"spsa_batch", c.spsa_batch},
          {"spsa_delta", c.spsa_delta},
          {"spsa_lr", c.spsa_lr}};
}

void collect(std::vector<std::string>& errors, const std::string& path,
             const std::function<void()>& check) {
  try {
    check();
  } catch (const Error& e) {
    errors.push_back(path + ": " + e.what());
  }
}

std::vector<std::string> semantic_errors(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  for (const auto* src : {&cfg.train_data, &cfg.test_data}) {
    const std::string path = src == &cfg.train_data ? "data.train" : "data.test";
    if (src->synthetic) collect(errors, path + ".synthetic", [&] { src->spec.validate(); });
  }
  collect(errors, "defense.schedule", [&] { (void)cfg.schedule.build(); });
  if (cfg.schedule.n == 0) errors.push_back("defense.schedule.n: must be >= 1");
  collect(errors, "train", [&] { cfg.plan.validate(); });
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i)
    collect(errors, "attacks[" + std::to_string(i) + "]", [&] { cfg.attacks[i].config.validate(); });
  for (std::size_t i = 0; i < cfg.sweep_ranges.size(); ++i) {
    const auto [lo, hi] = cfg.sweep_ranges[i];
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0))
      errors.push_back("sweep.ranges[" + std::to_string(i) + "]: need 0 < lo <= hi <= 1");
  }
  if (!(cfg.rank_energy_fraction > 0.0 && cfg.rank_energy_fraction <= 1.0))
    errors.push_back("rank.energy_fraction: must lie in (0, 1]");
  if (!(cfg.reconstruct_p > 0.0 && cfg.reconstruct_p <= 1.0))
    errors.push_back("reconstruct.p: must lie in (0, 1]");
  if (cfg.output_dir.empty()) errors.push_back("output_dir: must not be empty");
  if (cfg.checkpoint.empty()) errors.push_back("model.checkpoint: must not be empty");
  return errors;
}

[[noreturn]] void fail(const std::vector<std::string>& errors) {
  std::string msg = std::to_string(errors.size()) + " configuration problem(s):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(Errc::config_error, msg);
}

}  // namespace

MaskSchedule ScheduleSpec::build() const {
  return make_schedule(a, b, n, inclusive ? ScheduleEndpoint::inclusive : ScheduleEndpoint::exclusive);
}

DefenseConfig ExperimentConfig::defense() const {
  DefenseConfig d = plan.defense;
  d.schedule = schedule.build();
  return d;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_error, std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  Reader r;
  if (!r.object(root, "$")) fail(r.errors);
  r.keys(root, "$",
         {"seed", "output_dir", "data", "model", "train", "defense", "estimator", "attacks", "sweep",
          "rank", "reconstruct"});
  r.get(root, "$", "seed", cfg.seed);
  r.get(root, "$", "output_dir", cfg.output_dir);

  if (root.contains("data") && r.object(root["data"], "data")) {
    const auto& d = root["data"];
    r.keys(d, "data", {"train", "test"});
    if (d.contains("train")) read_source(r, d["train"], "data.train", cfg.train_data);
    if (d.contains("test")) read_source(r, d["test"], "data.test", cfg.test_data);
  }
  r.check(root.contains("data") && root["data"].is_object() && root["data"].contains("test"),
          "data.test: required");

  if (root.contains("model") && r.object(root["model"], "model")) {
    const auto& m = root["model"];
    r.keys(m, "model", {"hidden", "checkpoint", "transfer_checkpoint", "transfer_defended"});
    r.get_list(m, "model", "hidden", cfg.plan.hidden);
    r.get(m, "model", "checkpoint", cfg.checkpoint);
    r.get(m, "model", "transfer_checkpoint", cfg.transfer_checkpoint);
    r.get(m, "model", "transfer_defended", cfg.transfer_defended);
  }

  if (root.contains("train") && r.object(root["train"], "train")) {
    const auto& t = root["train"];
    TrainPlan& p = cfg.plan;
    r.keys(t, "train",
           {"epochs", "batch_size", "lr", "momentum", "lr_decay_epochs", "lr_decay", "adversarial",
            "adv_steps", "adv_epsilon", "adv_step_size", "adv_through_defense",
            "resample_per_epoch"});
    r.get(t, "train", "epochs", p.epochs);
    r.get(t, "train", "batch_size", p.batch_size);
    r.get(t, "train", "lr", p.lr);
    r.get(t, "train", "momentum", p.momentum);
    r.get_list(t, "train", "lr_decay_epochs", p.lr_decay_epochs);
    r.get(t, "train", "lr_decay", p.lr_decay);
    r.get(t, "train", "adversarial", p.adversarial);
    r.get(t, "train", "adv_steps", p.adv_steps);
    r.get(t, "train", "adv_epsilon", p.adv_epsilon);
    r.get(t, "train", "adv_step_size", p.adv_step_size);
    r.get(t, "train", "adv_through_defense", p.adv_through_defense);
    r.get(t, "train", "resample_per_epoch", p.resample_per_epoch);
  }

  if (root.contains("defense") && r.object(root["defense"], "defense")) {
    const auto& d = root["defense"];
    r.keys(d, "defense", {"enabled", "schedule", "votes"});
    r.get(d, "defense", "enabled", cfg.plan.defense.enabled);
    r.get(d, "defense", "votes", cfg.plan.defense.votes);
    if (d.contains("schedule") && r.object(d["schedule"], "defense.schedule")) {
      const auto& s = d["schedule"];
      r.keys(s, "defense.schedule", {"a", "b", "n", "inclusive"});
      r.get(s, "defense.schedule", "a", cfg.schedule.a);
      r.get(s, "defense.schedule", "b", cfg.schedule.b);
      r.get(s, "defense.schedule", "n", cfg.schedule.n);
      r.get(s, "defense.schedule", "inclusive", cfg.schedule.inclusive);
    }
  }

  if (root.contains("estimator") && r.object(root["estimator"], "estimator")) {
    const auto& e = root["estimator"];
    EstimatorConfig& c = cfg.plan.defense.estimator;
    r.keys(e, "estimator",
           {"method", "usvt_eta", "si_lambda", "max_iters", "tol", "nn_lambda_min", "nn_anneal",
            "clip_lo", "clip_hi"});
    r.get_enum(e, "estimator", "method", c.method, parse_estimator_method);
    r.get(e, "estimator", "usvt_eta", c.usvt_eta);
    r.get(e, "estimator", "si_lambda", c.si_lambda);
    r.get(e, "estimator", "max_iters", c.max_iters);
    r.get(e, "estimator", "tol", c.tol);
    r.get(e, "estimator", "nn_lambda_min", c.nn_lambda_min);
    r.get(e, "estimator", "nn_anneal", c.nn_anneal);
    r.get(e, "estimator", "clip_lo", c.clip_lo);
    r.get(e, "estimator", "clip_hi", c.clip_hi);
  }

  if (root.contains("attacks")) {
    if (!root["attacks"].is_array()) {
      r.errors.push_back("attacks: expected an array");
    } else {
      for (std::size_t i = 0; i < root["attacks"].size(); ++i) {
        AttackSpec a;
        read_attack(r, root["attacks"][i], "attacks[" + std::to_string(i) + "]", a);
        cfg.attacks.push_back(a);
      }
    }
  }

  if (root.contains("sweep") && r.object(root["sweep"], "sweep")) {
    const auto& s = root["sweep"];
    r.keys(s, "sweep", {"ranges"});
    if (s.contains("ranges")) {
      bool ok = s["ranges"].is_array();
      if (ok) {
        for (const auto& pr : s["ranges"]) {
          if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number() || !pr[1].is_number()) {
            ok = false;
            break;
          }
          cfg.sweep_ranges.emplace_back(pr[0].get<double>(), pr[1].get<double>());
        }
      }
      if (!ok) r.errors.push_back("sweep.ranges: expected an array of [lo, hi] number pairs");
    }
  }

  if (root.contains("rank") && r.object(root["rank"], "rank")) {
    const auto& k = root["rank"];
    r.keys(k, "rank", {"energy_fraction", "energy"});
    r.get(k, "rank", "energy_fraction", cfg.rank_energy_fraction);
    r.get_enum(k, "rank", "energy", cfg.rank_energy, [](const std::string& s) {
      if (s == "squared") return EnergyMode::squared;
      if (s == "linear") return EnergyMode::linear;
      throw Error(Errc::config_error, "unknown energy mode '" + s + "'");
    });
  }

  if (root.contains("reconstruct") && r.object(root["reconstruct"], "reconstruct")) {
    const auto& k = root["reconstruct"];
    r.keys(k, "reconstruct", {"p"});
    r.get(k, "reconstruct", "p", cfg.reconstruct_p);
  }

  // Fields with type errors keep their defaults, so range checks still apply.
  auto more = semantic_errors(cfg);
  r.errors.insert(r.errors.end(), more.begin(), more.end());
  if (!r.errors.empty()) fail(r.errors);
  cfg.plan.defense.schedule = cfg.schedule.build();
  cfg.plan.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
  const auto errors = semantic_errors(cfg);
  if (!errors.empty()) fail(errors);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  const TrainPlan& p = cfg.plan;
  const EstimatorConfig& e = p.defense.estimator;
  json root;
  root["seed"] = cfg.seed;
  root["output_dir"] = cfg.output_dir;
  root["data"] = {{"train", write_source(cfg.train_data)}, {"test", write_source(cfg.test_data)}};
  root["model"] = {{"hidden", p.hidden},
                   {"checkpoint", cfg.checkpoint},
                   {"transfer_checkpoint", cfg.transfer_checkpoint},
                   {"transfer_defended", cfg.transfer_defended}};
  root["train"] = {{"epochs", p.epochs},
                   {"batch_size", p.batch_size},
                   {"lr", p.lr},
                   {"momentum", p.momentum},
                   {"lr_decay_epochs", p.lr_decay_epochs},
                   {"lr_decay", p.lr_decay},
                   {"adversarial", p.adversarial},
                   {"adv_steps", p.adv_steps},
                   {"adv_epsilon", p.adv_epsilon},
                   {"adv_step_size", p.adv_step_size},
                   {"adv_through_defense", p.adv_through_defense},
                   {"resample_per_epoch", p.resample_per_epoch}};
  root["defense"] = {{"enabled", p.defense.enabled},
                     {"votes", p.defense.votes},
                     {"schedule",
                      {{"a", cfg.schedule.a},
                       {"b", cfg.schedule.b},
                       {"n", cfg.schedule.n},
                       {"inclusive", cfg.schedule.inclusive}}}};
  root["estimator"] = {{"method", to_string(e.method)}, {"usvt_eta", e.usvt_eta},
                       {"si_lambda", e.si_lambda},      {"max_iters", e.max_iters},
                       {"tol", e.tol},                  {"nn_lambda_min", e.nn_lambda_min},
                       {"nn_anneal", e.nn_anneal},      {"clip_lo", e.clip_lo},
                       {"clip_hi", e.clip_hi}};
  root["attacks"] = json::array();
  for (const auto& a : cfg.attacks) root["attacks"].push_back(write_attack(a));
  json ranges = json::array();
  for (const auto& [lo, hi] : cfg.sweep_ranges) ranges.push_back({lo, hi});
  root["sweep"] = {{"ranges", ranges}};
  root["rank"] = {{"energy_fraction", cfg.rank_energy_fraction},
                  {"energy", cfg.rank_energy == EnergyMode::squared ? "squared" : "linear"}};
  root["reconstruct"] = {{"p", cfg.reconstruct_p}};
  return root.dump(2) + "\n";
}

Dataset load_source(const DataSource& src) {
  Dataset full = src.synthetic ? gen_synthetic(src.spec, src.synthetic_seed)
                               : load_idx(src.images, src.labels);
  if (src.offset == 0 && src.limit == 0) return full;
  const std::size_t count = src.limit == 0 ? full.size() : src.limit;
  Dataset out = full.slice(src.offset, count);
  if (out.empty()) throw Error(Errc::empty_input, "data slice is empty");
  return out;
}

}  // namespace menet
