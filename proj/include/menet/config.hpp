#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "menet/dataset.hpp"
#include "menet/pipeline.hpp"
#include "menet/rank_analysis.hpp"

namespace menet {

/// Either an IDX pair (optionally a contiguous slice of it) or a synthetic
/// generator spec.
struct DataSource {
  bool synthetic = false;
  std::string images;
  std::string labels;
  std::size_t offset = 0;
  std::size_t limit = 0;  // 0 keeps everything after offset
  SyntheticSpec spec;
  std::uint64_t synthetic_seed = 0;

  friend bool operator==(const DataSource&, const DataSource&) = default;
};

struct ScheduleSpec {
  double a = 0.8;
  double b = 1.0;
  std::size_t n = 10;
  bool inclusive = false;

  MaskSchedule build() const;
  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  DataSource train_data;
  DataSource test_data;

  std::string checkpoint = "model.ckpt";           // relative to output_dir
  std::string transfer_checkpoint;                 // empty: no copy model
  bool transfer_defended = false;                  // whether the copy model is trained with the defense

  TrainPlan plan;          // plan.defense.schedule is rebuilt from `schedule`
  ScheduleSpec schedule;
  std::vector<AttackSpec> attacks;

  std::vector<std::pair<double, double>> sweep_ranges;

  double rank_energy_fraction = 0.9;
  EnergyMode rank_energy = EnergyMode::squared;

  double reconstruct_p = 0.5;

  /// Defense with the schedule materialized.
  DefenseConfig defense() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates a JSON document. Every problem found (unknown keys,
/// wrong types, out-of-range values) is collected; if any exist a single
/// Error{config_error} lists them one per line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full JSON document (every key written) that parse_config accepts.
std::string serialize_config(const ExperimentConfig& cfg);

/// Checks cross-field constraints on an already-typed config; throws
/// Error{config_error} listing every violation.
void validate_config(const ExperimentConfig& cfg);

Dataset load_source(const DataSource& src);

}  // namespace menet
