#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/pipeline.hpp"

namespace hypox::synth {

/// Synthetic ICU-like vitals: per-admission baselines, slow sinusoids,
/// Gaussian noise, injected desaturation episodes, irregular charting,
/// missing cells, occasional duplicate charttimes, implausible values and
/// long gaps.
struct SynthConfig {
  std::size_t patients = 40;
  int max_admissions = 2;              // per patient, at least 1
  int min_duration_minutes = 240;
  int max_duration_minutes = 480;
  int min_step_minutes = 3;
  int max_step_minutes = 20;
  double missing_fraction = 0.075;     // per vital cell
  double copd_fraction = 0.2;
  double pediatric_fraction = 0.1;
  double episodes_per_hour = 0.5;
  double long_gap_probability = 0.05;  // per admission
  double duplicate_probability = 0.02; // per charted row
  double implausible_probability = 0.002;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j, SynthConfig base);
};

std::vector<pipeline::RawRecord> generate(const SynthConfig& config, std::uint64_t seed);

/// Writes the raw input schema.
void write_raw_csv(const std::string& path, const std::vector<pipeline::RawRecord>& records,
                   const std::string& provenance);

}  // namespace hypox::synth
