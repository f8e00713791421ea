#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/dataset.hpp"
#include "hypox/gbdt.hpp"
#include "hypox/impute.hpp"
#include "hypox/pipeline.hpp"
#include "hypox/synth.hpp"

namespace hypox::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kPartialFailure = 3, kStageFailure = 4 };

/// Everything a run depends on. Unknown keys in the JSON form are rejected.
struct RunConfig {
  std::uint64_t seed = 42;
  int jobs = 1;
  std::string input;  // raw CSV for `run`; empty means synthesize
  std::string output_dir = "hypox_out";
  std::optional<std::string> tag_csv;
  std::optional<std::string> threshold_csv;
  synth::SynthConfig synth;
  pipeline::FilterConfig filter;
  impute::ImputeConfig impute;
  dataset::DatasetConfig dataset;
  gbdt::GbdtConfig gbdt = gbdt::GbdtConfig::classifier();
  bool class_weights = true;
  std::size_t top_features = 10;
  std::vector<std::string> analysis_features = {"resp_rate", "spo2",   "heart_rate", "sbp", "dbp", "temperature",
                                                "age",       "weight", "height",     "bmi", "map"};

  /// Applies `seed` to every seeded component.
  void propagate_seed();
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);

  /// FNV-1a over the canonical JSON of every setting that can change an
  /// artifact (paths and job count excluded).
  [[nodiscard]] std::string hash() const;
  [[nodiscard]] std::string provenance() const;
  [[nodiscard]] nlohmann::json provenance_json() const;
};

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypox::cli
