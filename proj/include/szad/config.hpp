#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "szad/adaptation.hpp"
#include "szad/embed.hpp"
#include "szad/eval.hpp"
#include "szad/gbtree.hpp"
#include "szad/signal.hpp"

namespace szad {

/// Every pipeline setting. `seed` feeds every stochastic stage.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  CohortConfig cohort;
  double window_seconds = 1.0;
  AdaptationConfig adaptation;
  GbtConfig gbt;
  TsneConfig tsne;

  std::vector<std::size_t> ns{0, 1, 2, 3};
  std::vector<Scheme> schemes{Scheme::kSubjectSpecific, Scheme::kCrossSubject};
  std::vector<std::string> targets;
  std::size_t trials = 5;
  double source_weight = 0.01;
  double target_weight = 1.0;

  std::string data_dir = "data";
  std::string features_dir = "features";
  std::string model_path = "adapt.szad";
  std::string report_dir = "report";

  /// Throws kConfig on the first inconsistent field.
  void validate() const;

  /// Stage configs with the run seed applied.
  CohortConfig cohort_config() const;
  AdaptationConfig adaptation_config() const;
  TsneConfig tsne_config() const;
  ExperimentConfig experiment_config() const;

  /// Fully resolved `section.key = value` pairs in file order.
  std::vector<std::pair<std::string, std::string>> describe() const;
};

/// Sets `section.key` from its text form. Throws kConfig for unknown keys or
/// unparsable values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines grouped under `[section]` headers; `#` starts a
/// comment. Keys before any header belong to `run`.
void apply_config(RunConfig& cfg, std::istream& in, const std::string& source = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Same layout as the input format.
void write_config(const RunConfig& cfg, std::ostream& out);

}  // namespace szad
