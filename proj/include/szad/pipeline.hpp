#pragma once

#include <filesystem>
#include <vector>

#include "szad/error.hpp"
#include "szad/features.hpp"
#include "szad/signal.hpp"

namespace szad {

/// Process exit status for an error: 1 usage/config, 2 data, 3 numeric.
int exit_code(ErrorKind kind);

/// `*.csv` files in a directory, sorted by name. Throws kIo if missing.
std::vector<std::filesystem::path> list_csv(const std::filesystem::path& dir);

/// One `<subject_id>.csv` per recording; creates the directory.
void write_recordings(const std::vector<Recording>& recordings, const std::filesystem::path& dir);
std::vector<Recording> read_recordings(const std::filesystem::path& dir);

/// Segments each recording and extracts one feature row per window.
std::vector<FeatureMatrix> extract_cohort_features(const std::vector<Recording>& recordings, double window_seconds);

void write_feature_dir(const std::vector<FeatureMatrix>& cohort, const std::filesystem::path& dir);
std::vector<FeatureMatrix> read_feature_dir(const std::filesystem::path& dir);

}  // namespace szad
