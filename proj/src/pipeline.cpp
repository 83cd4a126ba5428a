#include "szad/pipeline.hpp"

#include <algorithm>

namespace szad {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUsage:
    case ErrorKind::kScheme:
      return 1;
    case ErrorKind::kNumeric:
      return 3;
    default:
      return 2;
  }
}

std::vector<std::filesystem::path> list_csv(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::kData, "no .csv files in " + dir.string());
  return files;
}

void write_recordings(const std::vector<Recording>& recordings, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& rec : recordings) write_recording(rec, dir / (rec.subject_id + ".csv"));
}

std::vector<Recording> read_recordings(const std::filesystem::path& dir) {
  std::vector<Recording> out;
  for (const auto& path : list_csv(dir)) out.push_back(read_recording(path));
  return out;
}

std::vector<FeatureMatrix> extract_cohort_features(const std::vector<Recording>& recordings, double window_seconds) {
  std::vector<FeatureMatrix> out;
  for (const auto& rec : recordings) {
    out.push_back(extract_feature_matrix(segment(rec, window_seconds), rec.sample_rate_hz));
  }
  return out;
}

void write_feature_dir(const std::vector<FeatureMatrix>& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& m : cohort) write_feature_matrix(m, dir / (m.subject_id + ".csv"));
}

std::vector<FeatureMatrix> read_feature_dir(const std::filesystem::path& dir) {
  std::vector<FeatureMatrix> out;
  for (const auto& path : list_csv(dir)) out.push_back(read_feature_matrix(path));
  return out;
}

}  // namespace szad
