#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace szad {

/// One subject's multichannel recording with per-sample seizure annotations.
struct Recording {
  std::string subject_id;
  double sample_rate_hz = 500.0;
  std::vector<std::vector<double>> channels;
  std::vector<std::uint8_t> labels;  // 1 = seizure

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return labels.size(); }

  /// Throws kConfig / kShape when the invariants do not hold.
  void validate() const;
};

/// A fixed-length segment of a recording.
struct Window {
  Eigen::MatrixXd samples;  // channels x d
  int label = 0;
  std::string subject_id;
  std::size_t index = 0;
};

struct CohortConfig {
  std::size_t n_subjects = 9;
  std::size_t channels = 2;
  double duration_s = 80.0;        // length of one block (seizure + following rest)
  double seizure_fraction = 0.25;  // leading share of each block that is seizure
  std::size_t blocks_per_subject = 4;
  double shift_strength = 1.0;
  double seizure_gain = 4.0;
  double sample_rate_hz = 500.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic cohort with per-subject gain, spectral tilt and offset drawn from
/// (seed, subject). Each block starts with a seizure carrying 60-200 Hz bursts
/// and is followed by background activity.
std::vector<Recording> generate_synthetic_cohort(const CohortConfig& cfg);

/// Number of samples per window for the given rate.
std::size_t window_size(double sample_rate_hz, double window_seconds);

/// Non-overlapping windows; the trailing partial window is dropped. A window is
/// labelled seizure when at least half of its samples are.
std::vector<Window> segment(const Recording& rec, double window_seconds);

/// Recording CSV: `subject,<id>,rate,<hz>,channels,<C>` then `c1,...,cC,label` rows.
void write_recording(const Recording& rec, std::ostream& out);
void write_recording(const Recording& rec, const std::filesystem::path& path);
Recording read_recording(std::istream& in);
Recording read_recording(const std::filesystem::path& path);

}  // namespace szad
