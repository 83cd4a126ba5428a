#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "szad/signal.hpp"

namespace szad {

/// Half-open frequency band [lo_hz, hi_hz).
struct Band {
  double lo_hz;
  double hi_hz;
};

inline constexpr std::size_t kFeaturesPerChannel = 11;

/// delta, theta, alpha, beta, low gamma, gamma, high gamma, ripple.
inline constexpr std::array<Band, 8> kBands = {{
    {1.0, 4.0}, {4.0, 8.0}, {8.0, 13.0}, {13.0, 30.0},
    {30.0, 50.0}, {50.0, 80.0}, {80.0, 150.0}, {150.0, 250.0},
}};

inline constexpr std::array<std::string_view, kFeaturesPerChannel> kFeatureNames = {
    "lln", "pow", "var", "delta", "theta", "alpha", "beta", "gamma1", "gamma2", "gamma3", "ripple"};

double line_length(std::span<const double> x);
double total_power(std::span<const double> x);
double variance(std::span<const double> x);

/// One-sided periodogram, bin k at k*fs/d for k = 0..d/2, scaled so that the
/// bins sum to total_power(x).
std::vector<double> periodogram(std::span<const double> x);

/// Periodogram energy over bins whose centre frequency lies in [lo, hi).
double band_power(std::span<const double> x, double fs, Band band);
double band_power(std::span<const double> spectrum, std::size_t d, double fs, Band band);

struct FeatureVector {
  Eigen::VectorXd values;  // channel-major, kFeatureNames order within a channel
  int label = 0;
  std::string subject_id;
};

FeatureVector extract_features(const Window& w, double fs);

/// Rows are windows in recording order; one subject per matrix.
struct FeatureMatrix {
  std::string subject_id;
  Eigen::MatrixXd values;
  std::vector<int> labels;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }

  /// Copy of the selected rows, in the given order.
  FeatureMatrix select(std::span<const std::size_t> rows) const;
};

FeatureMatrix extract_feature_matrix(const std::vector<Window>& windows, double fs);

/// Per-dimension z-scoring fitted on training rows.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  FeatureMatrix apply(const FeatureMatrix& m) const;
};

Normalizer fit_normalizer(std::span<const Eigen::MatrixXd> train);
Normalizer fit_normalizer(const Eigen::MatrixXd& train);

/// FeatureMatrix CSV: `subject,<id>,dim,<F>` then `f1,...,fF,label` rows.
void write_feature_matrix(const FeatureMatrix& m, std::ostream& out);
void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(std::istream& in);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace szad
