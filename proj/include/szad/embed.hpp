#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace szad {

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 500;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 100;
  std::size_t momentum_switch = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t max_points = 2000;
  std::uint64_t seed = 0;

  /// Throws kConfig when the settings cannot be used for n points.
  void validate(std::size_t n) const;
};

struct Embedding2D {
  Eigen::MatrixXd coords;  // n x 2
  std::vector<std::string> subject;
  std::vector<int> label;
  std::vector<std::size_t> source_rows;   // input row of each point
  std::vector<double> kl_trace;           // KL(P||Q) per iteration, unexaggerated P
  std::vector<std::size_t> flagged_rows;  // bandwidth search missed the tolerance
  TsneConfig config;

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
};

/// Row-conditional Gaussian affinities p(j|i) matching the perplexity.
/// Rows whose entropy misses log2(perplexity) by 1e-5 bits after 50
/// bisection steps are appended to `flagged`.
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& x, double perplexity,
                                       std::vector<std::size_t>* flagged = nullptr);

/// (P + P^T) / (2n)
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& conditional);

/// Exact t-SNE. Rows are processed in a content-sorted order and each point's
/// initial position is drawn from a generator keyed by its content, so the
/// result does not depend on input row order.
Embedding2D tsne(const Eigen::MatrixXd& x, std::span<const std::string> subjects, std::span<const int> labels,
                 const TsneConfig& cfg);

/// Rows kept after capping at `cap` with proportional quotas per
/// (subject, label) group, ascending.
std::vector<std::size_t> stratified_subsample(std::span<const std::string> subjects, std::span<const int> labels,
                                              std::size_t cap, std::uint64_t seed);

/// Mean silhouette coefficient of the 2-D points under the given clusters.
double silhouette(const Eigen::MatrixXd& points, std::span<const int> clusters);

/// SVG scatter (colour = subject, marker = class) with a legend and a
/// settings caption, plus `<stem>.csv` with `x,y,subject,label`.
void export_scatter(const Embedding2D& emb, const std::filesystem::path& svg_path);

/// Reads the CSV sidecar back.
Embedding2D read_scatter_csv(const std::filesystem::path& csv_path);

}  // namespace szad
