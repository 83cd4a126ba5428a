#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace szad {

struct GbtConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 4;
  double learning_rate = 0.1;
  double min_child_weight = 1e-3;
  double split_l2 = 1e-6;

  void validate() const;
};

/// Rows of x with binary labels and positive weights.
struct WeightedDataset {
  Eigen::MatrixXd x;
  std::vector<std::uint8_t> y;
  std::vector<double> w;

  std::size_t rows() const { return y.size(); }
  void validate() const;
};

/// Internal nodes send x[feature] <= threshold to the left child.
struct TreeNode {
  std::int32_t feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // leaf value before shrinkage

  bool is_leaf() const { return feature < 0; }
};

/// Nodes in preorder; nodes[0] is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  std::size_t depth() const;
};

struct GbtModel {
  GbtConfig config;
  std::size_t n_features = 0;
  double base_score = 0.0;  // log-odds of the weighted prevalence
  std::vector<Tree> trees;
};

struct SplitResult {
  bool valid = false;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Best threshold on one column by the second-order gain; midpoints between
/// consecutive distinct values, ties to the smaller threshold.
SplitResult best_split(std::span<const double> g, std::span<const double> h, std::span<const double> values,
                       double split_l2);

/// Exact greedy, level-wise boosting with weighted logistic loss. When
/// `loss_trace` is given it receives the weighted mean log-loss before the
/// first tree and after every tree.
GbtModel fit_gbt(const WeightedDataset& data, const GbtConfig& cfg, std::vector<double>* loss_trace = nullptr);

/// base_score + learning_rate * sum of the first `n_trees` trees (all by default).
Eigen::VectorXd gbt_raw_scores(const GbtModel& model, const Eigen::MatrixXd& x,
                               std::size_t n_trees = static_cast<std::size_t>(-1));

Eigen::VectorXd gbt_predict(const GbtModel& model, const Eigen::MatrixXd& x);

/// sum w * logloss / sum w
double weighted_log_loss(std::span<const double> raw_scores, std::span<const std::uint8_t> y,
                         std::span<const double> w);

bool operator==(const TreeNode& a, const TreeNode& b);
bool operator==(const GbtModel& a, const GbtModel& b);

}  // namespace szad
