#include "szad/gbtree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "szad/error.hpp"

namespace szad {
namespace {

// Gains below this fraction of a node's sum of g^2/h are rounding noise, and
// candidates closer than this to the best gain count as ties.
constexpr double kRelativeGainFloor = 1e-9;

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double score(double g, double h, double l2) {
  const double d = h + l2;
  return d > 0.0 ? g * g / d : 0.0;
}

double leaf_value(double g, double h, double l2) {
  const double d = h + l2;
  return d > 0.0 ? -g / d : 0.0;
}

double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2.0;
  return m < hi ? m : lo;
}

// Incremental scan of one node along one sorted column.
struct Scan {
  double g_total = 0.0;
  double h_total = 0.0;
  double floor = 0.0;
  double g_left = 0.0;
  double h_left = 0.0;
  double prev = 0.0;
  bool has_prev = false;

  void reset(double g, double h, double gain_floor) {
    g_total = g;
    h_total = h;
    floor = gain_floor;
    g_left = h_left = 0.0;
    has_prev = false;
  }

  // Offers the boundary before `value` (if any), then absorbs the row.
  template <class OnCandidate>
  void push(double value, double g, double h, double l2, double min_child, OnCandidate&& on_candidate) {
    if (has_prev && value > prev) {
      const double g_right = g_total - g_left;
      const double h_right = h_total - h_left;
      if (h_left >= min_child && h_right >= min_child) {
        const double gain =
            0.5 * (score(g_left, h_left, l2) + score(g_right, h_right, l2) - score(g_total, h_total, l2));
        if (gain > floor) on_candidate(midpoint(prev, value), gain);
      }
    }
    g_left += g;
    h_left += h;
    prev = value;
    has_prev = true;
  }
};

struct BuildNode {
  double g = 0.0;
  double h = 0.0;
  double energy = 0.0;  // sum of g^2/h
  std::size_t depth = 0;
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
};

Tree to_preorder(const std::vector<BuildNode>& build, double l2) {
  Tree tree;
  std::function<std::int32_t(std::size_t)> emit = [&](std::size_t id) -> std::int32_t {
    const auto pos = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const BuildNode& b = build[id];
    if (b.feature < 0) {
      tree.nodes[static_cast<std::size_t>(pos)].value = leaf_value(b.g, b.h, l2);
      return pos;
    }
    const std::int32_t left = emit(b.left);
    const std::int32_t right = emit(b.right);
    TreeNode& n = tree.nodes[static_cast<std::size_t>(pos)];
    n.feature = b.feature;
    n.threshold = b.threshold;
    n.left = left;
    n.right = right;
    return pos;
  };
  emit(0);
  return tree;
}

}  // namespace

void GbtConfig::validate() const {
  require(n_trees >= 1, ErrorKind::kConfig, "n_trees must be >= 1");
  require(max_depth >= 1, ErrorKind::kConfig, "max_depth must be >= 1");
  require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorKind::kConfig, "learning_rate must lie in (0, 1]");
  require(min_child_weight >= 0.0 && std::isfinite(min_child_weight), ErrorKind::kConfig,
          "min_child_weight must be >= 0");
  require(split_l2 >= 0.0 && std::isfinite(split_l2), ErrorKind::kConfig, "split_l2 must be >= 0");
}

void WeightedDataset::validate() const {
  require(static_cast<std::size_t>(x.rows()) == y.size() && y.size() == w.size(), ErrorKind::kShape,
          "x, y and w lengths disagree");
  for (std::uint8_t v : y) require(v <= 1, ErrorKind::kLabel, "labels must be 0 or 1");
  for (double v : w) require(v > 0.0 && std::isfinite(v), ErrorKind::kData, "weights must be positive and finite");
  require(x.allFinite(), ErrorKind::kData, "features must be finite");
}

double Tree::evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  std::size_t k = 0;
  while (!nodes[k].is_leaf()) {
    const TreeNode& n = nodes[k];
    k = static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right);
  }
  return nodes[k].value;
}

std::size_t Tree::depth() const {
  std::function<std::size_t(std::size_t)> rec = [&](std::size_t k) -> std::size_t {
    if (nodes[k].is_leaf()) return 0;
    return 1 + std::max(rec(static_cast<std::size_t>(nodes[k].left)), rec(static_cast<std::size_t>(nodes[k].right)));
  };
  return nodes.empty() ? 0 : rec(0);
}

SplitResult best_split(std::span<const double> g, std::span<const double> h, std::span<const double> values,
                       double split_l2) {
  require(g.size() == h.size() && g.size() == values.size(), ErrorKind::kShape, "g, h and values lengths disagree");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  });
  double g_sum = 0.0;
  double h_sum = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g_sum += g[i];
    h_sum += h[i];
    energy += score(g[i], h[i], 0.0);
  }
  SplitResult best;
  Scan scan;
  scan.reset(g_sum, h_sum, kRelativeGainFloor * energy);
  for (std::size_t i : order) {
    scan.push(values[i], g[i], h[i], split_l2, 0.0, [&](double threshold, double gain) {
      if (!best.valid || gain > best.gain + kRelativeGainFloor * energy) best = {true, threshold, gain};
    });
  }
  return best;
}

double weighted_log_loss(std::span<const double> raw_scores, std::span<const std::uint8_t> y,
                         std::span<const double> w) {
  require(raw_scores.size() == y.size() && y.size() == w.size(), ErrorKind::kShape, "lengths disagree");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += w[i] * softplus(y[i] ? -raw_scores[i] : raw_scores[i]);
    den += w[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

GbtModel fit_gbt(const WeightedDataset& data, const GbtConfig& cfg, std::vector<double>* loss_trace) {
  cfg.validate();
  data.validate();
  const std::size_t n = data.rows();
  const auto n_features = static_cast<std::size_t>(data.x.cols());
  double w_pos = 0.0;
  double w_neg = 0.0;
  for (std::size_t i = 0; i < n; ++i) (data.y[i] ? w_pos : w_neg) += data.w[i];
  require(w_pos > 0.0 && w_neg > 0.0, ErrorKind::kLabel, "degenerate labels: both classes are required");

  // Canonical row order so that fitting does not depend on input order.
  std::vector<std::size_t> canon(n);
  std::iota(canon.begin(), canon.end(), std::size_t{0});
  std::stable_sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t f = 0; f < n_features; ++f) {
      const double va = data.x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f));
      const double vb = data.x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
      if (va != vb) return va < vb;
    }
    if (data.y[a] != data.y[b]) return data.y[a] < data.y[b];
    return data.w[a] < data.w[b];
  });
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), data.x.cols());
  std::vector<std::uint8_t> y(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(canon[i]));
    y[i] = data.y[canon[i]];
    w[i] = data.w[canon[i]];
  }

  std::vector<std::vector<std::size_t>> sorted(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    auto& s = sorted[f];
    s.resize(n);
    std::iota(s.begin(), s.end(), std::size_t{0});
    const auto col = x.col(static_cast<Eigen::Index>(f));
    std::sort(s.begin(), s.end(), [&](std::size_t a, std::size_t b) {
      const double va = col[static_cast<Eigen::Index>(a)];
      const double vb = col[static_cast<Eigen::Index>(b)];
      return va < vb || (va == vb && a < b);
    });
  }

  GbtModel model;
  model.config = cfg;
  model.n_features = n_features;
  model.base_score = std::log(w_pos / w_neg);

  std::vector<double> raw(n, model.base_score);
  std::vector<double> g(n);
  std::vector<double> h(n);
  std::vector<std::size_t> node_of(n);
  constexpr std::size_t kClosed = static_cast<std::size_t>(-1);
  if (loss_trace) {
    loss_trace->clear();
    loss_trace->push_back(weighted_log_loss(raw, y, w));
  }

  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(raw[i]);
      g[i] = w[i] * (p - static_cast<double>(y[i]));
      h[i] = w[i] * p * (1.0 - p);
    }
    std::vector<BuildNode> build(1);
    std::fill(node_of.begin(), node_of.end(), std::size_t{0});
    std::vector<std::size_t> frontier{0};

    for (std::size_t depth = 0; depth < cfg.max_depth && !frontier.empty(); ++depth) {
      for (std::size_t id : frontier) build[id] = BuildNode{.depth = depth};
      for (std::size_t i = 0; i < n; ++i) {
        if (node_of[i] == kClosed) continue;
        BuildNode& b = build[node_of[i]];
        b.g += g[i];
        b.h += h[i];
        b.energy += score(g[i], h[i], 0.0);
      }
      std::vector<std::size_t> slot(build.size(), kClosed);
      std::vector<Scan> scans(frontier.size());
      for (std::size_t k = 0; k < frontier.size(); ++k) slot[frontier[k]] = k;
      for (std::size_t f = 0; f < n_features; ++f) {
        for (std::size_t k = 0; k < frontier.size(); ++k) {
          const BuildNode& b = build[frontier[k]];
          scans[k].reset(b.g, b.h, kRelativeGainFloor * b.energy);
        }
        const auto col = x.col(static_cast<Eigen::Index>(f));
        for (std::size_t i : sorted[f]) {
          const std::size_t node = node_of[i];
          if (node == kClosed) continue;
          const std::size_t k = slot[node];
          BuildNode& b = build[node];
          if (b.h < cfg.min_child_weight) continue;
          scans[k].push(col[static_cast<Eigen::Index>(i)], g[i], h[i], cfg.split_l2, cfg.min_child_weight,
                        [&](double threshold, double gain) {
                          if (b.feature < 0 || gain > b.gain + kRelativeGainFloor * b.energy) {
                            b.feature = static_cast<std::int32_t>(f);
                            b.threshold = threshold;
                            b.gain = gain;
                          }
                        });
        }
      }
      std::vector<std::size_t> next;
      for (std::size_t id : frontier) {
        if (build[id].feature < 0) continue;
        build[id].left = build.size();
        build[id].right = build.size() + 1;
        build.emplace_back();
        build.emplace_back();
        next.push_back(build[id].left);
        next.push_back(build[id].right);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t node = node_of[i];
        if (node == kClosed) continue;
        const BuildNode& b = build[node];
        if (b.feature < 0) {
          node_of[i] = kClosed;
        } else {
          const bool go_left = x(static_cast<Eigen::Index>(i), b.feature) <= b.threshold;
          node_of[i] = go_left ? b.left : b.right;
        }
      }
      frontier = std::move(next);
    }
    // Nodes at max_depth are leaves; accumulate their sums.
    for (std::size_t id : frontier) build[id] = BuildNode{.depth = cfg.max_depth};
    for (std::size_t i = 0; i < n; ++i) {
      if (node_of[i] == kClosed) continue;
      BuildNode& b = build[node_of[i]];
      b.g += g[i];
      b.h += h[i];
    }

    Tree tree = to_preorder(build, cfg.split_l2);
    for (std::size_t i = 0; i < n; ++i) raw[i] += cfg.learning_rate * tree.evaluate(x.row(static_cast<Eigen::Index>(i)));
    model.trees.push_back(std::move(tree));
    if (loss_trace) loss_trace->push_back(weighted_log_loss(raw, y, w));
  }
  return model;
}

Eigen::VectorXd gbt_raw_scores(const GbtModel& model, const Eigen::MatrixXd& x, std::size_t n_trees) {
  require(static_cast<std::size_t>(x.cols()) == model.n_features, ErrorKind::kShape,
          "model expects " + std::to_string(model.n_features) + " features, got " + std::to_string(x.cols()));
  const std::size_t count = std::min(n_trees, model.trees.size());
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double s = model.base_score;
    for (std::size_t t = 0; t < count; ++t) s += model.config.learning_rate * model.trees[t].evaluate(x.row(r));
    out[r] = s;
  }
  return out;
}

Eigen::VectorXd gbt_predict(const GbtModel& model, const Eigen::MatrixXd& x) {
  Eigen::VectorXd raw = gbt_raw_scores(model, x);
  for (Eigen::Index r = 0; r < raw.size(); ++r) raw[r] = sigmoid(raw[r]);
  return raw;
}

bool operator==(const TreeNode& a, const TreeNode& b) {
  return a.feature == b.feature && a.threshold == b.threshold && a.left == b.left && a.right == b.right &&
         a.value == b.value;
}

bool operator==(const GbtModel& a, const GbtModel& b) {
  if (a.n_features != b.n_features || a.base_score != b.base_score || a.trees.size() != b.trees.size()) return false;
  const auto& ca = a.config;
  const auto& cb = b.config;
  if (ca.n_trees != cb.n_trees || ca.max_depth != cb.max_depth || ca.learning_rate != cb.learning_rate ||
      ca.min_child_weight != cb.min_child_weight || ca.split_l2 != cb.split_l2) {
    return false;
  }
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    if (a.trees[t].nodes != b.trees[t].nodes) return false;
  }
  return true;
}

}  // namespace szad
