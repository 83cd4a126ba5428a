#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../oracles.hpp"
#include "szad/error.hpp"
#include "szad/eval.hpp"
#include "szad/gbtree.hpp"

using namespace szad;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Two informative columns plus noise; labels from a noisy linear rule.
WeightedDataset synthetic(std::uint64_t seed, Eigen::Index rows, double weight = 1.0) {
  Rng rng(seed);
  WeightedDataset d;
  d.x = oracle::gaussian(rng, rows, 5);
  for (Eigen::Index r = 0; r < rows; ++r) {
    d.y.push_back(d.x(r, 0) - 0.5 * d.x(r, 3) + 0.5 * rng.normal() > 0.3 ? 1 : 0);
    d.w.push_back(weight);
  }
  return d;
}

WeightedDataset permuted(const WeightedDataset& d, std::uint64_t seed) {
  std::vector<std::size_t> order(d.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  WeightedDataset p;
  p.x.resize(d.x.rows(), d.x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.x.row(static_cast<Eigen::Index>(i)) = d.x.row(static_cast<Eigen::Index>(order[i]));
    p.y.push_back(d.y[order[i]]);
    p.w.push_back(d.w[order[i]]);
  }
  return p;
}

/// Leaf reached by every row, as a preorder node index.
std::vector<std::int32_t> routing(const Tree& tree, const Eigen::MatrixXd& x) {
  std::vector<std::int32_t> out;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::int32_t k = 0;
    while (!tree.nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& node = tree.nodes[static_cast<std::size_t>(k)];
      k = x(r, node.feature) <= node.threshold ? node.left : node.right;
    }
    out.push_back(k);
  }
  return out;
}

}  // namespace

TEST_CASE("best split examples") {
  const std::vector<double> g{-1.0, 1.0}, h{1.0, 1.0}, v{0.0, 1.0};
  const auto s = best_split(g, h, v, 0.0);
  CHECK(s.valid);
  CHECK(s.threshold == 0.5);
  CHECK(s.gain == 1.0);

  const auto flat = best_split(g, h, std::vector<double>{2.0, 2.0}, 0.0);
  CHECK_FALSE(flat.valid);
  CHECK(flat.gain == 0.0);
}

TEST_CASE("best split ignores row order") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> g(30), h(30), v(30);
    for (std::size_t i = 0; i < 30; ++i) {
      g[i] = rng.normal();
      h[i] = rng.uniform(0.01, 1.0);
      v[i] = std::round(rng.normal() * 4.0);  // repeated values
    }
    const auto a = best_split(g, h, v, 1e-6);
    std::vector<std::size_t> order(30);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<double> g2, h2, v2;
    for (auto i : order) {
      g2.push_back(g[i]);
      h2.push_back(h[i]);
      v2.push_back(v[i]);
    }
    const auto b = best_split(g2, h2, v2, 1e-6);
    CHECK(a.valid == b.valid);
    CHECK(a.threshold == b.threshold);
    CHECK(a.gain == doctest::Approx(b.gain).epsilon(1e-12));
  }
}

TEST_CASE("best split matches brute force") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(20);
    std::vector<double> g(n), h(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.normal();
      h[i] = rng.uniform(0.05, 1.0);
      v[i] = static_cast<double>(rng.index(6));
    }
    std::vector<double> distinct = v;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const double G = std::accumulate(g.begin(), g.end(), 0.0);
    const double H = std::accumulate(h.begin(), h.end(), 0.0);
    double best_gain = 0.0, best_thr = 0.0;
    for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
      const double thr = 0.5 * (distinct[k] + distinct[k + 1]);
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (v[i] <= thr) {
          gl += g[i];
          hl += h[i];
        }
      }
      const double gain = 0.5 * (gl * gl / hl + (G - gl) * (G - gl) / (H - hl) - G * G / H);
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_thr = thr;
      }
    }
    const auto s = best_split(g, h, v, 0.0);
    if (best_gain > 1e-9) {
      CHECK(s.valid);
      CHECK(s.threshold == best_thr);
      CHECK(s.gain == doctest::Approx(best_gain).epsilon(1e-9));
    }
  }
}

TEST_CASE("one tree on four points matches the hand computation") {
  WeightedDataset d;
  d.x = (Eigen::MatrixXd(4, 1) << 1, 2, 3, 4).finished();
  d.y = {0, 0, 1, 1};
  d.w = {1, 1, 1, 1};
  GbtConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 1;
  cfg.split_l2 = 0.0;
  std::vector<double> trace;
  const auto model = fit_gbt(d, cfg, &trace);

  // base = log(2/2) = 0, p = 1/2: g = p - y = +-1/2, h = p(1-p) = 1/4.
  // Split 2.5: G_L = 1, H_L = 1/2, G_R = -1, H_R = 1/2, gain = (2 + 2 - 0) / 2 = 2.
  CHECK(model.base_score == 0.0);
  REQUIRE(model.trees.size() == 1);
  const auto& nodes = model.trees[0].nodes;
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[0].feature == 0);
  CHECK(nodes[0].threshold == 2.5);
  CHECK(nodes[1].value == -2.0);
  CHECK(nodes[2].value == 2.0);
  const std::vector<double> g{0.5, 0.5, -0.5, -0.5}, h(4, 0.25), v{1, 2, 3, 4};
  CHECK(best_split(g, h, v, 0.0).gain == 2.0);

  const auto p = gbt_predict(model, d.x);
  CHECK(p[0] == doctest::Approx(sigmoid(-0.2)).epsilon(1e-15));
  CHECK(p[3] == doctest::Approx(sigmoid(0.2)).epsilon(1e-15));
  REQUIRE(trace.size() == 2);
  CHECK(trace[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(trace[1] == doctest::Approx(std::log(1.0 + std::exp(-0.2))).epsilon(1e-15));
}

TEST_CASE("prediction examples") {
  GbtModel stump;
  stump.config.learning_rate = 0.1;
  stump.n_features = 1;
  stump.base_score = 0.3;
  Tree t;
  t.nodes = {TreeNode{0, 0.5, 1, 2, 0.0}, TreeNode{-1, 0.0, -1, -1, -1.0}, TreeNode{-1, 0.0, -1, -1, 2.0}};
  stump.trees.push_back(t);
  const Eigen::MatrixXd x = (Eigen::MatrixXd(3, 1) << 0.0, 0.5, 0.75).finished();
  const auto p = gbt_predict(stump, x);
  CHECK(p[0] == doctest::Approx(sigmoid(0.2)).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(sigmoid(0.2)).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(sigmoid(0.5)).epsilon(1e-15));
  CHECK_THROWS_AS(gbt_predict(stump, Eigen::MatrixXd::Zero(2, 3)), Error);

  auto d = synthetic(5, 200);
  d.w.assign(d.rows(), 1.0);
  for (std::size_t i = 0; i < 50; ++i) d.w[i] = 3.0;
  const auto model = fit_gbt(d, GbtConfig{});
  double wp = 0.0, wt = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    wt += d.w[i];
    if (d.y[i] == 1) wp += d.w[i];
  }
  const Eigen::VectorXd raw0 = gbt_raw_scores(model, d.x, 0);
  for (Eigen::Index i = 0; i < raw0.size(); ++i) CHECK(sigmoid(raw0[i]) == doctest::Approx(wp / wt).epsilon(1e-12));
}

TEST_CASE("separable one-dimensional data") {
  WeightedDataset d;
  Rng rng(6);
  d.x.resize(60, 1);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const double v = rng.uniform(0.01, 2.0) * (i % 2 == 0 ? 1.0 : -1.0);
    d.x(i, 0) = v;
    d.y.push_back(v > 0.0 ? 1 : 0);
    d.w.push_back(1.0);
  }
  const auto p = gbt_predict(fit_gbt(d, GbtConfig{}), d.x);
  std::vector<int> labels(d.y.begin(), d.y.end());
  CHECK(auc(std::span<const double>(p.data(), 60), labels) == 1.0);
  for (Eigen::Index i = 0; i < 60; ++i) {
    for (Eigen::Index j = 0; j < 60; ++j) {
      if (d.y[i] == 1 && d.y[j] == 0) CHECK(p[i] > p[j]);
    }
  }
}

TEST_CASE("training loss never increases") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto d = synthetic(seed, 400);
    Rng rng(seed + 100);
    for (auto& w : d.w) w = rng.uniform() < 0.3 ? 1.0 : 0.01;
    std::vector<double> trace;
    fit_gbt(d, GbtConfig{}, &trace);
    REQUIRE(trace.size() == 101);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  }
}

TEST_CASE("doubling every weight leaves the model unchanged") {
  auto d = synthetic(8, 300);
  GbtConfig cfg;
  cfg.split_l2 = 0.0;
  cfg.min_child_weight = 0.0;  // an absolute hessian cutoff does not scale with the weights
  const auto a = fit_gbt(d, cfg);
  for (auto& w : d.w) w *= 2.0;
  const auto b = fit_gbt(d, cfg);
  CHECK(a == b);
}

TEST_CASE("fit and predict ignore row order") {
  const auto d = synthetic(9, 250);
  const auto a = fit_gbt(d, GbtConfig{});
  const auto b = fit_gbt(permuted(d, 1), GbtConfig{});
  CHECK(a == b);
  const auto pd = permuted(d, 2);
  const auto pa = gbt_predict(a, d.x);
  const auto pb = gbt_predict(a, pd.x);
  std::vector<double> sa(pa.data(), pa.data() + pa.size()), sb(pb.data(), pb.data() + pb.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  CHECK(sa == sb);
}

TEST_CASE("negligible source weights reproduce the target-only model") {
  const auto target = synthetic(10, 150);
  auto source = synthetic(11, 400, 1e-12);
  source.x.col(0).array() += 0.37;  // sources sit between target values
  WeightedDataset both;
  both.x.resize(550, 5);
  both.x << target.x, source.x;
  both.y = target.y;
  both.y.insert(both.y.end(), source.y.begin(), source.y.end());
  both.w = target.w;
  both.w.insert(both.w.end(), source.w.begin(), source.w.end());

  GbtConfig cfg;
  cfg.split_l2 = 0.0;
  const auto alone = fit_gbt(target, cfg);
  const auto mixed = fit_gbt(both, cfg);
  REQUIRE(alone.trees.size() == mixed.trees.size());
  CHECK(mixed.base_score == doctest::Approx(alone.base_score).epsilon(1e-9));
  for (std::size_t t = 0; t < alone.trees.size(); ++t) {
    const auto& na = alone.trees[t].nodes;
    const auto& nb = mixed.trees[t].nodes;
    REQUIRE(na.size() == nb.size());
    for (std::size_t k = 0; k < na.size(); ++k) {
      CHECK(na[k].feature == nb[k].feature);
      CHECK(na[k].left == nb[k].left);
      CHECK(na[k].right == nb[k].right);
      if (na[k].is_leaf()) CHECK(nb[k].value == doctest::Approx(na[k].value).epsilon(1e-6));
    }
    CHECK(routing(alone.trees[t], target.x) == routing(mixed.trees[t], target.x));
  }
  const auto pa = gbt_predict(alone, target.x);
  const auto pb = gbt_predict(mixed, target.x);
  CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("invalid training data") {
  auto d = synthetic(12, 50);
  auto one_class = d;
  std::fill(one_class.y.begin(), one_class.y.end(), 1);
  try {
    fit_gbt(one_class, GbtConfig{});
    FAIL("expected a label error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kLabel);
  }
  auto bad_w = d;
  bad_w.w[3] = 0.0;
  CHECK_THROWS_AS(fit_gbt(bad_w, GbtConfig{}), Error);
  GbtConfig cfg;
  cfg.learning_rate = 1.5;
  CHECK_THROWS_AS(fit_gbt(d, cfg), Error);
}

TEST_CASE("trees respect the depth limit") {
  const auto model = fit_gbt(synthetic(13, 500), GbtConfig{});
  CHECK(model.trees.size() == 100);
  for (const auto& t : model.trees) {
    CHECK(t.depth() <= 4);
    for (const auto& n : t.nodes) CHECK(std::isfinite(n.value));
  }
}
