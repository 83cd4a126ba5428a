#include "szad/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "szad/error.hpp"
#include "szad/rng.hpp"
#include "szad/text.hpp"

namespace szad {
namespace {

constexpr double kEntropyTolerance = 1e-5;
constexpr int kBisectionSteps = 50;
constexpr double kInitStddev = 1e-4;
constexpr double kDuplicateJitter = 1e-10;
constexpr double kMinGain = 0.01;

std::uint64_t row_hash(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    std::uint64_t bits = 0;
    const double v = row[k] == 0.0 ? 0.0 : row[k];  // fold -0 into +0
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * x * x.transpose();
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string marker(int label, double cx, double cy, const std::string& color) {
  char buf[256];
  if (label == 0) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>", cx, cy,
                  color.c_str());
  } else {
    std::snprintf(buf, sizeof buf,
                  "<path d=\"M%.2f %.2fL%.2f %.2fL%.2f %.2fZ\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.2\"/>", cx,
                  cy - 4.0, cx - 3.5, cy + 3.0, cx + 3.5, cy + 3.0, color.c_str());
  }
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void TsneConfig::validate(std::size_t n) const {
  require(n >= 10, ErrorKind::kData, "t-SNE needs at least 10 points, got " + std::to_string(n));
  require(perplexity > 0.0 && perplexity < (static_cast<double>(n) - 1.0) / 3.0, ErrorKind::kConfig,
          "perplexity " + text::format_double(perplexity) + " must be below (n - 1) / 3 for n = " + std::to_string(n));
  require(iterations >= 1, ErrorKind::kConfig, "iterations must be >= 1");
  require(learning_rate > 0.0, ErrorKind::kConfig, "learning_rate must be positive");
  require(early_exaggeration >= 1.0, ErrorKind::kConfig, "early_exaggeration must be >= 1");
  require(max_points >= 10, ErrorKind::kConfig, "max_points must be >= 10");
}

Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& x, double perplexity, std::vector<std::size_t>* flagged) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd d = squared_distances(x);
  const double target = std::log2(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double d_min = std::numeric_limits<double>::infinity();
    double d_mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      d_min = std::min(d_min, d(i, j));
      d_mean += d(i, j);
    }
    d_mean /= static_cast<double>(n - 1);
    const double spread = d_mean - d_min;
    double beta = spread > 0.0 ? 1.0 / spread : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    const auto evaluate = [&](double b) {
      double z = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double shifted = d(i, j) - d_min;
        const double v = j == i ? 0.0 : std::exp(-b * shifted);
        row[j] = v;
        z += v;
        weighted += v * shifted;
      }
      row /= z;
      return (std::log(z) + b * weighted / z) / std::log(2.0);
    };
    entropy = evaluate(beta);
    bool converged = std::abs(entropy - target) < kEntropyTolerance;
    for (int step = 0; step < kBisectionSteps && !converged; ++step) {
      if (entropy > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
      entropy = evaluate(beta);
      converged = std::abs(entropy - target) < kEntropyTolerance;
    }
    if (!converged && flagged) flagged->push_back(static_cast<std::size_t>(i));
    p.row(i) = row.transpose();
  }
  return p;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& conditional) {
  return (conditional + conditional.transpose()) / (2.0 * static_cast<double>(conditional.rows()));
}

std::vector<std::size_t> stratified_subsample(std::span<const std::string> subjects, std::span<const int> labels,
                                              std::size_t cap, std::uint64_t seed) {
  require(subjects.size() == labels.size(), ErrorKind::kShape, "subjects and labels lengths disagree");
  const std::size_t n = subjects.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n <= cap) return all;
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[{subjects[i], labels[i]}].push_back(i);
  struct Quota {
    std::vector<std::size_t>* rows;
    std::size_t take;
    double remainder;
    std::size_t order;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (auto& [key, rows] : groups) {
    const double exact = static_cast<double>(cap) * static_cast<double>(rows.size()) / static_cast<double>(n);
    const auto take = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({&rows, take, exact - static_cast<double>(take), quotas.size()});
    assigned += take;
  }
  std::vector<Quota*> by_remainder;
  for (auto& q : quotas) by_remainder.push_back(&q);
  std::stable_sort(by_remainder.begin(), by_remainder.end(),
                   [](const Quota* a, const Quota* b) { return a->remainder > b->remainder; });
  for (std::size_t k = 0; assigned < cap && k < by_remainder.size(); ++k, ++assigned) by_remainder[k]->take += 1;

  std::vector<std::size_t> kept;
  for (auto& q : quotas) {
    Rng rng(derive_seed(seed, q.order));
    std::vector<std::size_t> rows = *q.rows;
    rng.shuffle(rows.begin(), rows.end());
    kept.insert(kept.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min(q.take, rows.size())));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

Embedding2D tsne(const Eigen::MatrixXd& x_in, std::span<const std::string> subjects, std::span<const int> labels,
                 const TsneConfig& cfg) {
  require(static_cast<std::size_t>(x_in.rows()) == subjects.size() && subjects.size() == labels.size(),
          ErrorKind::kShape, "rows, subjects and labels lengths disagree");
  require(x_in.allFinite(), ErrorKind::kData, "t-SNE input must be finite");
  const std::vector<std::size_t> rows = stratified_subsample(subjects, labels, cfg.max_points, cfg.seed);
  const auto n = static_cast<Eigen::Index>(rows.size());
  cfg.validate(rows.size());

  // Content-sorted processing order.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x_in.row(static_cast<Eigen::Index>(rows[a]));
    const auto rb = x_in.row(static_cast<Eigen::Index>(rows[b]));
    for (Eigen::Index k = 0; k < ra.size(); ++k) {
      if (ra[k] != rb[k]) return ra[k] < rb[k];
    }
    return false;
  });
  Eigen::MatrixXd x(n, x_in.cols());
  Eigen::MatrixXd y(n, 2);
  std::size_t duplicate_run = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = x_in.row(static_cast<Eigen::Index>(rows[order[static_cast<std::size_t>(k)]]));
    const bool duplicate =
        k > 0 && src == x_in.row(static_cast<Eigen::Index>(rows[order[static_cast<std::size_t>(k - 1)]]));
    duplicate_run = duplicate ? duplicate_run + 1 : 0;
    const std::uint64_t h = row_hash(src);
    x.row(k) = src;
    if (duplicate_run > 0) {
      Rng jitter(derive_seed(derive_seed(cfg.seed, h), duplicate_run));
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(k, c) += kDuplicateJitter * jitter.normal();
    }
    Rng init(derive_seed(derive_seed(cfg.seed, h), 0x7D5E + duplicate_run));
    y(k, 0) = kInitStddev * init.normal();
    y(k, 1) = kInitStddev * init.normal();
  }

  Embedding2D emb;
  emb.config = cfg;
  std::vector<std::size_t> flagged;
  const Eigen::MatrixXd p = symmetrize(conditional_affinities(x, cfg.perplexity, &flagged));
  for (std::size_t f : flagged) emb.flagged_rows.push_back(rows[order[f]]);
  std::sort(emb.flagged_rows.begin(), emb.flagged_rows.end());

  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd num(n, n);
  Eigen::MatrixXd grad(n, 2);
  constexpr double kTiny = 1e-300;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0);
        const double dy = y(i, 1) - y(j, 1);
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num(i, j) = v;
        num(j, i) = v;
        z += 2.0 * v;
      }
    }
    double kl = 0.0;
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      double gx = 0.0;
      double gy = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(num(i, j) / z, kTiny);
        const double pij = p(i, j);
        if (pij > 0.0) kl += pij * std::log(pij / q);
        const double coeff = 4.0 * (exaggeration * pij - q) * num(i, j);
        gx += coeff * (y(i, 0) - y(j, 0));
        gy += coeff * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = gx;
      grad(i, 1) = gy;
    }
    emb.kl_trace.push_back(kl);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0.0) == (update(i, c) > 0.0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, kMinGain) : gains(i, c) + 0.2;
        update(i, c) = momentum * update(i, c) - cfg.learning_rate * gains(i, c) * grad(i, c);
        y(i, c) += update(i, c);
      }
    }
    y.rowwise() -= y.colwise().mean();
    require(y.allFinite(), ErrorKind::kNumeric, "t-SNE diverged at iteration " + std::to_string(it));
  }

  emb.coords.resize(n, 2);
  emb.subject.resize(rows.size());
  emb.label.resize(rows.size());
  emb.source_rows = rows;
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t pos = order[static_cast<std::size_t>(k)];
    emb.coords.row(static_cast<Eigen::Index>(pos)) = y.row(k);
  }
  for (std::size_t pos = 0; pos < rows.size(); ++pos) {
    emb.subject[pos] = subjects[rows[pos]];
    emb.label[pos] = labels[rows[pos]];
  }
  return emb;
}

double silhouette(const Eigen::MatrixXd& points, std::span<const int> clusters) {
  const auto n = static_cast<std::size_t>(points.rows());
  require(clusters.size() == n, ErrorKind::kShape, "one cluster label per point required");
  std::vector<int> ids(clusters.begin(), clusters.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  require(ids.size() >= 2, ErrorKind::kData, "silhouette needs at least 2 clusters");
  std::vector<std::size_t> sizes(ids.size());
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    slot[i] = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), clusters[i]) - ids.begin());
    ++sizes[slot[i]];
  }
  double total = 0.0;
  std::vector<double> sums(ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[slot[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    }
    if (sizes[slot[i]] < 2) continue;  // singleton clusters score 0
    const double a = sums[slot[i]] / static_cast<double>(sizes[slot[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ids.size(); ++c) {
      if (c != slot[i]) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

void export_scatter(const Embedding2D& emb, const std::filesystem::path& svg_path) {
  require(emb.size() > 0, ErrorKind::kData, "nothing to plot: embedding has no points");
  require(emb.subject.size() == emb.size() && emb.label.size() == emb.size(), ErrorKind::kShape,
          "embedding metadata lengths disagree");

  std::vector<std::string> subjects(emb.subject);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const auto color_of = [&](const std::string& s) {
    const auto idx = static_cast<std::size_t>(std::lower_bound(subjects.begin(), subjects.end(), s) - subjects.begin());
    return std::string(kPalette[idx % std::size(kPalette)]);
  };
  std::vector<std::pair<std::string, int>> entries;
  for (std::size_t i = 0; i < emb.size(); ++i) entries.emplace_back(emb.subject[i], emb.label[i]);
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

  constexpr double kPlot = 480.0;
  constexpr double kMargin = 40.0;
  constexpr double kLegendWidth = 220.0;
  const double legend_height = 24.0 + 18.0 * static_cast<double>(entries.size());
  const double width = kPlot + 2.0 * kMargin + kLegendWidth;
  const double height = std::max(kPlot + 2.0 * kMargin + 30.0, legend_height + 2.0 * kMargin);
  const Eigen::Vector2d lo = emb.coords.colwise().minCoeff();
  const Eigen::Vector2d hi = emb.coords.colwise().maxCoeff();
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
  const auto px = [&](double v, int axis) {
    const double t = (v - lo[axis]) / span;
    return axis == 0 ? kMargin + t * kPlot : kMargin + kPlot - t * kPlot;
  };

  std::ofstream svg(svg_path, std::ios::binary);
  require(svg.good(), ErrorKind::kIo, "cannot write " + svg_path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                width, height, width, height);
  svg << buf;
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"#999\"/>\n",
                kMargin, kMargin, kPlot, kPlot);
  svg << buf << "<g class=\"points\">\n";
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    svg << marker(emb.label[i], px(emb.coords(r, 0), 0), px(emb.coords(r, 1), 1), color_of(emb.subject[i])) << '\n';
  }
  svg << "</g>\n<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  const double lx = kMargin * 2.0 + kPlot;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const double ly = kMargin + 12.0 + 18.0 * static_cast<double>(k);
    const auto& [subject, label] = entries[k];
    svg << "<g class=\"legend-entry\">" << marker(label, lx + 6.0, ly - 4.0, color_of(subject));
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\">", lx + 18.0, ly);
    svg << buf << xml_escape(subject) << (label ? " seizure" : " non-seizure") << "</text></g>\n";
  }
  svg << "</g>\n";
  const auto& c = emb.config;
  std::snprintf(buf, sizeof buf, "<text class=\"caption\" x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\">",
                kMargin, height - 12.0);
  svg << buf << "t-SNE: perplexity " << text::format_double(c.perplexity) << ", iterations " << c.iterations
      << ", learning rate " << text::format_double(c.learning_rate) << ", exaggeration "
      << text::format_double(c.early_exaggeration) << " for " << c.exaggeration_iterations << " iterations, seed "
      << c.seed << ", points " << emb.size() << "</text>\n</svg>\n";
  require(svg.good(), ErrorKind::kIo, "failed writing " + svg_path.string());

  std::filesystem::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path, std::ios::binary);
  require(csv.good(), ErrorKind::kIo, "cannot write " + csv_path.string());
  csv << "x,y,subject,label\n";
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv << text::format_double(emb.coords(r, 0)) << ',' << text::format_double(emb.coords(r, 1)) << ','
        << emb.subject[i] << ',' << emb.label[i] << '\n';
  }
  require(csv.good(), ErrorKind::kIo, "failed writing " + csv_path.string());
}

Embedding2D read_scatter_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + csv_path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && text::trim(line) == "x,y,subject,label", ErrorKind::kParse,
          csv_path.string() + ": missing header x,y,subject,label");
  std::vector<double> xs;
  std::vector<double> ys;
  Embedding2D emb;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(text::trim(line), ',');
    double x = 0.0;
    double y = 0.0;
    std::size_t label = 0;
    require(fields.size() == 4 && text::parse_double(fields[0], x) && text::parse_double(fields[1], y) &&
                text::parse_size(fields[3], label),
            ErrorKind::kParse, csv_path.string() + ": line " + std::to_string(line_no) + ": malformed row");
    xs.push_back(x);
    ys.push_back(y);
    emb.subject.emplace_back(fields[2]);
    emb.label.push_back(static_cast<int>(label));
  }
  emb.coords.resize(static_cast<Eigen::Index>(xs.size()), 2);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    emb.coords(static_cast<Eigen::Index>(i), 0) = xs[i];
    emb.coords(static_cast<Eigen::Index>(i), 1) = ys[i];
  }
  emb.source_rows.resize(xs.size());
  std::iota(emb.source_rows.begin(), emb.source_rows.end(), std::size_t{0});
  return emb;
}

}  // namespace szad
