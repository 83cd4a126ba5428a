#include "szad/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include "szad/error.hpp"
#include "szad/rng.hpp"
#include "szad/text.hpp"

namespace szad {
namespace {

std::size_t find_subject(std::span<const FeatureMatrix> cohort, const std::string& id) {
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort[i].subject_id == id) return i;
  }
  fail(ErrorKind::kLookup, "unknown subject '" + id + "'");
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

struct Task {
  std::size_t trial = 0;
  std::size_t target = 0;  // index into cohort
  std::size_t n = 0;
};

// One AUC per configured scheme; nullopt marks N/A.
using TaskResult = std::vector<std::optional<double>>;

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

WeightedDataset assemble(const NShotSplit& split, std::span<const FeatureMatrix> cohort,
                         std::span<const Eigen::MatrixXd> representation) {
  WeightedDataset data;
  const Eigen::Index dim = representation[split.target].cols();
  data.x.resize(static_cast<Eigen::Index>(split.train.size()), dim);
  data.y.reserve(split.train.size());
  data.w.reserve(split.train.size());
  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const RowRef& r = split.train[k];
    data.x.row(static_cast<Eigen::Index>(k)) = representation[r.subject].row(static_cast<Eigen::Index>(r.row));
    data.y.push_back(static_cast<std::uint8_t>(cohort[r.subject].labels[r.row] != 0));
    data.w.push_back(r.weight);
  }
  return data;
}

double score_split(const NShotSplit& split, std::span<const FeatureMatrix> cohort,
                   std::span<const Eigen::MatrixXd> representation, const GbtConfig& gbt) {
  const GbtModel model = fit_gbt(assemble(split, cohort, representation), gbt);
  const Eigen::VectorXd p = gbt_predict(model, gather(representation[split.target], split.test_rows));
  std::vector<int> labels;
  labels.reserve(split.test_rows.size());
  for (std::size_t r : split.test_rows) labels.push_back(cohort[split.target].labels[r]);
  return auc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), labels);
}

void check_no_leakage(const NShotSplit& split) {
  std::vector<std::size_t> train_rows;
  for (const RowRef& r : split.train) {
    if (r.subject == split.target) train_rows.push_back(r.row);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::vector<std::size_t> test = split.test_rows;
  std::sort(test.begin(), test.end());
  std::vector<std::size_t> both;
  std::set_intersection(train_rows.begin(), train_rows.end(), test.begin(), test.end(), std::back_inserter(both));
  require(both.empty(), ErrorKind::kSplit, "train and test windows overlap");
  std::vector<std::size_t> seen = split.target_visible;
  std::sort(seen.begin(), seen.end());
  if (!train_rows.empty()) {
    both.clear();
    std::set_intersection(seen.begin(), seen.end(), test.begin(), test.end(), std::back_inserter(both));
    require(both.empty(), ErrorKind::kSplit, "adaptation sees test windows");
  }
}

TaskResult run_task(const std::vector<FeatureMatrix>& cohort, const ExperimentConfig& cfg,
                    const std::vector<std::uint64_t>& trial_seeds, const Task& task) {
  const FeatureMatrix& target = cohort[task.target];
  const std::size_t n_blocks = block_partition(target.labels).size();
  TaskResult out(cfg.schemes.size());
  if (task.n >= n_blocks) return out;

  std::optional<std::vector<Eigen::MatrixXd>> latents;
  std::vector<Eigen::MatrixXd> raw;
  raw.reserve(cohort.size());
  for (const auto& m : cohort) raw.push_back(m.values);

  for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
    const Scheme scheme = cfg.schemes[s];
    if (scheme == Scheme::kSubjectSpecific && task.n == 0) continue;
    const NShotPlan plan{target.subject_id, task.n, scheme, cfg.source_weight, cfg.target_weight};
    const NShotSplit split = build_nshot(cohort, plan);
    check_no_leakage(split);
    if (scheme == Scheme::kCrossSubject) {
      if (!latents) {
        std::vector<FeatureMatrix> visible;
        for (std::size_t i = 0; i < cohort.size(); ++i) {
          visible.push_back(i == task.target ? cohort[i].select(split.target_visible) : cohort[i]);
        }
        AdaptationConfig acfg = cfg.adaptation;
        acfg.track_divergence = false;
        acfg.seed = derive_seed(derive_seed(trial_seeds[task.trial], task.target), task.n);
        const AdaptationModel model = train_adaptation(visible, acfg);
        latents.emplace();
        for (std::size_t i = 0; i < cohort.size(); ++i) latents->push_back(encode(model, i, cohort[i].values));
      }
      out[s] = score_split(split, cohort, *latents, cfg.gbt);
    } else {
      out[s] = score_split(split, cohort, raw, cfg.gbt);
    }
  }
  return out;
}

}  // namespace

std::vector<Block> block_partition(std::span<const int> labels) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && (i == 0 || labels[i - 1] == 0)) starts.push_back(i);
  }
  require(!starts.empty(), ErrorKind::kData, "no seizure windows: cannot form blocks");
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    blocks.push_back({k == 0 ? 0 : starts[k], k + 1 < starts.size() ? starts[k + 1] : labels.size()});
  }
  return blocks;
}

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kSubjectSpecific: return "SS";
    case Scheme::kCrossSubject: return "CS";
    case Scheme::kCrossSubjectRaw: return "CS-raw";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "ss") return Scheme::kSubjectSpecific;
  if (lower == "cs") return Scheme::kCrossSubject;
  if (lower == "cs-raw") return Scheme::kCrossSubjectRaw;
  fail(ErrorKind::kConfig, "unknown scheme '" + std::string(name) + "' (expected SS, CS or CS-raw)");
}

NShotSplit build_nshot(std::span<const FeatureMatrix> cohort, const NShotPlan& plan) {
  require(plan.source_weight > 0.0 && plan.target_weight > 0.0, ErrorKind::kConfig, "sample weights must be positive");
  require(!(plan.scheme == Scheme::kSubjectSpecific && plan.n == 0), ErrorKind::kScheme,
          "subject-specific training needs n >= 1");
  NShotSplit split;
  split.target = find_subject(cohort, plan.target);
  const FeatureMatrix& target = cohort[split.target];
  const auto blocks = block_partition(target.labels);
  require(plan.n < blocks.size(), ErrorKind::kSplit,
          plan.target + " has " + std::to_string(blocks.size()) + " blocks; " + std::to_string(plan.n) +
              "-shot needs at least " + std::to_string(plan.n + 1));
  const std::size_t boundary = plan.n == 0 ? 0 : blocks[plan.n - 1].end;
  for (std::size_t r = 0; r < boundary; ++r) split.train.push_back({split.target, r, plan.target_weight});
  for (std::size_t r = boundary; r < target.labels.size(); ++r) split.test_rows.push_back(r);
  if (plan.n == 0) {
    split.target_visible.resize(target.labels.size());
    std::iota(split.target_visible.begin(), split.target_visible.end(), std::size_t{0});
  } else {
    split.target_visible.resize(boundary);
    std::iota(split.target_visible.begin(), split.target_visible.end(), std::size_t{0});
  }
  if (plan.scheme != Scheme::kSubjectSpecific) {
    const double w = plan.n == 0 ? 1.0 : plan.source_weight;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (i == split.target) continue;
      for (std::size_t r = 0; r < cohort[i].labels.size(); ++r) split.train.push_back({i, r, w});
    }
  }
  return split;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::kShape, "scores and labels lengths disagree");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (double s : scores) require(!std::isnan(s), ErrorKind::kNumeric, "NaN score");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0.0;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) {
        n_pos += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  require(n_pos > 0.0 && n_neg > 0.0, ErrorKind::kLabel, "AUC is undefined with a single class");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

const CellSummary* ExperimentReport::find(const std::string& subject, Scheme scheme, std::size_t n) const {
  for (const auto& c : cells) {
    if (c.subject == subject && c.scheme == scheme && c.n == n) return &c;
  }
  return nullptr;
}

double ExperimentReport::average(Scheme scheme, std::size_t n) const {
  std::vector<double> means;
  for (const auto& c : cells) {
    if (c.scheme == scheme && c.n == n && c.available) means.push_back(c.mean);
  }
  return means.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(means);
}

std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& cfg) {
  using text::format_double;
  std::vector<std::pair<std::string, std::string>> kv;
  std::string ns;
  for (std::size_t n : cfg.ns) ns += (ns.empty() ? "" : ",") + std::to_string(n);
  std::string schemes;
  for (Scheme s : cfg.schemes) schemes += (schemes.empty() ? "" : ",") + std::string(scheme_name(s));
  std::string targets;
  for (const auto& t : cfg.targets) targets += (targets.empty() ? "" : ",") + t;
  kv.emplace_back("eval.ns", ns);
  kv.emplace_back("eval.schemes", schemes);
  kv.emplace_back("eval.targets", targets.empty() ? "all" : targets);
  kv.emplace_back("eval.trials", std::to_string(cfg.trials));
  kv.emplace_back("eval.source_weight", format_double(cfg.source_weight));
  kv.emplace_back("eval.target_weight", format_double(cfg.target_weight));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  const auto& a = cfg.adaptation;
  kv.emplace_back("adapt.latent_dim", std::to_string(a.latent_dim));
  kv.emplace_back("adapt.encoder_hidden", std::to_string(a.encoder_hidden));
  kv.emplace_back("adapt.disc_hidden1", std::to_string(a.disc_hidden1));
  kv.emplace_back("adapt.disc_hidden2", std::to_string(a.disc_hidden2));
  kv.emplace_back("adapt.batch_size", std::to_string(a.batch_size));
  kv.emplace_back("adapt.epochs", std::to_string(a.epochs));
  kv.emplace_back("adapt.learning_rate", format_double(a.learning_rate));
  kv.emplace_back("adapt.encoder_learning_rate", format_double(a.encoder_rate()));
  kv.emplace_back("adapt.decoder_learning_rate", format_double(a.decoder_rate()));
  kv.emplace_back("adapt.discriminator_learning_rate", format_double(a.discriminator_rate()));
  kv.emplace_back("adapt.alpha", format_double(a.alpha));
  kv.emplace_back("adapt.lambda", format_double(a.lambda));
  kv.emplace_back("adapt.holdout_fraction", format_double(a.holdout_fraction));
  kv.emplace_back("adapt.shared_init", a.shared_init ? "true" : "false");
  const auto& g = cfg.gbt;
  kv.emplace_back("gbt.n_trees", std::to_string(g.n_trees));
  kv.emplace_back("gbt.max_depth", std::to_string(g.max_depth));
  kv.emplace_back("gbt.learning_rate", format_double(g.learning_rate));
  kv.emplace_back("gbt.min_child_weight", format_double(g.min_child_weight));
  kv.emplace_back("gbt.split_l2", format_double(g.split_l2));
  return kv;
}

ExperimentReport run_experiment(const std::vector<FeatureMatrix>& cohort, const ExperimentConfig& cfg) {
  require(cohort.size() >= 2, ErrorKind::kData, "experiment needs at least 2 subjects");
  require(cfg.trials >= 1, ErrorKind::kConfig, "trials must be >= 1");
  require(!cfg.ns.empty() && !cfg.schemes.empty(), ErrorKind::kConfig, "ns and schemes must be non-empty");
  require(cfg.trial_seeds.empty() || cfg.trial_seeds.size() == cfg.trials, ErrorKind::kConfig,
          "trial_seeds must list one seed per trial");
  cfg.gbt.validate();
  cfg.adaptation.validate();
  for (const auto& m : cohort) {
    require(m.dim() == cohort.front().dim(), ErrorKind::kShape, "subjects disagree on feature width");
  }

  ExperimentReport report;
  report.config = describe(cfg);
  report.ns = cfg.ns;
  report.schemes = cfg.schemes;
  report.trial_seeds = cfg.trial_seeds;
  if (report.trial_seeds.empty()) {
    for (std::size_t t = 0; t < cfg.trials; ++t) report.trial_seeds.push_back(derive_seed(cfg.seed, t));
  }
  std::vector<std::size_t> targets;
  if (cfg.targets.empty()) {
    targets.resize(cohort.size());
    std::iota(targets.begin(), targets.end(), std::size_t{0});
  } else {
    for (const auto& id : cfg.targets) targets.push_back(find_subject(cohort, id));
  }
  for (std::size_t t : targets) report.subjects.push_back(cohort[t].subject_id);

  std::vector<Task> tasks;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    for (std::size_t t : targets) {
      for (std::size_t n : cfg.ns) tasks.push_back({trial, t, n});
    }
  }
  std::vector<TaskResult> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      try {
        results[k] = run_task(cohort, cfg, report.trial_seeds, tasks[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (!errors[k]) continue;
    const Task& task = tasks[k];
    const std::string where = "subject " + cohort[task.target].subject_id + ", " + std::to_string(task.n) +
                              "-shot, trial " + std::to_string(task.trial);
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.detail());
    }
  }

  const auto task_index = [&](std::size_t trial, std::size_t ti, std::size_t ni) {
    return (trial * targets.size() + ti) * cfg.ns.size() + ni;
  };
  report.trials = cfg.trials;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
      for (std::size_t ni = 0; ni < cfg.ns.size(); ++ni) {
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const auto& v = results[task_index(trial, ti, ni)][s];
          if (v) report.results.push_back({report.subjects[ti], cfg.schemes[s], cfg.ns[ni], trial, *v});
        }
      }
    }
  }
  summarize(report);
  return report;
}

void summarize(ExperimentReport& report) {
  report.cells.clear();
  for (const auto& subject : report.subjects) {
    for (Scheme scheme : report.schemes) {
      for (std::size_t n : report.ns) {
        CellSummary cell;
        cell.subject = subject;
        cell.scheme = scheme;
        cell.n = n;
        std::vector<double> aucs;
        for (const auto& r : report.results) {
          if (r.subject == subject && r.scheme == scheme && r.n == n) aucs.push_back(r.auc);
        }
        cell.available = !aucs.empty();
        cell.count = aucs.size();
        cell.mean = mean_of(aucs);
        cell.stddev = population_std(aucs);
        report.cells.push_back(cell);
      }
    }
  }
}

ExperimentReport read_report_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && text::trim(line) == "subject,scheme,n,trial,auc",
          ErrorKind::kParse, "missing header subject,scheme,n,trial,auc");
  ExperimentReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto f = text::split(text::trim(line), ',');
    require(f.size() == 5, ErrorKind::kParse, where + "expected 5 fields");
    TrialResult r;
    r.subject = std::string(f[0]);
    try {
      r.scheme = parse_scheme(f[1]);
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, where + e.detail());
    }
    require(text::parse_size(f[2], r.n) && text::parse_size(f[3], r.trial) && text::parse_double(f[4], r.auc),
            ErrorKind::kParse, where + "malformed number");
    require(r.auc >= 0.0 && r.auc <= 1.0, ErrorKind::kParse, where + "AUC outside [0, 1]");
    if (std::find(report.subjects.begin(), report.subjects.end(), r.subject) == report.subjects.end()) {
      report.subjects.push_back(r.subject);
    }
    if (std::find(report.schemes.begin(), report.schemes.end(), r.scheme) == report.schemes.end()) {
      report.schemes.push_back(r.scheme);
    }
    if (std::find(report.ns.begin(), report.ns.end(), r.n) == report.ns.end()) report.ns.push_back(r.n);
    report.trials = std::max(report.trials, r.trial + 1);
    report.results.push_back(std::move(r));
  }
  std::sort(report.ns.begin(), report.ns.end());
  summarize(report);
  return report;
}

void write_report_csv(const ExperimentReport& report, std::ostream& out) {
  out << "subject,scheme,n,trial,auc\n";
  for (const auto& r : report.results) {
    out << r.subject << ',' << scheme_name(r.scheme) << ',' << r.n << ',' << r.trial << ','
        << text::format_double(r.auc) << '\n';
  }
}

void write_report_markdown(const ExperimentReport& report, std::ostream& out) {
  struct Column {
    std::size_t n;
    Scheme scheme;
  };
  std::vector<Column> columns;
  for (std::size_t n : report.ns) {
    for (Scheme s : report.schemes) {
      if (!(s == Scheme::kSubjectSpecific && n == 0)) columns.push_back({n, s});
    }
  }
  out << "# Seizure detection AUC (mean ± std over " << report.trials << " trials)\n\n";
  out << "| Subject |";
  for (const auto& c : columns) out << ' ' << c.n << "-shot " << scheme_name(c.scheme) << " |";
  out << "\n|---|";
  for (std::size_t k = 0; k < columns.size(); ++k) out << "---|";
  out << '\n';
  for (const auto& subject : report.subjects) {
    out << "| " << subject << " |";
    for (const auto& c : columns) {
      const CellSummary* cell = report.find(subject, c.scheme, c.n);
      if (cell && cell->available) {
        out << ' ' << fixed3(cell->mean) << " ± " << fixed3(cell->stddev) << " |";
      } else {
        out << " N/A |";
      }
    }
    out << '\n';
  }
  out << "| Average |";
  for (const auto& c : columns) {
    // Per-trial averages over the subjects with a result in that trial.
    std::vector<double> per_trial;
    for (std::size_t trial = 0; trial < report.trials; ++trial) {
      std::vector<double> v;
      for (const auto& r : report.results) {
        if (r.scheme == c.scheme && r.n == c.n && r.trial == trial) v.push_back(r.auc);
      }
      if (!v.empty()) per_trial.push_back(mean_of(v));
    }
    const double avg = report.average(c.scheme, c.n);
    if (std::isnan(avg)) {
      out << " N/A |";
    } else {
      out << ' ' << fixed3(avg) << " ± " << fixed3(population_std(per_trial)) << " |";
    }
  }
  out << "\n\n## Settings\n\n```\n";
  for (const auto& [k, v] : report.config) out << k << " = " << v << '\n';
  if (!report.trial_seeds.empty()) {
    out << "trial_seeds = ";
    for (std::size_t t = 0; t < report.trial_seeds.size(); ++t) out << (t ? "," : "") << report.trial_seeds[t];
    out << '\n';
  }
  out << "```\n";
}

}  // namespace szad
