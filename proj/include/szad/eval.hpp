#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "szad/adaptation.hpp"
#include "szad/features.hpp"
#include "szad/gbtree.hpp"

namespace szad {

/// Window rows [begin, end).
struct Block {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const Block&, const Block&) = default;
};

/// One seizure run plus the following non-seizure run per block; a leading
/// non-seizure prefix joins the first block.
std::vector<Block> block_partition(std::span<const int> labels);

enum class Scheme : std::uint8_t {
  kSubjectSpecific,  // target blocks only, raw features
  kCrossSubject,     // target + reweighted sources, adapted latents
  kCrossSubjectRaw,  // target + reweighted sources, raw features, no adaptation
};

std::string_view scheme_name(Scheme s);
/// Accepts SS, CS, CS-raw (case-insensitive). Throws kConfig otherwise.
Scheme parse_scheme(std::string_view name);

struct NShotPlan {
  std::string target;
  std::size_t n = 0;
  Scheme scheme = Scheme::kCrossSubject;
  double source_weight = 0.01;
  double target_weight = 1.0;
};

struct RowRef {
  std::size_t subject = 0;
  std::size_t row = 0;
  double weight = 1.0;
};

struct NShotSplit {
  std::size_t target = 0;
  std::vector<RowRef> train;
  std::vector<std::size_t> test_rows;        // target rows
  std::vector<std::size_t> target_visible;   // target rows the adaptation may see (unlabeled)
};

/// Train/test construction for one plan. The 0-shot plan has no target
/// training rows and gives sources weight 1.
NShotSplit build_nshot(std::span<const FeatureMatrix> cohort, const NShotPlan& plan);

/// Mann-Whitney AUC with average ranks for ties. Throws kLabel for one class.
double auc(std::span<const double> scores, std::span<const int> labels);

struct ExperimentConfig {
  std::vector<std::size_t> ns{0, 1, 2, 3};
  std::vector<Scheme> schemes{Scheme::kSubjectSpecific, Scheme::kCrossSubject};
  std::vector<std::string> targets;  // empty: every subject
  std::size_t trials = 5;
  std::vector<std::uint64_t> trial_seeds;  // empty: derived from seed
  std::uint64_t seed = 0;
  double source_weight = 0.01;
  double target_weight = 1.0;
  std::size_t threads = 1;
  AdaptationConfig adaptation;
  GbtConfig gbt;
};

struct TrialResult {
  std::string subject;
  Scheme scheme = Scheme::kCrossSubject;
  std::size_t n = 0;
  std::size_t trial = 0;
  double auc = 0.0;
};

struct CellSummary {
  std::string subject;
  Scheme scheme = Scheme::kCrossSubject;
  std::size_t n = 0;
  bool available = false;  // false renders as N/A
  double mean = 0.0;
  double stddev = 0.0;     // population std over trials
  std::size_t count = 0;
};

struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> config;  // resolved settings echo
  std::vector<std::uint64_t> trial_seeds;
  std::size_t trials = 0;
  std::vector<std::string> subjects;
  std::vector<std::size_t> ns;
  std::vector<Scheme> schemes;
  std::vector<TrialResult> results;  // ordered by subject, scheme, n, trial
  std::vector<CellSummary> cells;    // ordered by subject, scheme, n

  const CellSummary* find(const std::string& subject, Scheme scheme, std::size_t n) const;
  /// Mean of the available per-subject means, or NaN.
  double average(Scheme scheme, std::size_t n) const;
};

/// Settings echo for an ExperimentConfig, one `key = value` pair per field.
std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& cfg);

ExperimentReport run_experiment(const std::vector<FeatureMatrix>& cohort, const ExperimentConfig& cfg);

/// Rebuilds `cells` from `results` for every (subject, scheme, n).
void summarize(ExperimentReport& report);

/// `subject,scheme,n,trial,auc`
ExperimentReport read_report_csv(std::istream& in);
void write_report_csv(const ExperimentReport& report, std::ostream& out);
/// Subject rows, one column per (n, scheme), mean +- std, plus an average row
/// and the settings echo.
void write_report_markdown(const ExperimentReport& report, std::ostream& out);

}  // namespace szad
