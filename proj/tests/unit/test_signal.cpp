#include <doctest.h>

#include <sstream>

#include "../oracles.hpp"
#include "szad/error.hpp"
#include "szad/features.hpp"
#include "szad/gbtree.hpp"
#include "szad/signal.hpp"

using namespace szad;

namespace {

CohortConfig small_cohort(std::uint64_t seed) {
  CohortConfig cfg;
  cfg.n_subjects = 3;
  cfg.duration_s = 20.0;
  cfg.blocks_per_subject = 3;
  cfg.seed = seed;
  return cfg;
}

Recording ramp_recording(std::size_t samples, const std::vector<std::uint8_t>& labels) {
  Recording rec;
  rec.subject_id = "r";
  rec.channels.assign(2, std::vector<double>(samples));
  for (std::size_t t = 0; t < samples; ++t) {
    rec.channels[0][t] = static_cast<double>(t);
    rec.channels[1][t] = -static_cast<double>(t);
  }
  rec.labels = labels;
  return rec;
}

std::string to_csv(const Recording& rec) {
  std::ostringstream out;
  write_recording(rec, out);
  return out.str();
}

double channel_variance(const std::vector<double>& x) { return variance(x); }

}  // namespace

TEST_CASE("cohort generation is deterministic") {
  const auto a = generate_synthetic_cohort(small_cohort(7));
  const auto b = generate_synthetic_cohort(small_cohort(7));
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_csv(a[i]) == to_csv(b[i]));
  const auto c = generate_synthetic_cohort(small_cohort(8));
  CHECK(to_csv(a[0]) != to_csv(c[0]));
}

TEST_CASE("cohort has alternating seizure blocks") {
  const auto cfg = small_cohort(1);
  for (const auto& rec : generate_synthetic_cohort(cfg)) {
    rec.validate();
    CHECK(rec.num_channels() == cfg.channels);
    CHECK(rec.num_samples() == static_cast<std::size_t>(cfg.duration_s * cfg.sample_rate_hz) * cfg.blocks_per_subject);
    std::size_t onsets = 0;
    for (std::size_t t = 0; t < rec.labels.size(); ++t) {
      if (rec.labels[t] == 1 && (t == 0 || rec.labels[t - 1] == 0)) ++onsets;
    }
    CHECK(onsets == cfg.blocks_per_subject);
    CHECK(rec.labels.front() == 1);
  }
}

TEST_CASE("zero shift gives matching channel variances") {
  CohortConfig cfg;
  cfg.n_subjects = 2;
  cfg.duration_s = 30.0;
  cfg.blocks_per_subject = 2;
  cfg.shift_strength = 0.0;
  cfg.seed = 3;
  const auto recs = generate_synthetic_cohort(cfg);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const double v0 = channel_variance(recs[0].channels[c]);
    const double v1 = channel_variance(recs[1].channels[c]);
    CHECK(std::abs(v0 - v1) / std::max(v0, v1) < 0.05);
  }
}

TEST_CASE("seizure windows carry more 80-150 Hz power") {
  auto cfg = small_cohort(5);
  cfg.seizure_gain = 4.0;
  for (const auto& rec : generate_synthetic_cohort(cfg)) {
    double seiz = 0.0, rest = 0.0;
    std::size_t ns = 0, nr = 0;
    for (const auto& w : segment(rec, 1.0)) {
      const Eigen::VectorXd row = w.samples.row(0);
      const double p = oracle::naive_band_power(std::span<const double>(row.data(), row.size()), 500.0, 80.0, 150.0);
      (w.label == 1 ? seiz : rest) += p;
      ++(w.label == 1 ? ns : nr);
    }
    CHECK(seiz / static_cast<double>(ns) >= 2.0 * rest / static_cast<double>(nr));
  }
}

TEST_CASE("invalid cohort config names the field") {
  auto cfg = small_cohort(1);
  cfg.n_subjects = 1;
  try {
    generate_synthetic_cohort(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("n_subjects") != std::string::npos);
  }
  cfg = small_cohort(1);
  cfg.shift_strength = -1.0;
  CHECK_THROWS_AS(generate_synthetic_cohort(cfg), Error);
}

TEST_CASE("segment counts and labels") {
  SUBCASE("10 s at 500 Hz gives 10 windows of 500 samples") {
    const auto rec = ramp_recording(5000, std::vector<std::uint8_t>(5000, 0));
    const auto windows = segment(rec, 1.0);
    REQUIRE(windows.size() == 10);
    for (const auto& w : windows) {
      CHECK(w.samples.cols() == 500);
      CHECK(w.samples.rows() == 2);
      CHECK(w.label == 0);
    }
  }
  SUBCASE("half seizure window is labelled seizure") {
    std::vector<std::uint8_t> labels(500, 0);
    std::fill(labels.begin(), labels.begin() + 250, 1);
    CHECK(segment(ramp_recording(500, labels), 1.0).at(0).label == 1);
    std::fill(labels.begin(), labels.end(), 0);
    std::fill(labels.begin(), labels.begin() + 249, 1);
    CHECK(segment(ramp_recording(500, labels), 1.0).at(0).label == 0);
  }
  SUBCASE("trailing partial window is dropped and samples are preserved") {
    const auto rec = ramp_recording(1234, std::vector<std::uint8_t>(1234, 0));
    const auto windows = segment(rec, 1.0);
    REQUIRE(windows.size() == 2);
    std::size_t t = 0;
    for (const auto& w : windows) {
      CHECK(w.index == t / 500);
      for (Eigen::Index k = 0; k < w.samples.cols(); ++k, ++t) {
        CHECK(w.samples(0, k) == rec.channels[0][t]);
        CHECK(w.samples(1, k) == rec.channels[1][t]);
      }
    }
    CHECK(t == 1000);
  }
  SUBCASE("window longer than recording") {
    const auto rec = ramp_recording(100, std::vector<std::uint8_t>(100, 0));
    CHECK_THROWS_AS(segment(rec, 1.0), Error);
  }
}

TEST_CASE("recording CSV round trip and errors") {
  const auto rec = generate_synthetic_cohort(small_cohort(2)).at(1);
  std::istringstream in(to_csv(rec));
  const auto back = read_recording(in);
  CHECK(back.subject_id == rec.subject_id);
  CHECK(back.sample_rate_hz == rec.sample_rate_hz);
  CHECK(back.labels == rec.labels);
  for (std::size_t c = 0; c < rec.num_channels(); ++c) {
    for (std::size_t t = 0; t < rec.num_samples(); ++t) {
      CHECK(std::abs(back.channels[c][t] - rec.channels[c][t]) <= 1e-12 * std::max(1.0, std::abs(rec.channels[c][t])));
    }
  }

  std::istringstream bad_label("subject,s,rate,500,channels,1\n0.5,0\n0.25,2\n");
  try {
    read_recording(bad_label);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream zero_rate("subject,s,rate,0,channels,1\n0.5,0\n");
  try {
    read_recording(zero_rate);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  std::istringstream ragged("subject,s,rate,500,channels,2\n0.5,1.0,0\n0.5,0\n");
  CHECK_THROWS_AS(read_recording(ragged), Error);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_recording(empty), Error);
}

TEST_CASE("domain shift is detectable from raw features") {
  CohortConfig cfg;
  cfg.n_subjects = 4;
  cfg.duration_s = 40.0;
  cfg.blocks_per_subject = 3;
  cfg.shift_strength = 1.0;
  cfg.seed = 9;
  std::vector<FeatureMatrix> subjects;
  for (const auto& rec : generate_synthetic_cohort(cfg)) {
    subjects.push_back(extract_feature_matrix(segment(rec, 1.0), rec.sample_rate_hz));
  }
  // One-vs-rest boosted trees on even rows, scored on odd rows.
  const Eigen::Index per = subjects[0].rows();
  const Eigen::Index f = subjects[0].dim();
  Eigen::MatrixXd scores(per / 2 * 4, 4);
  GbtConfig gcfg;
  gcfg.n_trees = 30;
  for (std::size_t target = 0; target < 4; ++target) {
    WeightedDataset data;
    data.x.resize(per / 2 * 4, f);
    Eigen::MatrixXd test(per / 2 * 4, f);
    Eigen::Index r = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      for (Eigen::Index i = 0; i + 1 < per; i += 2, ++r) {
        data.x.row(r) = subjects[s].values.row(i);
        test.row(r) = subjects[s].values.row(i + 1);
        data.y.push_back(s == target ? 1 : 0);
        data.w.push_back(1.0);
      }
    }
    scores.col(static_cast<Eigen::Index>(target)) = gbt_raw_scores(fit_gbt(data, gcfg), test);
  }
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    if (best == r / (per / 2)) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(scores.rows()) > 1.0 / 4.0 + 0.2);
}
