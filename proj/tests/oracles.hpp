#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "szad/rng.hpp"

namespace oracle {

/// One-sided periodogram energies by direct DFT, scaled so that they sum to
/// the mean of squares.
inline std::vector<double> naive_periodogram(std::span<const double> x) {
  const std::size_t d = x.size();
  std::vector<double> p(d / 2 + 1, 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t n = 0; n < d; ++n) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k * n % d) / static_cast<double>(d);
      s += x[n] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    const bool single = k == 0 || (d % 2 == 0 && k == d / 2);
    p[k] = (single ? 1.0 : 2.0) * std::norm(s) / static_cast<double>(d * d);
  }
  return p;
}

inline double naive_band_power(std::span<const double> x, double fs, double lo, double hi) {
  const auto p = naive_periodogram(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(x.size());
    if (f >= lo && f < hi) sum += p[k];
  }
  return sum;
}

/// Fraction of positive-negative pairs ranked correctly, ties counted half.
inline double pairwise_auc(std::span<const double> s, std::span<const int> y) {
  double hits = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) hits += 1.0;
      else if (s[i] == s[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

inline Eigen::MatrixXd gaussian(szad::Rng& rng, Eigen::Index rows, Eigen::Index cols, double mean = 0.0,
                                double sd = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = mean + sd * rng.normal();
  }
  return m;
}

}  // namespace oracle
