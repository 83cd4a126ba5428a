#include "szad/features.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "szad/error.hpp"
#include "szad/text.hpp"

namespace szad {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

  // Squared magnitudes |X_k|^2 for k = 0..n/2.
  void power(std::span<const double> x, std::vector<double>& out) {
    std::copy(x.begin(), x.end(), in_);
    fftw_execute(plan_);
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

RealFft& fft_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

void check_band(double fs, Band band) {
  require(band.lo_hz >= 0.0 && band.lo_hz < band.hi_hz, ErrorKind::kBand,
          "band [" + text::format_double(band.lo_hz) + ", " + text::format_double(band.hi_hz) + ") is empty");
  require(band.hi_hz <= fs / 2.0, ErrorKind::kBand,
          "band upper edge " + text::format_double(band.hi_hz) + " Hz exceeds Nyquist " + text::format_double(fs / 2.0));
}

}  // namespace

double line_length(std::span<const double> x) {
  require(x.size() >= 2, ErrorKind::kSize, "line_length needs at least 2 samples");
  double acc = 0.0;
  for (std::size_t n = 1; n < x.size(); ++n) acc += std::abs(x[n] - x[n - 1]);
  return acc / static_cast<double>(x.size());
}

double total_power(std::span<const double> x) {
  require(!x.empty(), ErrorKind::kSize, "total_power of an empty window");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  require(!x.empty(), ErrorKind::kSize, "variance of an empty window");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size());
}

std::vector<double> periodogram(std::span<const double> x) {
  const std::size_t d = x.size();
  require(d >= 2, ErrorKind::kSize, "periodogram needs at least 2 samples");
  std::vector<double> spec;
  fft_for(d).power(x, spec);
  const double scale = 1.0 / (static_cast<double>(d) * static_cast<double>(d));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const bool unpaired = k == 0 || (d % 2 == 0 && k == d / 2);
    spec[k] *= unpaired ? scale : 2.0 * scale;
  }
  return spec;
}

double band_power(std::span<const double> spectrum, std::size_t d, double fs, Band band) {
  require(d >= 2, ErrorKind::kSize, "band_power needs at least 2 samples");
  require(spectrum.size() == d / 2 + 1, ErrorKind::kShape, "spectrum length does not match window size");
  check_band(fs, band);
  const double bin_hz = fs / static_cast<double>(d);
  double acc = 0.0;
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= band.lo_hz && f < band.hi_hz) acc += spectrum[k];
  }
  return acc;
}

double band_power(std::span<const double> x, double fs, Band band) {
  require(x.size() >= 2, ErrorKind::kSize, "band_power needs at least 2 samples");
  check_band(fs, band);
  const auto spec = periodogram(x);
  return band_power(spec, x.size(), fs, band);
}

FeatureVector extract_features(const Window& w, double fs) {
  const auto channels = static_cast<std::size_t>(w.samples.rows());
  const auto d = static_cast<std::size_t>(w.samples.cols());
  FeatureVector out;
  out.values.resize(static_cast<Eigen::Index>(channels * kFeaturesPerChannel));
  out.label = w.label;
  out.subject_id = w.subject_id;
  std::vector<double> x(d);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < d; ++i) x[i] = w.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
    const auto base = static_cast<Eigen::Index>(c * kFeaturesPerChannel);
    out.values[base + 0] = line_length(x);
    out.values[base + 1] = total_power(x);
    out.values[base + 2] = variance(x);
    const auto spec = periodogram(x);
    for (std::size_t b = 0; b < kBands.size(); ++b) {
      out.values[base + 3 + static_cast<Eigen::Index>(b)] = band_power(spec, d, fs, kBands[b]);
    }
  }
  return out;
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.subject_id = subject_id;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < static_cast<std::size_t>(values.rows()), ErrorKind::kShape, "row index out of range");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

FeatureMatrix extract_feature_matrix(const std::vector<Window>& windows, double fs) {
  require(!windows.empty(), ErrorKind::kData, "no windows to extract features from");
  FeatureMatrix m;
  m.subject_id = windows.front().subject_id;
  const auto dim = windows.front().samples.rows() * static_cast<Eigen::Index>(kFeaturesPerChannel);
  m.values.resize(static_cast<Eigen::Index>(windows.size()), dim);
  m.labels.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    require(windows[i].subject_id == m.subject_id, ErrorKind::kData, "windows from more than one subject");
    const auto fv = extract_features(windows[i], fs);
    require(fv.values.size() == dim, ErrorKind::kShape, "windows differ in channel count");
    m.values.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
    m.labels.push_back(fv.label);
  }
  return m;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& x) const {
  require(x.cols() == mean.size(), ErrorKind::kShape,
          "normalizer fitted on " + std::to_string(mean.size()) + " dims, input has " + std::to_string(x.cols()));
  return (x.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
}

FeatureMatrix Normalizer::apply(const FeatureMatrix& m) const {
  FeatureMatrix out = m;
  out.values = apply(m.values);
  return out;
}

Normalizer fit_normalizer(std::span<const Eigen::MatrixXd> train) {
  require(!train.empty(), ErrorKind::kData, "normalizer needs training data");
  const Eigen::Index dim = train.front().cols();
  Eigen::Index rows = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto& m : train) {
    require(m.cols() == dim, ErrorKind::kShape, "training matrices differ in dimension");
    rows += m.rows();
    sum += m.colwise().sum().transpose();
  }
  require(rows >= 2, ErrorKind::kData, "normalizer needs at least 2 rows");
  Normalizer n;
  n.mean = sum / static_cast<double>(rows);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(dim);
  for (const auto& m : train) ss += (m.rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  n.stddev = (ss / static_cast<double>(rows)).array().sqrt();
  for (Eigen::Index f = 0; f < dim; ++f) {
    if (!(n.stddev[f] >= 1e-12)) n.stddev[f] = 1.0;
  }
  return n;
}

Normalizer fit_normalizer(const Eigen::MatrixXd& train) {
  return fit_normalizer(std::span<const Eigen::MatrixXd>(&train, 1));
}

void write_feature_matrix(const FeatureMatrix& m, std::ostream& out) {
  require(static_cast<std::size_t>(m.rows()) == m.labels.size(), ErrorKind::kShape, "label count mismatch");
  out << "subject," << m.subject_id << ",dim," << m.dim() << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index f = 0; f < m.dim(); ++f) {
      line += text::format_double(m.values(r, f));
      line += ',';
    }
    line += m.labels[static_cast<std::size_t>(r)] ? '1' : '0';
    line += '\n';
    out << line;
  }
}

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_feature_matrix(m, out);
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path.string());
}

FeatureMatrix read_feature_matrix(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kParse, "line 1: missing header");
  const auto header = text::split(text::trim(line), ',');
  require(header.size() == 4 && header[0] == "subject" && header[2] == "dim", ErrorKind::kParse,
          "line 1: expected header subject,<id>,dim,<F>");
  FeatureMatrix m;
  m.subject_id = std::string(header[1]);
  std::size_t dim = 0;
  require(text::parse_size(header[3], dim) && dim >= 1, ErrorKind::kParse, "line 1: bad dimension");
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = text::split(trimmed, ',');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    require(fields.size() == dim + 1, ErrorKind::kParse,
            where + "expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t f = 0; f < dim; ++f) {
      double v = 0.0;
      require(text::parse_double(fields[f], v) && std::isfinite(v), ErrorKind::kParse,
              where + "bad feature value '" + std::string(fields[f]) + "'");
      flat.push_back(v);
    }
    const auto label = text::trim(fields[dim]);
    require(label == "0" || label == "1", ErrorKind::kParse,
            where + "label must be 0 or 1, got '" + std::string(label) + "'");
    m.labels.push_back(label == "1" ? 1 : 0);
  }
  const auto rows = static_cast<Eigen::Index>(m.labels.size());
  m.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, static_cast<Eigen::Index>(dim));
  return m;
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  try {
    return read_feature_matrix(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

}  // namespace szad
