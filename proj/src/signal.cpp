#include "szad/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "szad/error.hpp"
#include "szad/rng.hpp"
#include "szad/text.hpp"

namespace szad {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Generative parameters of one subject. With shift_strength = 0 every subject
// gets exactly the base values.
struct SubjectProfile {
  double gain = 1.0;
  double ar_coefficient = 0.75;
  double white_floor = 0.3;
  double offset = 0.0;
  double alpha_hz = 10.0;
};

SubjectProfile draw_profile(const CohortConfig& cfg, std::size_t subject) {
  Rng rng(derive_seed(cfg.seed, 0x5B1EC7ULL + subject));
  const double s = cfg.shift_strength;
  SubjectProfile p;
  p.gain = std::exp(0.8 * s * rng.normal());
  p.ar_coefficient = std::clamp(0.75 + 0.12 * s * rng.normal(), 0.3, 0.95);
  p.white_floor = 0.3 * std::exp(0.6 * s * rng.normal());
  p.offset = 20.0 * s * rng.normal();
  p.alpha_hz = std::clamp(10.0 + 1.5 * s * rng.normal(), 8.0, 12.5);
  return p;
}

// Per-channel gains shared by all subjects so that channels differ but
// subjects only differ through the profile.
std::vector<double> channel_gains(const CohortConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0xC4A77E1ULL));
  std::vector<double> gains(cfg.channels);
  for (auto& g : gains) g = std::exp(0.2 * rng.normal());
  return gains;
}

// Smooth on/off envelope: Hann ramps of `ramp` samples at both ends.
double envelope(std::size_t i, std::size_t len, std::size_t ramp) {
  if (ramp == 0 || len < 2 * ramp) return 1.0;
  if (i < ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
  if (i >= len - ramp) {
    const double k = static_cast<double>(len - 1 - i);
    return 0.5 - 0.5 * std::cos(std::numbers::pi * k / ramp);
  }
  return 1.0;
}

struct Burst {
  std::size_t start = 0;
  std::size_t length = 0;
  double amplitude = 0.0;
  double freqs[3] = {0.0, 0.0, 0.0};
  double phases[3] = {0.0, 0.0, 0.0};
};

void add_burst(std::vector<double>& x, const Burst& b, double fs) {
  const std::size_t ramp = std::min<std::size_t>(b.length / 4, static_cast<std::size_t>(0.05 * fs));
  for (std::size_t i = 0; i < b.length && b.start + i < x.size(); ++i) {
    const double t = static_cast<double>(i) / fs;
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += std::sin(kTwoPi * b.freqs[k] * t + b.phases[k]);
    x[b.start + i] += b.amplitude * envelope(i, b.length, ramp) * v / std::sqrt(1.5);
  }
}

Recording generate_subject(const CohortConfig& cfg, std::size_t subject,
                           const std::vector<double>& ch_gains) {
  const SubjectProfile profile = draw_profile(cfg, subject);
  Rng rng(derive_seed(cfg.seed, 0x516E41ULL + subject));
  const double fs = cfg.sample_rate_hz;

  const auto block_len = static_cast<std::size_t>(std::llround(cfg.duration_s * fs));
  const auto seizure_len = static_cast<std::size_t>(
      std::llround(std::round(cfg.duration_s * cfg.seizure_fraction) * fs));
  const std::size_t total = block_len * cfg.blocks_per_subject;

  Recording rec;
  char id[32];
  std::snprintf(id, sizeof(id), "subject_%02zu", subject);
  rec.subject_id = id;
  rec.sample_rate_hz = fs;
  rec.labels.assign(total, 0);
  for (std::size_t b = 0; b < cfg.blocks_per_subject; ++b) {
    std::fill_n(rec.labels.begin() + static_cast<std::ptrdiff_t>(b * block_len), seizure_len, 1);
  }

  // Unit-scale source activity per channel, before subject gain and offset.
  std::vector<std::vector<double>> source(cfg.channels, std::vector<double>(total, 0.0));
  const double innovation = std::sqrt(1.0 - profile.ar_coefficient * profile.ar_coefficient);
  for (auto& x : source) {
    double state = rng.normal();
    const double alpha_phase = rng.uniform(0.0, kTwoPi);
    for (std::size_t t = 0; t < total; ++t) {
      state = profile.ar_coefficient * state + innovation * rng.normal();
      const double alpha = 0.5 * std::sin(kTwoPi * profile.alpha_hz * static_cast<double>(t) / fs + alpha_phase);
      x[t] = state + profile.white_floor * rng.normal() + alpha;
    }
  }

  const auto chunk = static_cast<std::size_t>(0.5 * fs);
  for (std::size_t b = 0; b < cfg.blocks_per_subject; ++b) {
    const std::size_t block_start = b * block_len;

    // Seizure event: its own dominant frequency, strength and duty cycle.
    const double centre = rng.uniform(70.0, 190.0);
    const double strength = cfg.seizure_gain * rng.uniform(0.5, 1.5);
    const double duty = rng.uniform(0.5, 0.9);
    const double rhythm_hz = rng.uniform(3.0, 8.0);
    const double rhythm_amp = rng.uniform(0.0, 1.5);
    for (auto& x : source) {
      for (std::size_t c = 0; c + chunk <= seizure_len; c += chunk) {
        if (rng.uniform() >= duty) continue;
        Burst burst;
        burst.start = block_start + c;
        burst.length = chunk;
        burst.amplitude = strength * rng.uniform(0.6, 1.0);
        for (int k = 0; k < 3; ++k) {
          burst.freqs[k] = std::clamp(centre + rng.uniform(-20.0, 20.0), 60.0, 200.0);
          burst.phases[k] = rng.uniform(0.0, kTwoPi);
        }
        add_burst(x, burst, fs);
      }
      const double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < seizure_len; ++i) {
        const double t = static_cast<double>(i) / fs;
        x[block_start + i] += rhythm_amp * std::sin(kTwoPi * rhythm_hz * t + phase);
      }
    }

    // Background segment: sporadic interictal high-frequency bursts and slow
    // movement-like transients.
    const auto one_second = static_cast<std::size_t>(fs);
    for (std::size_t s = seizure_len; s + one_second <= block_len; s += one_second) {
      if (rng.uniform() < 0.08) {
        Burst burst;
        burst.length = static_cast<std::size_t>(rng.uniform(0.1, 0.35) * fs);
        burst.start = block_start + s + rng.index(one_second - burst.length);
        burst.amplitude = cfg.seizure_gain * rng.uniform(0.4, 1.0);
        const double f = rng.uniform(60.0, 200.0);
        for (int k = 0; k < 3; ++k) {
          burst.freqs[k] = std::clamp(f + rng.uniform(-10.0, 10.0), 60.0, 200.0);
          burst.phases[k] = rng.uniform(0.0, kTwoPi);
        }
        for (auto& x : source) add_burst(x, burst, fs);
      }
      if (rng.uniform() < 0.05) {
        const double f = rng.uniform(1.0, 3.0);
        const double amp = rng.uniform(2.0, 4.0);
        for (auto& x : source) {
          for (std::size_t i = 0; i < one_second; ++i) {
            const double t = static_cast<double>(i) / fs;
            x[block_start + s + i] += amp * std::sin(std::numbers::pi * i / one_second) *
                                      std::sin(kTwoPi * f * t);
          }
        }
      }
    }
  }

  rec.channels.resize(cfg.channels);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    auto& out = rec.channels[c];
    out.resize(total);
    const double g = profile.gain * ch_gains[c];
    for (std::size_t t = 0; t < total; ++t) out[t] = g * source[c][t] + profile.offset;
  }
  return rec;
}

}  // namespace

void Recording::validate() const {
  require(sample_rate_hz > 0.0 && std::isfinite(sample_rate_hz), ErrorKind::kConfig,
          "sample_rate_hz must be positive");
  require(!channels.empty(), ErrorKind::kConfig, "recording needs at least one channel");
  for (std::size_t c = 0; c < channels.size(); ++c) {
    require(channels[c].size() == labels.size(), ErrorKind::kShape,
            "channel " + std::to_string(c) + " length differs from label length");
  }
  for (auto l : labels) require(l <= 1, ErrorKind::kLabel, "labels must be 0 or 1");
}

void CohortConfig::validate() const {
  require(n_subjects >= 2, ErrorKind::kConfig, "n_subjects must be >= 2");
  require(channels >= 1, ErrorKind::kConfig, "channels must be >= 1");
  require(duration_s > 0.0, ErrorKind::kConfig, "duration_s must be positive");
  require(blocks_per_subject >= 2, ErrorKind::kConfig, "blocks_per_subject must be >= 2");
  require(shift_strength >= 0.0, ErrorKind::kConfig, "shift_strength must be non-negative");
  require(seizure_gain > 1.0, ErrorKind::kConfig, "seizure_gain must be > 1");
  require(sample_rate_hz > 0.0, ErrorKind::kConfig, "sample_rate_hz must be positive");
  require(seizure_fraction > 0.0 && seizure_fraction < 1.0, ErrorKind::kConfig,
          "seizure_fraction must lie in (0, 1)");
  const double seizure_s = std::round(duration_s * seizure_fraction);
  require(seizure_s >= 1.0 && seizure_s < duration_s, ErrorKind::kConfig,
          "duration_s too short for a seizure and a rest segment");
}

std::vector<Recording> generate_synthetic_cohort(const CohortConfig& cfg) {
  cfg.validate();
  const auto gains = channel_gains(cfg);
  std::vector<Recording> out;
  out.reserve(cfg.n_subjects);
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) out.push_back(generate_subject(cfg, s, gains));
  return out;
}

std::size_t window_size(double sample_rate_hz, double window_seconds) {
  require(window_seconds > 0.0, ErrorKind::kConfig, "window_seconds must be positive");
  require(sample_rate_hz > 0.0, ErrorKind::kConfig, "sample_rate_hz must be positive");
  return static_cast<std::size_t>(std::llround(sample_rate_hz * window_seconds));
}

std::vector<Window> segment(const Recording& rec, double window_seconds) {
  rec.validate();
  const std::size_t d = window_size(rec.sample_rate_hz, window_seconds);
  const std::size_t total = rec.num_samples();
  require(d >= 1 && d <= total, ErrorKind::kData,
          "window of " + std::to_string(d) + " samples exceeds recording length " + std::to_string(total));
  const std::size_t count = total / d;
  const std::size_t channels = rec.num_channels();
  std::vector<Window> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window& win = out[w];
    win.samples.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(d));
    std::size_t seizure = 0;
    for (std::size_t i = 0; i < d; ++i) seizure += rec.labels[w * d + i];
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < d; ++i) {
        win.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = rec.channels[c][w * d + i];
      }
    }
    win.label = 2 * seizure >= d ? 1 : 0;
    win.subject_id = rec.subject_id;
    win.index = w;
  }
  return out;
}

void write_recording(const Recording& rec, std::ostream& out) {
  rec.validate();
  out << "subject," << rec.subject_id << ",rate," << text::format_double(rec.sample_rate_hz)
      << ",channels," << rec.num_channels() << '\n';
  std::string line;
  for (std::size_t t = 0; t < rec.num_samples(); ++t) {
    line.clear();
    for (const auto& ch : rec.channels) {
      line += text::format_double(ch[t]);
      line += ',';
    }
    line += rec.labels[t] ? '1' : '0';
    line += '\n';
    out << line;
  }
}

void write_recording(const Recording& rec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_recording(rec, out);
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path.string());
}

Recording read_recording(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kParse, "line 1: missing header");
  const auto header = text::split(text::trim(line), ',');
  require(header.size() == 6 && header[0] == "subject" && header[2] == "rate" && header[4] == "channels",
          ErrorKind::kParse, "line 1: expected header subject,<id>,rate,<hz>,channels,<C>");
  Recording rec;
  rec.subject_id = std::string(header[1]);
  require(text::parse_double(header[3], rec.sample_rate_hz), ErrorKind::kParse, "line 1: bad sample rate");
  require(rec.sample_rate_hz > 0.0, ErrorKind::kConfig, "line 1: sample rate must be positive");
  std::size_t channels = 0;
  require(text::parse_size(header[5], channels), ErrorKind::kParse, "line 1: bad channel count");
  require(channels >= 1, ErrorKind::kConfig, "line 1: channel count must be >= 1");
  rec.channels.assign(channels, {});

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = text::split(trimmed, ',');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    require(fields.size() == channels + 1, ErrorKind::kParse,
            where + "expected " + std::to_string(channels + 1) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < channels; ++c) {
      double v = 0.0;
      require(text::parse_double(fields[c], v) && std::isfinite(v), ErrorKind::kParse,
              where + "bad sample value '" + std::string(fields[c]) + "'");
      rec.channels[c].push_back(v);
    }
    const auto label = text::trim(fields[channels]);
    require(label == "0" || label == "1", ErrorKind::kParse,
            where + "label must be 0 or 1, got '" + std::string(label) + "'");
    rec.labels.push_back(label == "1" ? 1 : 0);
  }
  return rec;
}

Recording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  try {
    return read_recording(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

}  // namespace szad
