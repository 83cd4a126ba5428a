#include "szad/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>

#include "szad/error.hpp"
#include "szad/text.hpp"

namespace szad {
namespace {

struct Entry {
  const char* key;
  std::function<bool(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

bool parse_u64(std::string_view s, std::uint64_t& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no") {
    out = false;
    return true;
  }
  return false;
}

template <class T>
std::string join(const std::vector<T>& v, auto&& fmt) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ',';
    out += fmt(x);
  }
  return out;
}

Entry size_entry(const char* key, std::size_t RunConfig::*field) {
  return {key, [field](RunConfig& c, std::string_view v) { return text::parse_size(v, c.*field); },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

template <class Sub>
Entry size_entry(const char* key, Sub RunConfig::*sub, std::size_t Sub::*field) {
  return {key, [sub, field](RunConfig& c, std::string_view v) { return text::parse_size(v, c.*sub.*field); },
          [sub, field](const RunConfig& c) { return std::to_string(c.*sub.*field); }};
}

Entry real_entry(const char* key, double RunConfig::*field) {
  return {key, [field](RunConfig& c, std::string_view v) { return text::parse_double(v, c.*field); },
          [field](const RunConfig& c) { return text::format_double(c.*field); }};
}

template <class Sub>
Entry real_entry(const char* key, Sub RunConfig::*sub, double Sub::*field) {
  return {key, [sub, field](RunConfig& c, std::string_view v) { return text::parse_double(v, c.*sub.*field); },
          [sub, field](const RunConfig& c) { return text::format_double(c.*sub.*field); }};
}

Entry string_entry(const char* key, std::string RunConfig::*field) {
  return {key,
          [field](RunConfig& c, std::string_view v) {
            c.*field = std::string(v);
            return !v.empty();
          },
          [field](const RunConfig& c) { return c.*field; }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"run.seed", [](RunConfig& c, std::string_view v) { return parse_u64(v, c.seed); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back(size_entry("run.threads", &RunConfig::threads));

    t.push_back(size_entry("cohort.n_subjects", &RunConfig::cohort, &CohortConfig::n_subjects));
    t.push_back(size_entry("cohort.channels", &RunConfig::cohort, &CohortConfig::channels));
    t.push_back(real_entry("cohort.duration_s", &RunConfig::cohort, &CohortConfig::duration_s));
    t.push_back(real_entry("cohort.seizure_fraction", &RunConfig::cohort, &CohortConfig::seizure_fraction));
    t.push_back(size_entry("cohort.blocks_per_subject", &RunConfig::cohort, &CohortConfig::blocks_per_subject));
    t.push_back(real_entry("cohort.shift_strength", &RunConfig::cohort, &CohortConfig::shift_strength));
    t.push_back(real_entry("cohort.seizure_gain", &RunConfig::cohort, &CohortConfig::seizure_gain));
    t.push_back(real_entry("cohort.sample_rate_hz", &RunConfig::cohort, &CohortConfig::sample_rate_hz));

    t.push_back(real_entry("features.window_seconds", &RunConfig::window_seconds));

    using A = AdaptationConfig;
    t.push_back(size_entry("adapt.latent_dim", &RunConfig::adaptation, &A::latent_dim));
    t.push_back(size_entry("adapt.encoder_hidden", &RunConfig::adaptation, &A::encoder_hidden));
    t.push_back(size_entry("adapt.disc_hidden1", &RunConfig::adaptation, &A::disc_hidden1));
    t.push_back(size_entry("adapt.disc_hidden2", &RunConfig::adaptation, &A::disc_hidden2));
    t.push_back(size_entry("adapt.batch_size", &RunConfig::adaptation, &A::batch_size));
    t.push_back(size_entry("adapt.epochs", &RunConfig::adaptation, &A::epochs));
    t.push_back(real_entry("adapt.learning_rate", &RunConfig::adaptation, &A::learning_rate));
    t.push_back(real_entry("adapt.encoder_learning_rate", &RunConfig::adaptation, &A::encoder_learning_rate));
    t.push_back(real_entry("adapt.decoder_learning_rate", &RunConfig::adaptation, &A::decoder_learning_rate));
    t.push_back(
        real_entry("adapt.discriminator_learning_rate", &RunConfig::adaptation, &A::discriminator_learning_rate));
    t.push_back(real_entry("adapt.alpha", &RunConfig::adaptation, &A::alpha));
    t.push_back(real_entry("adapt.lambda", &RunConfig::adaptation, &A::lambda));
    t.push_back(real_entry("adapt.holdout_fraction", &RunConfig::adaptation, &A::holdout_fraction));
    t.push_back({"adapt.shared_init",
                 [](RunConfig& c, std::string_view v) { return parse_bool(v, c.adaptation.shared_init); },
                 [](const RunConfig& c) { return std::string(c.adaptation.shared_init ? "true" : "false"); }});

    t.push_back(size_entry("gbt.n_trees", &RunConfig::gbt, &GbtConfig::n_trees));
    t.push_back(size_entry("gbt.max_depth", &RunConfig::gbt, &GbtConfig::max_depth));
    t.push_back(real_entry("gbt.learning_rate", &RunConfig::gbt, &GbtConfig::learning_rate));
    t.push_back(real_entry("gbt.min_child_weight", &RunConfig::gbt, &GbtConfig::min_child_weight));
    t.push_back(real_entry("gbt.split_l2", &RunConfig::gbt, &GbtConfig::split_l2));

    t.push_back(real_entry("tsne.perplexity", &RunConfig::tsne, &TsneConfig::perplexity));
    t.push_back(size_entry("tsne.iterations", &RunConfig::tsne, &TsneConfig::iterations));
    t.push_back(real_entry("tsne.learning_rate", &RunConfig::tsne, &TsneConfig::learning_rate));
    t.push_back(real_entry("tsne.early_exaggeration", &RunConfig::tsne, &TsneConfig::early_exaggeration));
    t.push_back(size_entry("tsne.exaggeration_iterations", &RunConfig::tsne, &TsneConfig::exaggeration_iterations));
    t.push_back(size_entry("tsne.momentum_switch", &RunConfig::tsne, &TsneConfig::momentum_switch));
    t.push_back(size_entry("tsne.max_points", &RunConfig::tsne, &TsneConfig::max_points));

    t.push_back({"eval.ns",
                 [](RunConfig& c, std::string_view v) {
                   c.ns.clear();
                   for (auto tok : text::split(v, ',')) {
                     std::size_t n = 0;
                     if (!text::parse_size(text::trim(tok), n)) return false;
                     c.ns.push_back(n);
                   }
                   return !c.ns.empty();
                 },
                 [](const RunConfig& c) { return join(c.ns, [](std::size_t n) { return std::to_string(n); }); }});
    t.push_back({"eval.schemes",
                 [](RunConfig& c, std::string_view v) {
                   c.schemes.clear();
                   for (auto tok : text::split(v, ',')) c.schemes.push_back(parse_scheme(text::trim(tok)));
                   return !c.schemes.empty();
                 },
                 [](const RunConfig& c) {
                   return join(c.schemes, [](Scheme s) { return std::string(scheme_name(s)); });
                 }});
    t.push_back({"eval.targets",
                 [](RunConfig& c, std::string_view v) {
                   c.targets.clear();
                   if (v == "all") return true;
                   for (auto tok : text::split(v, ',')) c.targets.emplace_back(text::trim(tok));
                   return true;
                 },
                 [](const RunConfig& c) {
                   return c.targets.empty() ? std::string("all") : join(c.targets, [](const std::string& s) { return s; });
                 }});
    t.push_back(size_entry("eval.trials", &RunConfig::trials));
    t.push_back(real_entry("eval.source_weight", &RunConfig::source_weight));
    t.push_back(real_entry("eval.target_weight", &RunConfig::target_weight));

    t.push_back(string_entry("paths.data", &RunConfig::data_dir));
    t.push_back(string_entry("paths.features", &RunConfig::features_dir));
    t.push_back(string_entry("paths.model", &RunConfig::model_path));
    t.push_back(string_entry("paths.report", &RunConfig::report_dir));
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  cohort_config().validate();
  adaptation_config().validate();
  gbt.validate();
  require(window_seconds > 0.0 && std::isfinite(window_seconds), ErrorKind::kConfig, "window_seconds must be positive");
  require(window_size(cohort.sample_rate_hz, window_seconds) >= 2, ErrorKind::kConfig,
          "window_seconds gives fewer than 2 samples per window");
  require(window_seconds <= cohort.duration_s * cohort.seizure_fraction, ErrorKind::kConfig,
          "window_seconds exceeds the seizure segment of a block");
  require(threads >= 1, ErrorKind::kConfig, "threads must be >= 1");
  require(trials >= 1, ErrorKind::kConfig, "trials must be >= 1");
  require(!ns.empty() && !schemes.empty(), ErrorKind::kConfig, "eval.ns and eval.schemes must be non-empty");
  require(source_weight > 0.0 && target_weight > 0.0, ErrorKind::kConfig, "sample weights must be positive");
  require(tsne.iterations >= 1 && tsne.perplexity > 0.0 && tsne.learning_rate > 0.0 && tsne.max_points >= 10,
          ErrorKind::kConfig, "invalid t-SNE settings");
  for (std::size_t n : ns) {
    require(n < cohort.blocks_per_subject, ErrorKind::kConfig,
            std::to_string(n) + "-shot needs more than cohort.blocks_per_subject = " +
                std::to_string(cohort.blocks_per_subject) + " blocks");
  }
}

CohortConfig RunConfig::cohort_config() const {
  CohortConfig c = cohort;
  c.seed = seed;
  return c;
}

AdaptationConfig RunConfig::adaptation_config() const {
  AdaptationConfig a = adaptation;
  a.seed = seed;
  return a;
}

TsneConfig RunConfig::tsne_config() const {
  TsneConfig t = tsne;
  t.seed = seed;
  return t;
}

ExperimentConfig RunConfig::experiment_config() const {
  ExperimentConfig e;
  e.ns = ns;
  e.schemes = schemes;
  e.targets = targets;
  e.trials = trials;
  e.seed = seed;
  e.source_weight = source_weight;
  e.target_weight = target_weight;
  e.threads = threads;
  e.adaptation = adaptation_config();
  e.gbt = gbt;
  return e;
}

std::vector<std::pair<std::string, std::string>> RunConfig::describe() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : entries()) out.emplace_back(e.key, e.get(*this));
  return out;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (key != e.key) continue;
    bool ok = false;
    try {
      ok = e.set(cfg, value);
    } catch (const Error& err) {
      throw Error(ErrorKind::kConfig, std::string(key) + ": " + err.detail());
    }
    require(ok, ErrorKind::kConfig, "invalid value '" + std::string(value) + "' for " + std::string(key));
    return;
  }
  fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

void apply_config(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string section = "run";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = text::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      require(s.back() == ']' && s.size() > 2, ErrorKind::kConfig, where + "malformed section header");
      section = std::string(text::trim(s.substr(1, s.size() - 2)));
      continue;
    }
    const auto eq = s.find('=');
    require(eq != std::string_view::npos, ErrorKind::kConfig, where + "expected key = value");
    const std::string key = section + "." + std::string(text::trim(s.substr(0, eq)));
    try {
      set_config_value(cfg, key, text::trim(s.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.kind(), where + e.detail());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open config file " + path.string());
  apply_config(cfg, in, path.string());
}

void write_config(const RunConfig& cfg, std::ostream& out) {
  std::string section;
  for (const auto& [key, value] : cfg.describe()) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
}

}  // namespace szad
