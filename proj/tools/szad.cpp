#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "szad/adaptation.hpp"
#include "szad/config.hpp"
#include "szad/embed.hpp"
#include "szad/eval.hpp"
#include "szad/gbtree.hpp"
#include "szad/model_io.hpp"
#include "szad/pipeline.hpp"
#include "szad/text.hpp"

namespace {

using szad::ErrorKind;
using szad::RunConfig;

struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
};

RunConfig resolve(const Options& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) szad::apply_config_file(cfg, opt.config_path);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    szad::require(eq != std::string::npos, ErrorKind::kUsage, "--set expects section.key=value, got '" + kv + "'");
    szad::set_config_value(cfg, szad::text::trim(std::string_view(kv).substr(0, eq)),
                           szad::text::trim(std::string_view(kv).substr(eq + 1)));
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.threads) cfg.threads = *opt.threads;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  szad::require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

void cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  const auto recordings = szad::generate_synthetic_cohort(cfg.cohort_config());
  szad::write_recordings(recordings, out_dir);
  std::cout << "wrote " << recordings.size() << " recordings to " << out_dir << '\n';
}

void cmd_features(const RunConfig& cfg, const std::string& in_dir, const std::string& out_dir) {
  const auto cohort = szad::extract_cohort_features(szad::read_recordings(in_dir), cfg.window_seconds);
  szad::write_feature_dir(cohort, out_dir);
  std::cout << "wrote features for " << cohort.size() << " subjects to " << out_dir << '\n';
}

void cmd_adapt(const RunConfig& cfg, const std::string& features_dir, const std::string& model_path,
               std::string history_path) {
  const auto cohort = szad::read_feature_dir(features_dir);
  const auto model = szad::train_adaptation(cohort, cfg.adaptation_config());
  szad::save_model(model_path, model);
  if (history_path.empty()) history_path = model_path + ".history.csv";
  auto out = open_out(history_path);
  szad::write_history_csv(model, out);
  const auto& last = model.history.back();
  std::cout << "trained " << model.num_subjects() << " encoders for " << cfg.adaptation.epochs
            << " epochs; final held-out discriminator accuracy " << szad::text::format_double(last.sd_holdout_acc)
            << "\nmodel: " << model_path << "\nhistory: " << history_path << '\n';
}

void cmd_train(const RunConfig& cfg, const std::string& features_dir, const std::string& model_path,
               const std::string& target, std::size_t n, const std::string& scheme_name, const std::string& out_path) {
  const auto cohort = szad::read_feature_dir(features_dir);
  const szad::NShotPlan plan{target, n, szad::parse_scheme(scheme_name), cfg.source_weight, cfg.target_weight};
  const auto split = szad::build_nshot(cohort, plan);
  std::vector<Eigen::MatrixXd> rep;
  if (plan.scheme == szad::Scheme::kCrossSubject) {
    const auto model = szad::load_adaptation_model(model_path);
    for (const auto& m : cohort) rep.push_back(szad::encode(model, m.subject_id, m.values));
  } else {
    for (const auto& m : cohort) rep.push_back(m.values);
  }
  szad::WeightedDataset data;
  data.x.resize(static_cast<Eigen::Index>(split.train.size()), rep[split.target].cols());
  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const auto& r = split.train[k];
    data.x.row(static_cast<Eigen::Index>(k)) = rep[r.subject].row(static_cast<Eigen::Index>(r.row));
    data.y.push_back(static_cast<std::uint8_t>(cohort[r.subject].labels[r.row] != 0));
    data.w.push_back(r.weight);
  }
  const auto gbt = szad::fit_gbt(data, cfg.gbt);
  szad::save_model(out_path, gbt);
  Eigen::MatrixXd test(static_cast<Eigen::Index>(split.test_rows.size()), rep[split.target].cols());
  std::vector<int> labels;
  for (std::size_t k = 0; k < split.test_rows.size(); ++k) {
    test.row(static_cast<Eigen::Index>(k)) = rep[split.target].row(static_cast<Eigen::Index>(split.test_rows[k]));
    labels.push_back(cohort[split.target].labels[split.test_rows[k]]);
  }
  const Eigen::VectorXd p = szad::gbt_predict(gbt, test);
  const double a = szad::auc(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), labels);
  std::cout << target << ' ' << n << "-shot " << szad::scheme_name(plan.scheme) << ": " << split.train.size()
            << " training rows, test AUC " << szad::text::format_double(a) << "\nmodel: " << out_path << '\n';
}

void write_reports(const szad::ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    auto csv = open_out(out_dir / "report.csv");
    szad::write_report_csv(report, csv);
  }
  auto md = open_out(out_dir / "report.md");
  szad::write_report_markdown(report, md);
}

void cmd_eval(const RunConfig& cfg, const std::string& features_dir, const std::string& out_dir) {
  const auto cohort = szad::read_feature_dir(features_dir);
  auto report = szad::run_experiment(cohort, cfg.experiment_config());
  report.config = cfg.describe();
  write_reports(report, out_dir);
  szad::write_report_markdown(report, std::cout);
}

void cmd_embed(const RunConfig& cfg, const std::string& features_dir, const std::string& model_path,
               const std::string& out_path) {
  const auto cohort = szad::read_feature_dir(features_dir);
  std::vector<Eigen::MatrixXd> parts;
  std::vector<std::string> subjects;
  std::vector<int> labels;
  std::optional<szad::AdaptationModel> model;
  if (!model_path.empty()) model = szad::load_adaptation_model(model_path);
  for (const auto& m : cohort) {
    parts.push_back(model ? szad::encode(*model, m.subject_id, m.values) : m.values);
    subjects.insert(subjects.end(), static_cast<std::size_t>(m.rows()), m.subject_id);
    labels.insert(labels.end(), m.labels.begin(), m.labels.end());
  }
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd x(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    x.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  if (!model) x = szad::fit_normalizer(x).apply(x);
  const auto emb = szad::tsne(x, subjects, labels, cfg.tsne_config());
  if (std::filesystem::path(out_path).has_parent_path()) {
    std::filesystem::create_directories(std::filesystem::path(out_path).parent_path());
  }
  szad::export_scatter(emb, out_path);
  std::cout << "embedded " << emb.size() << " points (" << emb.flagged_rows.size()
            << " flagged), final KL " << szad::text::format_double(emb.kl_trace.back()) << "\nplot: " << out_path
            << '\n';
}

void cmd_report(const RunConfig& cfg, const std::string& csv_path, const std::string& out_path) {
  std::ifstream in(csv_path, std::ios::binary);
  szad::require(in.good(), ErrorKind::kIo, "cannot read " + csv_path);
  szad::ExperimentReport report;
  try {
    report = szad::read_report_csv(in);
  } catch (const szad::Error& e) {
    throw szad::Error(e.kind(), csv_path + ": " + e.detail());
  }
  report.config = cfg.describe();
  if (out_path.empty()) {
    szad::write_report_markdown(report, std::cout);
  } else {
    auto out = open_out(out_path);
    szad::write_report_markdown(report, out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seizure detection with multi-subject domain adaptation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--seed", opt.seed, "Seed for every stochastic stage");
  app.add_option("--config", opt.config_path, "key = value config file with [sections]");
  app.add_option("--threads", opt.threads, "Worker threads for the experiment runner")->envname("SZAD_THREADS");
  app.add_option("--set", opt.overrides, "Override one setting: section.key=value (repeatable)");

  std::string data_dir, features_dir, model_path, out, history, target, scheme = "CS", csv;
  std::size_t n = 1;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-subject recording cohort");
  synth->add_option("--out", out, "Output directory (default: paths.data)");

  auto* features = app.add_subcommand("features", "Segment recordings and extract window features");
  features->add_option("--in", data_dir, "Recording directory (default: paths.data)");
  features->add_option("--out", out, "Feature directory (default: paths.features)");

  auto* adapt = app.add_subcommand("adapt", "Train per-subject encoders against a subject discriminator");
  adapt->add_option("--features", features_dir, "Feature directory (default: paths.features)");
  adapt->add_option("--out", out, "Model file (default: paths.model)");
  adapt->add_option("--history", history, "Per-epoch CSV (default: <model>.history.csv)");

  auto* train = app.add_subcommand("train", "Fit one boosted-tree classifier for an n-shot plan");
  train->add_option("--features", features_dir, "Feature directory (default: paths.features)");
  train->add_option("--model", model_path, "Adaptation model, needed for CS (default: paths.model)");
  train->add_option("--target", target, "Target subject id")->required();
  train->add_option("-n,--shots", n, "Number of target training blocks");
  train->add_option("--scheme", scheme, "SS, CS or CS-raw");
  train->add_option("--out", out, "Classifier model file")->required();

  auto* eval = app.add_subcommand("eval", "Run the multi-trial n-shot experiment and write reports");
  eval->add_option("--features", features_dir, "Feature directory (default: paths.features)");
  eval->add_option("--out", out, "Report directory (default: paths.report)");

  auto* embed = app.add_subcommand("embed", "t-SNE scatter plot of features or adapted latents");
  embed->add_option("--features", features_dir, "Feature directory (default: paths.features)");
  embed->add_option("--model", model_path, "Adaptation model; omit to embed raw features");
  embed->add_option("--out", out, "SVG path; a CSV sidecar is written next to it")->required();

  auto* report = app.add_subcommand("report", "Rebuild the Markdown table from a report CSV");
  report->add_option("--csv", csv, "report.csv from eval")->required();
  report->add_option("--out", out, "Markdown path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = resolve(opt);
    const auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };
    if (*synth) {
      cmd_synth(cfg, pick(out, cfg.data_dir));
    } else if (*features) {
      cmd_features(cfg, pick(data_dir, cfg.data_dir), pick(out, cfg.features_dir));
    } else if (*adapt) {
      cmd_adapt(cfg, pick(features_dir, cfg.features_dir), pick(out, cfg.model_path), history);
    } else if (*train) {
      cmd_train(cfg, pick(features_dir, cfg.features_dir), pick(model_path, cfg.model_path), target, n, scheme, out);
    } else if (*eval) {
      cmd_eval(cfg, pick(features_dir, cfg.features_dir), pick(out, cfg.report_dir));
    } else if (*embed) {
      cmd_embed(cfg, pick(features_dir, cfg.features_dir), model_path, out);
    } else if (*report) {
      cmd_report(cfg, csv, out);
    }
  } catch (const szad::Error& e) {
    std::cerr << "szad: " << e.what() << '\n';
    return szad::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "szad: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
