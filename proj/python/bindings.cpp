#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "szad/adaptation.hpp"
#include "szad/config.hpp"
#include "szad/embed.hpp"
#include "szad/eval.hpp"
#include "szad/features.hpp"
#include "szad/gbtree.hpp"
#include "szad/model_io.hpp"
#include "szad/pipeline.hpp"
#include "szad/signal.hpp"

namespace py = pybind11;

namespace {

py::dict epoch_dict(const szad::EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["adv_loss"] = r.adv_loss;
  d["rec_loss"] = r.rec_loss;
  d["l1"] = r.l1;
  d["total"] = r.total;
  d["sd_holdout_acc"] = r.sd_holdout_acc;
  d["sd_holdout_ce"] = r.sd_holdout_ce;
  d["holdout_rec_loss"] = r.holdout_rec_loss;
  d["jsd_estimate"] = r.jsd_estimate;
  return d;
}

Eigen::MatrixXd recording_matrix(const szad::Recording& rec) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rec.num_channels()), static_cast<Eigen::Index>(rec.num_samples()));
  for (std::size_t c = 0; c < rec.num_channels(); ++c) {
    m.row(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Eigen::RowVectorXd>(rec.channels[c].data(), static_cast<Eigen::Index>(rec.num_samples()));
  }
  return m;
}

szad::WeightedDataset make_dataset(const Eigen::MatrixXd& x, const std::vector<int>& y, std::vector<double> w) {
  szad::WeightedDataset data;
  data.x = x;
  for (int v : y) data.y.push_back(static_cast<std::uint8_t>(v != 0));
  if (w.empty()) w.assign(y.size(), 1.0);
  data.w = std::move(w);
  return data;
}

}  // namespace

PYBIND11_MODULE(_szad, m) {
  m.doc() = "Seizure detection with multi-subject domain adaptation";

  static py::exception<szad::Error> error_type(m, "SzadError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const szad::Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      err.attr("kind") = szad::to_string(e.kind());
      err.attr("exit_code") = szad::exit_code(e.kind());
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  py::class_<szad::RunConfig>(m, "Config")
      .def(py::init<>())
      .def("set", [](szad::RunConfig& c, const std::string& key, const std::string& value) {
        szad::set_config_value(c, key, value);
      })
      .def("load", [](szad::RunConfig& c, const std::filesystem::path& path) { szad::apply_config_file(c, path); })
      .def("validate", &szad::RunConfig::validate)
      .def("describe", &szad::RunConfig::describe)
      .def("dumps", [](const szad::RunConfig& c) {
        std::ostringstream out;
        szad::write_config(c, out);
        return out.str();
      })
      .def_readwrite("seed", &szad::RunConfig::seed)
      .def_readwrite("threads", &szad::RunConfig::threads)
      .def_readwrite("window_seconds", &szad::RunConfig::window_seconds);

  py::class_<szad::Recording>(m, "Recording")
      .def_readonly("subject_id", &szad::Recording::subject_id)
      .def_readonly("sample_rate_hz", &szad::Recording::sample_rate_hz)
      .def_property_readonly("signals", &recording_matrix)
      .def_property_readonly("labels", [](const szad::Recording& r) {
        return std::vector<int>(r.labels.begin(), r.labels.end());
      });

  py::class_<szad::FeatureMatrix>(m, "FeatureMatrix")
      .def(py::init([](std::string subject_id, Eigen::MatrixXd values, std::vector<int> labels) {
             szad::require(values.rows() == static_cast<Eigen::Index>(labels.size()), szad::ErrorKind::kShape,
                           "values and labels differ in length");
             return szad::FeatureMatrix{std::move(subject_id), std::move(values), std::move(labels)};
           }),
           py::arg("subject_id"), py::arg("values"), py::arg("labels"))
      .def_readonly("subject_id", &szad::FeatureMatrix::subject_id)
      .def_readonly("values", &szad::FeatureMatrix::values)
      .def_readonly("labels", &szad::FeatureMatrix::labels);

  m.def("feature_names", [] { return std::vector<std::string>(szad::kFeatureNames.begin(), szad::kFeatureNames.end()); });

  m.def("synthesize", [](const szad::RunConfig& c) { return szad::generate_synthetic_cohort(c.cohort_config()); },
        py::arg("config"));
  m.def("read_recordings", &szad::read_recordings, py::arg("directory"));
  m.def("write_recordings", &szad::write_recordings, py::arg("recordings"), py::arg("directory"));
  m.def("extract_features", &szad::extract_cohort_features, py::arg("recordings"), py::arg("window_seconds") = 1.0);
  m.def("read_features", &szad::read_feature_dir, py::arg("directory"));
  m.def("write_features", &szad::write_feature_dir, py::arg("cohort"), py::arg("directory"));

  py::class_<szad::AdaptationModel>(m, "AdaptationModel")
      .def_readonly("subject_ids", &szad::AdaptationModel::subject_ids)
      .def_property_readonly("latent_dim", [](const szad::AdaptationModel& a) { return a.config.latent_dim; })
      .def_property_readonly("initial", [](const szad::AdaptationModel& a) { return epoch_dict(a.initial); })
      .def_property_readonly("history",
                             [](const szad::AdaptationModel& a) {
                               py::list out;
                               for (const auto& r : a.history) out.append(epoch_dict(r));
                               return out;
                             })
      .def("encode",
           [](const szad::AdaptationModel& a, const std::string& subject, const Eigen::MatrixXd& x) {
             return szad::encode(a, subject, x);
           },
           py::arg("subject_id"), py::arg("features"))
      .def("save", [](const szad::AdaptationModel& a, const std::filesystem::path& p) { szad::save_model(p, a); })
      .def("to_bytes", [](const szad::AdaptationModel& a) { return py::bytes(szad::serialize_model(a)); });

  m.def("train_adaptation",
        [](const std::vector<szad::FeatureMatrix>& cohort, const szad::RunConfig& c) {
          py::gil_scoped_release release;
          return szad::train_adaptation(cohort, c.adaptation_config());
        },
        py::arg("cohort"), py::arg("config"));
  m.def("load_adaptation_model", &szad::load_adaptation_model, py::arg("path"));

  py::class_<szad::GbtModel>(m, "GbtModel")
      .def_readonly("base_score", &szad::GbtModel::base_score)
      .def_property_readonly("n_trees", [](const szad::GbtModel& g) { return g.trees.size(); })
      .def("raw_scores", [](const szad::GbtModel& g, const Eigen::MatrixXd& x) { return szad::gbt_raw_scores(g, x); })
      .def("predict", [](const szad::GbtModel& g, const Eigen::MatrixXd& x) { return szad::gbt_predict(g, x); })
      .def("save", [](const szad::GbtModel& g, const std::filesystem::path& p) { szad::save_model(p, g); })
      .def("to_bytes", [](const szad::GbtModel& g) { return py::bytes(szad::serialize_model(g)); });

  m.def("fit_gbt",
        [](const Eigen::MatrixXd& x, const std::vector<int>& y, std::vector<double> w, const szad::RunConfig& c) {
          std::vector<double> trace;
          auto model = szad::fit_gbt(make_dataset(x, y, std::move(w)), c.gbt, &trace);
          return py::make_tuple(std::move(model), trace);
        },
        py::arg("x"), py::arg("y"), py::arg("weights") = std::vector<double>{}, py::arg("config") = szad::RunConfig{});
  m.def("load_gbt_model", &szad::load_gbt_model, py::arg("path"));

  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return szad::auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("block_partition",
        [](const std::vector<int>& labels) {
          std::vector<std::pair<std::size_t, std::size_t>> out;
          for (const auto& b : szad::block_partition(labels)) out.emplace_back(b.begin, b.end);
          return out;
        },
        py::arg("labels"));

  m.def("run_experiment",
        [](const std::vector<szad::FeatureMatrix>& cohort, const szad::RunConfig& c) {
          szad::ExperimentReport report;
          {
            py::gil_scoped_release release;
            report = szad::run_experiment(cohort, c.experiment_config());
          }
          report.config = c.describe();
          std::ostringstream md;
          szad::write_report_markdown(report, md);
          std::ostringstream csv;
          szad::write_report_csv(report, csv);
          py::list rows;
          for (const auto& r : report.results) {
            rows.append(py::make_tuple(r.subject, std::string(szad::scheme_name(r.scheme)), r.n, r.trial, r.auc));
          }
          py::dict out;
          out["results"] = rows;
          out["markdown"] = md.str();
          out["csv"] = csv.str();
          return out;
        },
        py::arg("cohort"), py::arg("config"));

  m.def("tsne",
        [](const Eigen::MatrixXd& x, const std::vector<std::string>& subjects, const std::vector<int>& labels,
           const szad::RunConfig& c) {
          szad::Embedding2D e;
          {
            py::gil_scoped_release release;
            e = szad::tsne(x, subjects, labels, c.tsne_config());
          }
          py::dict out;
          out["coords"] = e.coords;
          out["subject"] = e.subject;
          out["label"] = e.label;
          out["source_rows"] = e.source_rows;
          out["kl_trace"] = e.kl_trace;
          out["flagged_rows"] = e.flagged_rows;
          return out;
        },
        py::arg("x"), py::arg("subjects"), py::arg("labels"), py::arg("config"));
  m.def("silhouette", [](const Eigen::MatrixXd& p, const std::vector<int>& c) { return szad::silhouette(p, c); },
        py::arg("points"), py::arg("clusters"));
}
