#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "dacal/baselines.hpp"
#include "dacal/density_scaler.hpp"
#include "dacal/error.hpp"
#include "dacal/isotonic.hpp"
#include "dacal/knn.hpp"
#include "dacal/metrics.hpp"
#include "dacal/parallel.hpp"
#include "dacal/pipeline.hpp"
#include "dacal/preprocess.hpp"
#include "dacal/serialize.hpp"
#include "dacal/synth.hpp"

namespace py = pybind11;
using namespace dacal;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const FloatArray& a) {
  if (a.ndim() == 1) {
    return DenseMatrix(static_cast<std::size_t>(a.shape(0)), 1,
                       std::vector<float>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  return DenseMatrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                     std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const DenseMatrix& m) {
  py::array_t<float> out({m.rows(), m.cols()});
  if (m.size()) std::memcpy(out.mutable_data(), m.data().data(), m.size() * sizeof(float));
  return out;
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  if (!v.empty()) std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
  return out;
}

LabelVector to_labels(const IntArray& y, std::size_t num_classes) {
  if (y.ndim() != 1) throw ShapeError("labels must be a 1-D array");
  return LabelVector(std::vector<std::int32_t>(y.data(), y.data() + y.size()), static_cast<int>(num_classes));
}

std::vector<double> to_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

std::vector<std::string> default_layer_names(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < n; ++l) names.push_back("layer" + std::to_string(l + 1));
  return names;
}

DensityMatrix to_densities(const FloatArray& a, std::vector<std::string> names) {
  DensityMatrix d;
  d.values = to_matrix(a);
  d.layer_names = names.empty() ? default_layer_names(d.values.cols()) : std::move(names);
  return d;
}

CalibrationDataset labeled_split(const FloatArray& logits, const IntArray& labels) {
  CalibrationDataset d;
  d.split_name = "val";
  d.logits = to_matrix(logits);
  d.labels = to_labels(labels, d.logits.cols());
  return d;
}

py::dict split_to_dict(const CalibrationDataset& d) {
  py::dict out;
  out["logits"] = to_numpy(d.logits);
  if (d.labels) {
    py::array_t<std::int32_t> y(static_cast<py::ssize_t>(d.labels->size()));
    std::copy(d.labels->values().begin(), d.labels->values().end(), y.mutable_data());
    out["labels"] = y;
  } else {
    out["labels"] = py::none();
  }
  py::dict features;
  for (const auto& layer : d.layers) features[py::str(layer.name)] = to_numpy(layer.features);
  out["features"] = features;
  return out;
}

OodScores ood_scores(const DoubleArray& in, const DoubleArray& out) { return {to_vector(in), to_vector(out)}; }

}  // namespace

PYBIND11_MODULE(_dacal, m) {
  m.doc() = "Density-aware post-hoc calibration";

  static py::exception<Error> base_error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base_error.ptr());
  static py::exception<DataError> data_error(m, "DataError", base_error.ptr());
  static py::exception<ShapeError> shape_error(m, "ShapeError", base_error.ptr());
  static py::exception<IoError> io_error(m, "IoError", base_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const ShapeError& e) {
      py::set_error(shape_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    }
  });

  m.def("set_num_threads", &set_num_threads, py::arg("n"));
  m.def("num_threads", &num_threads);

  m.def("softmax", [](const FloatArray& z) { return to_numpy(softmax_rows(to_matrix(z))); }, py::arg("logits"));
  m.def("l2_normalize", [](const FloatArray& x) { return to_numpy(l2_normalize_rows(to_matrix(x))); },
        py::arg("features"));

  py::class_<KnnIndex>(m, "KnnIndex")
      .def(py::init([](const FloatArray& features, const std::string& name, int k, double fraction,
                       std::uint64_t seed) { return KnnIndex::build(to_matrix(features), name, k, fraction, seed); }),
           py::arg("features"), py::arg("layer_name"), py::arg("k"), py::arg("fraction") = 1.0,
           py::arg("seed") = 0)
      .def_property_readonly("layer_name", &KnnIndex::layer_name)
      .def_property_readonly("k", &KnnIndex::k)
      .def_property_readonly("size", [](const KnnIndex& i) { return i.reference().rows(); })
      .def("with_k", &KnnIndex::with_k, py::arg("k"))
      .def("kth_distance",
           [](const KnnIndex& i, const FloatArray& q) { return to_numpy(i.kth_distance(l2_normalize_rows(to_matrix(q)))); },
           py::arg("queries"), "k-th neighbor distance of L2-normalized queries");

  py::class_<DacModel>(m, "DacModel")
      .def(py::init<std::vector<std::string>, std::vector<double>, double>(), py::arg("layer_names"),
           py::arg("weights"), py::arg("bias"))
      .def_property_readonly("layer_names", &DacModel::layer_names)
      .def_property_readonly("weights", &DacModel::weights)
      .def_property_readonly("bias", &DacModel::bias)
      .def("weight_shares", [](const DacModel& d) { return weight_shares(d); })
      .def("scale_factor",
           [](const DacModel& d, const FloatArray& s) {
             return to_numpy(scale_factor(d, to_densities(s, d.layer_names())));
           },
           py::arg("densities"))
      .def("rescale",
           [](const DacModel& d, const FloatArray& z, const FloatArray& s) {
             return to_numpy(rescale_logits(d, to_matrix(z), to_densities(s, d.layer_names())));
           },
           py::arg("logits"), py::arg("densities"))
      .def("to_json", [](const DacModel& d) { return to_json(d); })
      .def_static("from_json", [](const std::string& t) { return dac_from_json(t); });

  m.def(
      "fit_dac",
      [](const FloatArray& logits, const IntArray& labels, const FloatArray& densities,
         std::vector<std::string> layer_names) {
        const auto fit = fit_dac(labeled_split(logits, labels), to_densities(densities, std::move(layer_names)));
        py::dict report;
        report["final_loss"] = fit.report.final_loss;
        report["initial_loss"] = fit.report.initial_loss;
        report["iterations"] = fit.report.iterations;
        report["converged"] = fit.report.converged;
        report["weight_shares"] = fit.report.weight_shares;
        return py::make_tuple(fit.model, report);
      },
      py::arg("logits"), py::arg("labels"), py::arg("densities"), py::arg("layer_names") = std::vector<std::string>{});

  m.def("fit_ts", [](const FloatArray& z, const IntArray& y) {
        const auto d = labeled_split(z, y);
        return fit_ts(d.logits, *d.labels).temperature;
      }, py::arg("logits"), py::arg("labels"));
  m.def("apply_ts", [](const FloatArray& z, double t) { return to_numpy(apply_ts({t}, to_matrix(z))); },
        py::arg("logits"), py::arg("temperature"));
  m.def("fit_ets", [](const FloatArray& z, const IntArray& y) {
        const auto d = labeled_split(z, y);
        const auto e = fit_ets(d.logits, *d.labels);
        return py::make_tuple(e.temperature, std::vector<double>(e.mix_weights.begin(), e.mix_weights.end()));
      }, py::arg("logits"), py::arg("labels"));
  m.def("apply_ets",
        [](const FloatArray& z, double t, std::array<double, 3> w) { return to_numpy(apply_ets({t, w}, to_matrix(z))); },
        py::arg("logits"), py::arg("temperature"), py::arg("mix_weights"));
  m.def("pav", [](const DoubleArray& y, const DoubleArray& w) { return to_numpy(pav_fit(to_vector(y), to_vector(w))); },
        py::arg("y"), py::arg("weights") = DoubleArray());

  py::class_<CalibratorModel>(m, "Calibrator")
      .def_property_readonly("method", [](const CalibratorModel& c) { return c.method.str(); })
      .def_property_readonly("dac", [](const CalibratorModel& c) -> py::object {
        return c.dac ? py::cast(*c.dac) : py::none();
      })
      .def("predict_proba",
           [](const CalibratorModel& c, const FloatArray& z, std::optional<FloatArray> s) {
             if (c.dac && !s) throw ConfigError("this calibrator needs densities");
             DensityMatrix d;
             if (c.dac) d = to_densities(*s, c.dac->layer_names());
             return to_numpy(predict_proba_with_densities(c, to_matrix(z), c.dac ? &d : nullptr));
           },
           py::arg("logits"), py::arg("densities") = py::none())
      .def("to_json", [](const CalibratorModel& c) { return to_json(c); })
      .def_static("from_json", [](const std::string& t) { return calibrator_from_json(t); });

  m.def(
      "fit_calibrator",
      [](const std::string& method, const FloatArray& z, const IntArray& y, std::optional<FloatArray> s,
         std::vector<std::string> layer_names) {
        const auto spec = MethodSpec::parse(method);
        if (spec.dac && !s) throw ConfigError("method '" + method + "' needs densities");
        const auto val = labeled_split(z, y);
        DensityMatrix d;
        if (spec.dac) d = to_densities(*s, std::move(layer_names));
        return compose_with_densities(spec, val, spec.dac ? &d : nullptr);
      },
      py::arg("method"), py::arg("logits"), py::arg("labels"), py::arg("densities") = py::none(),
      py::arg("layer_names") = std::vector<std::string>{});

  m.def("ece", [](const FloatArray& p, const IntArray& y, int bins, const std::string& scheme) {
        const auto probs = to_matrix(p);
        const auto labels = to_labels(y, probs.cols());
        if (scheme == "width") return ece_equal_width(probs, labels, bins).ece;
        if (scheme == "mass") return ece_equal_mass(probs, labels, bins).ece;
        throw ConfigError("scheme must be 'width' or 'mass'");
      }, py::arg("probs"), py::arg("labels"), py::arg("bins") = 15, py::arg("scheme") = "width");
  m.def("classwise_ece", [](const FloatArray& p, const IntArray& y, int bins) {
        const auto probs = to_matrix(p);
        return classwise_ece(probs, to_labels(y, probs.cols()), bins).total;
      }, py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);
  m.def("brier", [](const FloatArray& p, const IntArray& y) {
        const auto probs = to_matrix(p);
        return brier(probs, to_labels(y, probs.cols()));
      }, py::arg("probs"), py::arg("labels"));
  m.def("nll", [](const FloatArray& p, const IntArray& y) {
        const auto probs = to_matrix(p);
        return nll(probs, to_labels(y, probs.cols()));
      }, py::arg("probs"), py::arg("labels"));
  m.def("accuracy", [](const FloatArray& p, const IntArray& y) {
        const auto probs = to_matrix(p);
        return accuracy(probs, to_labels(y, probs.cols()));
      }, py::arg("probs"), py::arg("labels"));

  m.def("auroc", [](const DoubleArray& a, const DoubleArray& b) { return auroc(ood_scores(a, b)); },
        py::arg("in_scores"), py::arg("out_scores"));
  m.def("aupr", [](const DoubleArray& a, const DoubleArray& b, const std::string& positive) {
        if (positive != "in" && positive != "out") throw ConfigError("positive must be 'in' or 'out'");
        return aupr(ood_scores(a, b), positive == "in" ? PrPositive::in : PrPositive::out);
      }, py::arg("in_scores"), py::arg("out_scores"), py::arg("positive") = "in");
  m.def("fpr_at_tpr", [](const DoubleArray& a, const DoubleArray& b, double tpr) {
        return fpr_at_tpr(ood_scores(a, b), tpr);
      }, py::arg("in_scores"), py::arg("out_scores"), py::arg("tpr") = 0.95);
  m.def("detection_error", [](const DoubleArray& a, const DoubleArray& b) {
        return detection_error(ood_scores(a, b));
      }, py::arg("in_scores"), py::arg("out_scores"));

  m.def(
      "synth",
      [](std::uint64_t seed, const std::string& preset, std::optional<std::size_t> train,
         std::optional<std::size_t> val, std::optional<std::size_t> test, std::optional<std::size_t> ood) {
        SynthConfig c;
        if (preset == "shift") {
          c = shift_benchmark_config(seed);
        } else if (preset != "default") {
          throw ConfigError("preset must be 'default' or 'shift'");
        }
        c.seed = seed;
        if (train) c.train_samples = *train;
        if (val) c.val_samples = *val;
        if (test) c.test_samples = *test;
        if (ood) c.ood_samples = *ood;
        py::dict out;
        for (const auto& [name, split] : generate(c)) out[py::str(name)] = split_to_dict(split);
        return out;
      },
      py::arg("seed") = 0, py::arg("preset") = "default", py::arg("train") = py::none(), py::arg("val") = py::none(),
      py::arg("test") = py::none(), py::arg("ood") = py::none(),
      "Synthetic splits as {name: {'logits', 'labels', 'features': {layer: array}}}");
}
