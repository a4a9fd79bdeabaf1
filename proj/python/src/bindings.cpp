#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "wtpgd/checkpoint.hpp"
#include "wtpgd/dataset.hpp"
#include "wtpgd/diagnostics.hpp"
#include "wtpgd/experiment.hpp"
#include "wtpgd/gradient_attacks.hpp"
#include "wtpgd/model.hpp"
#include "wtpgd/train.hpp"
#include "wtpgd/zoo.hpp"

namespace py = pybind11;
using namespace wtpgd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, const Shape& shape) {
  if (static_cast<std::size_t>(a.size()) != shape_size(shape)) {
    throw py::value_error("expected " + std::to_string(shape_size(shape)) + " values for shape " + shape_string(shape) +
                          ", got " + std::to_string(a.size()));
  }
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(t.size())});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

DefenceSpec defence_from(const std::string& kind, double scale, std::size_t k) {
  switch (parse_defence_kind(kind)) {
    case DefenceKind::None: return DefenceSpec::none();
    case DefenceKind::WeightNoise: return DefenceSpec::weight_noise(scale);
    case DefenceKind::PenultimateNoise: return DefenceSpec::penultimate_noise(scale);
    case DefenceKind::Kwta: return DefenceSpec::kwta(k);
    case DefenceKind::AntiAdversary: return DefenceSpec::anti_adversary();
  }
  throw py::value_error("unknown defence " + kind);
}

py::dict result_dict(const AttackResult& r) {
  py::dict d;
  d["adversarial"] = to_array(r.adversarial);
  d["success"] = r.success;
  d["predicted"] = r.predicted;
  d["queries"] = r.queries;
  d["loss_trace"] = r.loss_trace;
  return d;
}

AttackConfig attack_config(std::size_t iterations, double step_size, std::size_t m, std::size_t n, double sigma,
                           bool random_start, std::size_t votes) {
  AttackConfig cfg;
  cfg.iterations = iterations;
  cfg.step_size = step_size;
  cfg.wt_samples = m;
  cfg.eot_samples = n;
  cfg.sigma = sigma;
  cfg.random_start = random_start;
  cfg.votes = votes;
  return cfg;
}

ZooConfig zoo_config(std::size_t iterations, double step_size, std::size_t coords, double h, std::size_t m,
                     std::size_t n, double sigma) {
  ZooConfig cfg;
  cfg.iterations = iterations;
  cfg.step_size = step_size;
  cfg.coords_per_iter = coords;
  cfg.fd_step = h;
  cfg.wt_samples = m;
  cfg.eot_samples = n;
  cfg.sigma = sigma;
  return cfg;
}

ThreatModel threat(double epsilon, const std::string& norm) {
  ThreatModel tm;
  tm.epsilon = epsilon;
  tm.norm = parse_norm(norm);
  return tm;
}

}  // namespace

PYBIND11_MODULE(_wtpgd, mod) {
  mod.doc() = "Weight-transform PGD and ZOO attacks against stochastic defences";

  py::register_exception<Error>(mod, "WtpgdError", PyExc_ValueError);

  py::class_<Dataset>(mod, "Dataset")
      .def_readonly("dim", &Dataset::dim)
      .def_readonly("classes", &Dataset::classes)
      .def_readonly("labels", &Dataset::labels)
      .def("__len__", &Dataset::size)
      .def("input", [](const Dataset& d, std::size_t i) {
        if (i >= d.size()) throw py::index_error("point index out of range");
        return to_array(d.input(i));
      })
      .def("head", &Dataset::head);

  mod.def("read_dataset", &read_dataset, py::arg("path"));

  py::class_<Model>(mod, "Model")
      .def_property_readonly("architecture", [](const Model& m) { return format_architecture(m.architecture()); })
      .def_property_readonly("defence", [](const Model& m) { return to_string(m.defence().kind); })
      .def_property_readonly("stochastic", &Model::stochastic)
      .def_property_readonly("input_size", [](const Model& m) { return shape_size(m.input_shape()); })
      .def("with_defence",
           [](const Model& m, const std::string& kind, double scale, std::size_t k) {
             return m.with_defence(defence_from(kind, scale, k));
           },
           py::arg("kind"), py::arg("scale") = 0.0, py::arg("k") = 0)
      .def("predict",
           [](const Model& m, const Array& x, std::uint64_t seed) {
             Rng rng(seed);
             return to_array(predict(m, to_tensor(x, m.input_shape()), rng));
           },
           py::arg("x"), py::arg("seed") = 0)
      .def("posterior",
           [](const Model& m, const Array& x, std::uint64_t seed) {
             Rng rng(seed);
             return to_array(softmax(predict(m, to_tensor(x, m.input_shape()), rng)));
           },
           py::arg("x"), py::arg("seed") = 0)
      .def("vote",
           [](const Model& m, const Array& x, std::size_t votes, std::uint64_t seed) {
             return majority_vote_predict(m, to_tensor(x, m.input_shape()), votes, Rng(seed));
           },
           py::arg("x"), py::arg("votes") = 11, py::arg("seed") = 0)
      .def("save", [](const Model& m, const std::filesystem::path& p) { save_checkpoint(m, p); }, py::arg("path"));

  mod.def("load_model", &load_checkpoint, py::arg("path"));

  mod.def(
      "train",
      [](const std::string& architecture, const Dataset& data, std::size_t epochs, double learning_rate,
         std::uint64_t seed) {
        TrainOptions opts;
        opts.epochs = epochs;
        opts.learning_rate = learning_rate;
        opts.accuracy_floor = 0.0;
        Rng rng(seed);
        TrainResult r = train_baseline(parse_architecture(architecture), data, opts, rng);
        return py::make_tuple(r.model, r.heldout_accuracy);
      },
      py::arg("architecture"), py::arg("data"), py::arg("epochs") = 40, py::arg("learning_rate") = 0.05,
      py::arg("seed") = 1, "Trains a baseline model; returns (model, held-out accuracy).");

  mod.def(
      "pgd",
      [](const Model& m, const Array& x, std::size_t label, double epsilon, const std::string& norm,
         std::size_t iterations, double step_size, std::size_t n, bool random_start, std::size_t votes,
         std::uint64_t seed) {
        const AttackConfig cfg = attack_config(iterations, step_size, 1, n, 0.0, random_start, votes);
        return result_dict(pgd(m, to_tensor(x, m.input_shape()), label, threat(epsilon, norm), cfg, Rng(seed)));
      },
      py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon") = 8.0 / 255.0, py::arg("norm") = "linf",
      py::arg("iterations") = 10, py::arg("step_size") = 0.01, py::arg("n") = 16, py::arg("random_start") = true,
      py::arg("votes") = 11, py::arg("seed") = 0);

  mod.def(
      "wt_pgd",
      [](const Model& m, const Array& x, std::size_t label, double epsilon, const std::string& norm,
         std::size_t iterations, double step_size, std::size_t m_samples, std::size_t n, double sigma,
         bool random_start, std::size_t votes, std::uint64_t seed) {
        const AttackConfig cfg = attack_config(iterations, step_size, m_samples, n, sigma, random_start, votes);
        return result_dict(wt_pgd(m, to_tensor(x, m.input_shape()), label, threat(epsilon, norm), cfg, Rng(seed)));
      },
      py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon") = 8.0 / 255.0, py::arg("norm") = "linf",
      py::arg("iterations") = 10, py::arg("step_size") = 0.01, py::arg("m") = 16, py::arg("n") = 16,
      py::arg("sigma") = 0.05, py::arg("random_start") = true, py::arg("votes") = 11, py::arg("seed") = 0);

  mod.def(
      "zoo",
      [](const Model& m, const Array& x, std::size_t label, double epsilon, std::size_t iterations, double step_size,
         std::size_t coords, double h, std::size_t n, std::uint64_t seed) {
        const ModelOracle oracle(m);
        const ZooConfig cfg = zoo_config(iterations, step_size, coords, h, 1, n, 0.0);
        return result_dict(zoo(oracle, to_tensor(x, m.input_shape()), label, threat(epsilon, "linf"), cfg, Rng(seed)));
      },
      py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon") = 8.0 / 255.0, py::arg("iterations") = 100,
      py::arg("step_size") = 0.01, py::arg("coords") = 16, py::arg("h") = 1e-3, py::arg("n") = 16,
      py::arg("seed") = 0);

  mod.def(
      "wt_zoo",
      [](const Model& m, const Array& x, std::size_t label, double epsilon, std::size_t iterations, double step_size,
         std::size_t coords, double h, std::size_t m_samples, std::size_t n, double sigma, std::uint64_t seed) {
        const ModelOracle oracle(m);
        const ZooConfig cfg = zoo_config(iterations, step_size, coords, h, m_samples, n, sigma);
        return result_dict(
            wt_zoo(oracle, to_tensor(x, m.input_shape()), label, threat(epsilon, "linf"), cfg, Rng(seed)));
      },
      py::arg("model"), py::arg("x"), py::arg("label"), py::arg("epsilon") = 8.0 / 255.0, py::arg("iterations") = 100,
      py::arg("step_size") = 0.01, py::arg("coords") = 16, py::arg("h") = 1e-3, py::arg("m") = 16, py::arg("n") = 16,
      py::arg("sigma") = 0.05, py::arg("seed") = 0);

  mod.def(
      "smoothing_error_bound",
      [](double k, double l, double sigma, std::size_t d, std::size_t m, double delta) {
        BoundParams bp;
        bp.lipschitz_k = k;
        bp.lipschitz_l = l;
        bp.sigma = sigma;
        bp.dimension = d;
        bp.samples = m;
        bp.delta = delta;
        return smoothing_error_bound(bp);
      },
      py::arg("k"), py::arg("l"), py::arg("sigma"), py::arg("d"), py::arg("m"), py::arg("delta"));

  mod.def("lipschitz_upper_bound", [](const Model& m) { return lipschitz_upper_bound(m.graph()); }, py::arg("model"));

  mod.def(
      "run_experiment",
      [](const std::string& config_text) {
        const Report r = run(ExperimentConfig::from_text(config_text));
        py::dict summary;
        for (const auto& [k, v] : r.summary) summary[py::str(k)] = v;
        return summary;
      },
      py::arg("config_text"), "Runs one experiment from key=value text; returns the report summary.");
}
