#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "robustnet/attack_eval.hpp"
#include "robustnet/binary_io.hpp"
#include "robustnet/data_io.hpp"
#include "robustnet/errors.hpp"
#include "robustnet/nn.hpp"
#include "robustnet/perturb.hpp"
#include "robustnet/ro_equivalence.hpp"
#include "robustnet/robust_train.hpp"

namespace py = pybind11;
using namespace robustnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

/// Stacks examples into (X, y) with X shaped {n, *example_shape}.
py::tuple dataset_to_arrays(const Dataset& ds) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ds.size())};
  if (!ds.empty()) shape.insert(shape.end(), ds.example_shape().begin(), ds.example_shape().end());
  Array x(shape);
  py::array_t<std::int64_t> y(static_cast<py::ssize_t>(ds.size()));
  double* px = x.mutable_data();
  auto* py_ = y.mutable_data();
  for (const auto& e : ds.examples) {
    px = std::copy(e.x.data().begin(), e.x.data().end(), px);
    *py_++ = static_cast<std::int64_t>(e.y);
  }
  return py::make_tuple(x, y);
}

/// Rows of X (first axis) paired with labels y.
Dataset arrays_to_dataset(const Array& x, const py::array_t<std::int64_t>& y, std::size_t num_classes) {
  if (x.ndim() < 2) throw InvalidArgument("X must have a leading example axis");
  if (y.ndim() != 1 || y.shape(0) != x.shape(0)) throw InvalidArgument("y must be 1-D with one label per row of X");
  const Shape example(x.shape() + 1, x.shape() + x.ndim());
  const std::size_t per = x.size() / static_cast<std::size_t>(x.shape(0));
  Dataset ds;
  ds.num_classes = num_classes;
  ds.examples.reserve(static_cast<std::size_t>(x.shape(0)));
  for (py::ssize_t i = 0; i < x.shape(0); ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * per;
    const auto label = y.at(i);
    if (label < 0) throw InvalidArgument("labels must be non-negative");
    ds.examples.push_back({Tensor(example, std::vector<double>(row, row + per)), static_cast<std::size_t>(label)});
  }
  return ds;
}

std::vector<Array> tensors_to_arrays(const std::vector<Tensor>& ts) {
  std::vector<Array> out;
  for (const auto& t : ts) out.push_back(to_array(t));
  return out;
}

py::dict report_to_dict(const EquivalenceReport& r) {
  py::dict d;
  d["trials"] = r.trials;
  d["samples_per_trial"] = r.samples_per_trial;
  d["bound_violations"] = r.bound_violations;
  d["tightness_failures"] = r.tightness_failures;
  d["gap_failures"] = r.gap_failures;
  d["max_bound_excess"] = r.max_bound_excess;
  d["max_tightness_error"] = r.max_tightness_error;
  d["mean_gap_few"] = r.mean_gap_few;
  d["mean_gap_many"] = r.mean_gap_many;
  d["passed"] = r.passed();
  return d;
}

RoInstance make_instance(const Array& a, const Array& b, const Array& x, double radius) {
  RoInstance inst{to_tensor(a), to_tensor(b), to_tensor(x), radius};
  inst.validate();
  return inst;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust training of small convolutional networks";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", error.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  auto io = py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<BadMagicError>(m, "BadMagicError", io.ptr());
  py::register_exception<TruncatedFileError>(m, "TruncatedFileError", io.ptr());
  py::register_exception<CountMismatchError>(m, "CountMismatchError", io.ptr());
  py::register_exception<VersionMismatchError>(m, "VersionMismatchError", io.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", io.ptr());

  py::class_<Architecture>(m, "Architecture")
      .def_property_readonly("input_shape", [](const Architecture& a) { return a.input_shape; })
      .def_property_readonly("num_classes", &Architecture::num_classes)
      .def("layer_output_shapes", &Architecture::layer_output_shapes)
      .def("layer_kinds",
           [](const Architecture& a) {
             std::vector<std::string> out;
             for (const auto& l : a.layers) out.push_back(to_string(l.kind));
             return out;
           })
      .def(py::self == py::self);

  m.def("desk_mnist_architecture", &desk_mnist_architecture);
  m.def("paper_mnist_architecture", &paper_mnist_architecture);
  m.def("linear_architecture", &linear_architecture, py::arg("dim"), py::arg("classes"));
  m.def("mlp_architecture", &mlp_architecture, py::arg("dim"), py::arg("hidden"), py::arg("classes"));

  py::class_<NetworkParams>(m, "Network")
      .def_property_readonly("architecture", [](const NetworkParams& p) { return p.architecture; })
      .def_property_readonly("tensors", [](const NetworkParams& p) { return tensors_to_arrays(p.tensors); })
      .def_property_readonly("parameter_count", &NetworkParams::parameter_count)
      .def_property_readonly("id", [](const NetworkParams& p) { return checkpoint_id(p); })
      .def("predict", [](const NetworkParams& p, const Array& x) { return predict(p, to_tensor(x)); })
      .def("probabilities",
           [](const NetworkParams& p, const Array& x) { return forward(p, to_tensor(x), 0).distribution; })
      .def(
          "loss", [](const NetworkParams& p, const Array& x, std::size_t y) { return forward(p, to_tensor(x), y).loss; },
          py::arg("x"), py::arg("y"))
      .def(
          "gradients",
          [](const NetworkParams& p, const Array& x, std::size_t y) {
            const auto g = backward(p, to_tensor(x), y);
            return py::make_tuple(g.loss, tensors_to_arrays(g.param_grads), to_array(g.input_grad));
          },
          py::arg("x"), py::arg("y"), "Returns (loss, parameter gradients, input gradient).")
      .def(
          "evaluate",
          [](const NetworkParams& p, const Array& x, const py::array_t<std::int64_t>& y, std::size_t workers) {
            return evaluate(p, arrays_to_dataset(x, y, p.architecture.num_classes()), workers);
          },
          py::arg("X"), py::arg("y"), py::arg("workers") = 1)
      .def(py::self == py::self);

  m.def("init_params", &init_params, py::arg("architecture"), py::arg("seed"));

  m.def(
      "train",
      [](const Architecture& arch, const Array& x, const py::array_t<std::int64_t>& y, std::size_t epochs,
         std::size_t batch_size, double lr, double momentum, std::uint64_t seed, const std::string& mode,
         const std::string& norm, double radius, double alpha, std::size_t workers) {
        TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.learning_rate = lr;
        c.momentum = momentum;
        c.seed = seed;
        c.alpha = alpha;
        c.workers = workers;
        if (mode == "standard") {
          c.mode = TrainMode::standard;
        } else if (mode == "robust") {
          c.mode = TrainMode::robust;
        } else if (mode == "blended") {
          c.mode = TrainMode::blended;
        } else {
          throw InvalidArgument("mode must be one of standard, robust, blended");
        }
        c.uncertainty.family = parse_family(norm);
        c.uncertainty.radius = radius;
        if (c.uncertainty.family == PerturbFamily::tangent) {
          throw InvalidArgument("tangent training is available from the command line only");
        }
        const auto data = arrays_to_dataset(x, y, arch.num_classes());
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(arch, data, c);
        }
        py::list trace;
        for (const auto& e : r.trace.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["loss"] = e.mean_loss;
          d["seconds"] = e.seconds;
          trace.append(d);
        }
        return py::make_tuple(r.params, trace);
      },
      py::arg("architecture"), py::arg("X"), py::arg("y"), py::arg("epochs") = 10, py::arg("batch_size") = 64,
      py::arg("lr") = 0.05, py::arg("momentum") = 0.9, py::arg("seed") = 0, py::arg("mode") = "standard",
      py::arg("norm") = "linf", py::arg("radius") = 0.1, py::arg("alpha") = 0.5, py::arg("workers") = 1,
      "Returns (network, per-epoch trace).");

  m.def(
      "steepest_ascent",
      [](const Array& grad, const std::string& norm, double radius) {
        const auto family = parse_family(norm);
        if (family == PerturbFamily::tangent) throw InvalidArgument("tangent steps need a basis");
        UncertaintySpec spec{family, radius, false};
        return to_array(steepest_ascent(to_tensor(grad), spec));
      },
      py::arg("grad"), py::arg("norm"), py::arg("radius"));
  m.def(
      "box_clip", [](const Array& x, double lo, double hi) { return to_array(box_clip(to_tensor(x), lo, hi)); },
      py::arg("x"), py::arg("lo") = 0.0, py::arg("hi") = 1.0);

  m.def(
      "synth_blobs",
      [](std::size_t n_per_class, std::size_t classes, std::size_t dim, double spread, std::uint64_t seed) {
        return dataset_to_arrays(synth_blobs(n_per_class, classes, dim, spread, seed));
      },
      py::arg("n_per_class"), py::arg("classes"), py::arg("dim"), py::arg("spread"), py::arg("seed"));
  m.def(
      "load_mnist_idx",
      [](const std::filesystem::path& images, const std::filesystem::path& labels) {
        return dataset_to_arrays(load_mnist_idx(images, labels));
      },
      py::arg("images"), py::arg("labels"));

  m.def(
      "save_checkpoint",
      [](const NetworkParams& p, const std::filesystem::path& path, const std::string& config, std::uint64_t seed,
         const std::string& metadata) {
        Checkpoint c;
        c.params = p;
        c.config = config;
        c.config_fingerprint = fnv1a64(config);
        c.seed = seed;
        c.metadata = metadata;
        save_checkpoint(c, path);
      },
      py::arg("network"), py::arg("path"), py::arg("config") = "", py::arg("seed") = 0, py::arg("metadata") = "");
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        auto c = load_checkpoint(path);
        py::dict d;
        d["network"] = c.params;
        d["config"] = c.config;
        d["seed"] = c.seed;
        d["metadata"] = c.metadata;
        return d;
      },
      py::arg("path"));
  m.def(
      "load_adversarial_set",
      [](const std::filesystem::path& path) {
        const auto set = load_adversarial_set(path);
        std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(set.size())};
        shape.insert(shape.end(), set.example_shape.begin(), set.example_shape.end());
        Array x(shape);
        double* px = x.mutable_data();
        std::vector<std::int64_t> labels, origins;
        std::vector<std::string> families;
        for (const auto& r : set.records) {
          px = std::copy(r.example.data().begin(), r.example.data().end(), px);
          labels.push_back(r.label);
          origins.push_back(r.origin_index);
          families.push_back(to_string(r.family));
        }
        py::dict d;
        d["generator_id"] = set.generator_id;
        d["X"] = x;
        d["y"] = py::array(py::cast(labels));
        d["origin_index"] = py::array(py::cast(origins));
        d["family"] = families;
        return d;
      },
      py::arg("path"));

  m.def(
      "frobenius_sup",
      [](const Array& a, const Array& b, const Array& x, double gamma) {
        return frobenius_sup(make_instance(a, b, x, gamma));
      },
      py::arg("A"), py::arg("b"), py::arg("x"), py::arg("gamma"));
  m.def(
      "frobenius_worst_case",
      [](const Array& a, const Array& b, const Array& x, double gamma) {
        return to_array(frobenius_worst_case(make_instance(a, b, x, gamma)));
      },
      py::arg("A"), py::arg("b"), py::arg("x"), py::arg("gamma"));
  m.def(
      "columnwise_sup",
      [](const Array& a, const Array& b, const Array& x, double rho) {
        return columnwise_sup(make_instance(a, b, x, rho));
      },
      py::arg("A"), py::arg("b"), py::arg("x"), py::arg("rho"));
  m.def(
      "columnwise_worst_case",
      [](const Array& a, const Array& b, const Array& x, double rho) {
        return to_array(columnwise_worst_case(make_instance(a, b, x, rho)));
      },
      py::arg("A"), py::arg("b"), py::arg("x"), py::arg("rho"));
  m.def(
      "perturbed_residual",
      [](const Array& a, const Array& b, const Array& x, const Array& delta) {
        return perturbed_residual(make_instance(a, b, x, 0.0), to_tensor(delta));
      },
      py::arg("A"), py::arg("b"), py::arg("x"), py::arg("delta"), "||(A + delta) x - b||_2");
  m.def(
      "verify_equivalences",
      [](std::size_t trials, std::uint64_t seed, std::size_t samples, std::size_t workers) {
        VerificationReport r;
        {
          py::gil_scoped_release release;
          r = verify_equivalences(trials, seed, samples, workers);
        }
        py::dict d;
        d["frobenius"] = report_to_dict(r.frobenius);
        d["columnwise"] = report_to_dict(r.columnwise);
        d["passed"] = r.passed();
        return d;
      },
      py::arg("trials") = 1000, py::arg("seed") = 0, py::arg("samples") = 1000, py::arg("workers") = 1);
}
