#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lrp/cluster.hpp"
#include "lrp/coupling.hpp"
#include "lrp/harness.hpp"
#include "lrp/stable.hpp"
#include "lrp/walk.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// Dicts cross the boundary as JSON text.
json to_json(const py::dict& d) {
  auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(d).cast<std::string>());
}

py::object to_py(const json& j) {
  auto loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

lrp::EnvConfig env_from(const py::dict& d) {
  json merged = lrp::EnvConfig{}.to_json();
  merged.update(to_json(d));
  auto cfg = lrp::EnvConfig::from_json(merged);
  cfg.validate();
  return cfg;
}

py::array_t<int64_t> point_array(const std::vector<lrp::LatticePoint>& pts, int d) {
  py::array_t<int64_t> out({static_cast<py::ssize_t>(pts.size()), static_cast<py::ssize_t>(d)});
  auto a = out.mutable_unchecked<2>();
  for (size_t i = 0; i < pts.size(); ++i)
    for (int j = 0; j < d; ++j) a(i, j) = pts[i][j];
  return out;
}

lrp::LatticePoint point_from(const std::vector<int64_t>& v, int d) {
  if (static_cast<int>(v.size()) != d) throw std::invalid_argument("point has wrong dimension");
  lrp::LatticePoint p;
  for (int j = 0; j < d; ++j) p.c[j] = v[j];
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Random walks on long-range percolation clusters";

  py::class_<lrp::Environment>(m, "Environment")
      .def(py::init([](const py::dict& cfg) { return std::make_unique<lrp::Environment>(env_from(cfg)); }),
           py::arg("config") = py::dict())
      .def("config", [](const lrp::Environment& e) { return to_py(e.config().to_json()); })
      .def("neighbors",
           [](lrp::Environment& e, const std::vector<int64_t>& x) {
             int d = e.config().d;
             return point_array(e.neighbors(point_from(x, d)), d);
           })
      .def("degree", [](lrp::Environment& e, const std::vector<int64_t>& x) {
        return e.degree(point_from(x, e.config().d));
      })
      .def("is_open", [](lrp::Environment& e, const std::vector<int64_t>& x, const std::vector<int64_t>& y) {
        int d = e.config().d;
        return e.pair_state(point_from(x, d), point_from(y, d));
      });

  m.def(
      "run_walk",
      [](lrp::Environment& env, int64_t steps, uint64_t seed) {
        lrp::WalkPath p;
        {
          py::gil_scoped_release release;
          p = lrp::run_walk(env, steps, seed);
        }
        return point_array(p.steps, p.d);
      },
      py::arg("env"), py::arg("steps"), py::arg("seed"), "positions X_0..X_n as an (n+1, d) array");

  m.def("experiment_names", &lrp::experiment_names);
  m.def("default_spec", [](const std::string& name) { return to_py(lrp::ExperimentSpec::defaults(name).to_json()); });
  m.def(
      "run_experiment",
      [](const py::dict& spec) {
        auto s = lrp::ExperimentSpec::from_json(to_json(spec));
        lrp::ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = lrp::run_experiment(s);
        }
        return to_py(r.to_json());
      },
      py::arg("spec"), "spec dict with at least 'experiment'; returns the report dict");

  m.def(
      "sample_stable",
      [](double alpha, double scale, int d, double t, int64_t count, uint64_t seed) {
        auto v = lrp::sample_stable_vectors({alpha, scale, d}, t, count, seed);
        py::array_t<double> out({static_cast<py::ssize_t>(v.size()), static_cast<py::ssize_t>(d)});
        auto a = out.mutable_unchecked<2>();
        for (size_t i = 0; i < v.size(); ++i)
          for (int j = 0; j < d; ++j) a(i, j) = v[i][j];
        return out;
      },
      py::arg("alpha"), py::arg("scale"), py::arg("d"), py::arg("t"), py::arg("count"), py::arg("seed"));

  m.def("estimate_alpha_ecf", [](const std::vector<std::vector<double>>& xs) {
    auto e = lrp::estimate_alpha_ecf(xs);
    return py::dict(py::arg("alpha") = e.alpha, py::arg("alpha_se") = e.alpha_se, py::arg("scale") = e.scale,
                    py::arg("r2") = e.r2);
  });
  m.def(
      "estimate_alpha_hill",
      [](const std::vector<double>& mags, double top_fraction) {
        auto h = lrp::estimate_alpha_hill(mags, top_fraction);
        return py::dict(py::arg("alpha") = h.alpha, py::arg("alpha_deep") = h.alpha_deep,
                        py::arg("heavy_tail") = h.heavy_tail);
      },
      py::arg("magnitudes"), py::arg("top_fraction") = 0.05);

  m.def(
      "cluster_sizes",
      [](const py::dict& cfg, int64_t n) {
        auto c = env_from(cfg);
        c.backend = lrp::Backend::kExactBoxed;
        c.box_half_width = n;
        lrp::Environment env(c);
        return lrp::decompose(env, n).sizes;
      },
      py::arg("config"), py::arg("half_width"), "component sizes of the box, largest first");

  m.def(
      "coupling_errors",
      [](lrp::Environment& env, int64_t steps, uint64_t seed, const py::dict& params) {
        json pj = to_json(params);
        lrp::CouplingParams p;
        p.k = pj.value("k", 10);
        p.alpha = env.config().alpha();
        p.epsilon = pj.value("epsilon", p.epsilon);
        p.gamma = pj.value("gamma", p.gamma);
        p.delta = pj.value("delta", p.delta);
        auto path = lrp::run_walk(env, steps, seed);
        return to_py(lrp::to_json(lrp::detect_bad_events({path}, env, p)));
      },
      py::arg("env"), py::arg("steps"), py::arg("seed"), py::arg("params") = py::dict());
}
