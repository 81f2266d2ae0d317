#include "mnode/commands.hpp"
#include "mnode/error.hpp"
#include "mnode/knn_graph.hpp"
#include "mnode/ode.hpp"
#include "mnode/sphere.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using nlohmann::json;

namespace {

py::tuple dataset_tuple(const mnode::Dataset& d) {
  return py::make_tuple(d.x, d.y, d.num_classes);
}

}  // namespace

PYBIND11_MODULE(_mnode, m) {
  m.doc() = "Manifold-constrained neural ODE core (C++)";

  static py::exception<mnode::Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<mnode::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<mnode::IndexError>(m, "IndexError", base.ptr());
  py::register_exception<mnode::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<mnode::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<mnode::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<mnode::SolverError>(m, "SolverError", base.ptr());
  py::register_exception<mnode::ChartError>(m, "ChartError", base.ptr());
  py::register_exception<mnode::TrainingAbort>(m, "TrainingAbort", base.ptr());

  py::class_<mnode::NeighborGraph>(m, "NeighborGraph")
      .def_property_readonly("n", &mnode::NeighborGraph::n)
      .def_property_readonly("k", &mnode::NeighborGraph::k)
      .def_property_readonly("rho", &mnode::NeighborGraph::rho)
      .def_property_readonly("sigma", &mnode::NeighborGraph::sigma)
      .def("probability", &mnode::NeighborGraph::probability, py::arg("i"), py::arg("j"))
      .def("edges",
           [](const mnode::NeighborGraph& g) {
             py::list out;
             for (const auto& e : g.edges()) out.append(py::make_tuple(e.i, e.j, e.distance, e.p));
             return out;
           },
           "list of (i, j, distance, p) with i < j")
      .def("dense", [](const mnode::NeighborGraph& g) {
        mnode::Mat p = mnode::Mat::Zero(g.n(), g.n());
        for (const auto& e : g.edges()) p(e.i, e.j) = p(e.j, e.i) = e.p;
        return p;
      });

  m.def(
      "build_graph",
      [](const mnode::Mat& x, int k, const std::string& sigma_mode, bool normalize) {
        mnode::GraphConfig c;
        c.k = k;
        c.sigma_mode = mnode::parse_sigma_mode(sigma_mode);
        c.normalize = normalize;
        return mnode::build_graph(x, c);
      },
      py::arg("x"), py::arg("k") = 15, py::arg("sigma_mode") = "literal", py::arg("normalize") = true);

  m.def(
      "integrate_linear",
      [](const mnode::Mat& a, const mnode::Vec& h0, double t0, double t1, const std::string& method,
         double rtol, double atol, std::int64_t fixed_steps) {
        mnode::SolverConfig c;
        c.method = mnode::parse_method(method);
        c.t0 = t0;
        c.t1 = t1;
        c.rtol = rtol;
        c.atol = atol;
        c.fixed_steps = fixed_steps;
        const auto s = mnode::integrate(mnode::LinearDynamics(a), h0, c);
        py::dict out;
        out["endpoint"] = s.endpoint;
        out["nfe"] = s.nfe;
        out["accepted"] = s.accepted;
        out["rejected"] = s.rejected;
        return out;
      },
      "solve dh/dt = A h", py::arg("a"), py::arg("h0"), py::arg("t0") = 0.0, py::arg("t1") = 1.0,
      py::arg("method") = "dopri5", py::arg("rtol") = 1e-3, py::arg("atol") = 1e-3, py::arg("fixed_steps") = 100);

  m.def(
      "load_idx",
      [](const std::filesystem::path& images, const std::filesystem::path& labels, std::optional<std::size_t> limit) {
        return dataset_tuple(mnode::load_idx(mnode::resolve_data_path(images), mnode::resolve_data_path(labels), limit));
      },
      "(x, y, num_classes); pixels scaled to [0, 1]", py::arg("images"), py::arg("labels"),
      py::arg("limit") = py::none());
  m.def(
      "load_series", [](const std::filesystem::path& p) {
        return dataset_tuple(mnode::load_delimited_series(mnode::resolve_data_path(p)));
      },
      py::arg("path"));
  m.def("data_dir", &mnode::data_dir);

  m.def(
      "chart_to_ambient", [](const mnode::Vec& l, double r) -> mnode::Vec { return mnode::chart_to_ambient(l, r); },
      py::arg("l"), py::arg("radius") = 1.0);

  m.def("_resolve_config", [](const std::string& doc) {
    return mnode::to_json(mnode::parse_run_config(json::parse(doc))).dump();
  });
  m.def("_train", [](const std::string& doc, const std::filesystem::path& out) {
    const auto cfg = mnode::parse_run_config(json::parse(doc));
    py::gil_scoped_release release;
    const auto s = mnode::cmd_train(cfg, out);
    json j = {{"test_accuracy", s.test.accuracy}, {"epochs", json::array()}};
    for (const auto& e : s.epochs) j["epochs"].push_back(mnode::epoch_metrics_json(e));
    return j.dump();
  });
  m.def("_eval", [](const std::filesystem::path& run, const std::string& split) {
    py::gil_scoped_release release;
    const auto r = mnode::cmd_eval(run, split);
    return json{{"accuracy", r.accuracy}, {"confusion", r.confusion}, {"nfe", r.nfe}}.dump();
  });
  m.def("_nfe_report", [](const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out) {
    return mnode::cmd_nfe_report(runs, out).dump();
  });
  m.def("least_squares_slope", [](const std::vector<double>& x, const std::vector<double>& y) {
    return mnode::least_squares_slope(x, y);
  });
}
