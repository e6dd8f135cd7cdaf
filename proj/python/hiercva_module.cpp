#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "hiercva/config.hpp"
#include "hiercva/defaults.hpp"
#include "hiercva/errors.hpp"
#include "hiercva/labels.hpp"
#include "hiercva/market.hpp"
#include "hiercva/pipeline.hpp"
#include "hiercva/planner.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/validation.hpp"

namespace py = pybind11;
using namespace hiercva;

namespace {

py::array_t<double> labels_array(const LabelSet& l) {
    py::array_t<double> out({l.n_paths, l.n_replicas});
    auto buf = out.mutable_unchecked<2>();
    for (int k = 0; k < l.n_paths; ++k)
        for (int j = 0; j < l.n_replicas; ++j) buf(k, j) = l.at(k, j);
    return out;
}

py::array_t<double> features_array(const FeatureMatrix& f) {
    py::array_t<double> out({f.rows, f.cols()});
    auto buf = out.mutable_unchecked<2>();
    for (int r = 0; r < f.rows; ++r)
        for (int c = 0; c < f.cols(); ++c) buf(r, c) = f.at(r, c);
    return out;
}

std::vector<double> to_vector(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    auto buf = a.unchecked<1>();
    std::vector<double> out(buf.shape(0));
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) out[i] = buf(i);
    return out;
}

}  // namespace

PYBIND11_MODULE(_hiercva, m) {
    m.doc() = "Hierarchically simulated CVA learning: market/default simulation, "
              "labels, twin validation and planner arithmetic.";

    py::register_exception<config_error>(m, "ConfigError");
    py::register_exception<numeric_error>(m, "NumericError");

    py::class_<RandomStream>(m, "RandomStream")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("split", &RandomStream::split, py::arg("key"))
        .def("normals", [](RandomStream& s, std::size_t n) { return s.sample_normals(n); })
        .def("exponentials",
             [](RandomStream& s, std::size_t n) { return s.sample_exponentials(n); });

    py::class_<MarketBlock>(m, "MarketBlock")
        .def_property_readonly("n_paths", &MarketBlock::n_paths)
        .def_property_readonly("n_steps", &MarketBlock::n_steps)
        .def("rate", py::overload_cast<int, int, int>(&MarketBlock::rate, py::const_))
        .def("fx", &MarketBlock::fx)
        .def("intensity", py::overload_cast<int, int, int>(&MarketBlock::intensity, py::const_))
        .def("discount", py::overload_cast<int, int>(&MarketBlock::discount, py::const_))
        .def("hazard", py::overload_cast<int, int, int>(&MarketBlock::hazard, py::const_));

    py::class_<DefaultBlock>(m, "DefaultBlock")
        .def_property_readonly("n_paths", &DefaultBlock::n_paths)
        .def_property_readonly("n_replicas", &DefaultBlock::n_replicas)
        .def("indicator", &DefaultBlock::indicator)
        .def("default_step", [](const DefaultBlock& d, int k, int l, int c) {
            return static_cast<int>(d.default_step(k, l, c));
        });

    py::class_<MtMCube>(m, "MtMCube")
        .def_readonly("n_paths", &MtMCube::n_paths)
        .def_readonly("n_steps", &MtMCube::n_steps)
        .def_readonly("n_clients", &MtMCube::n_clients)
        .def("at", py::overload_cast<int, int, int>(&MtMCube::at, py::const_));

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def_property_readonly("seed", [](const PipelineConfig& c) { return c.seed; })
        .def_property_readonly("paths", [](const PipelineConfig& c) { return c.sim.paths; })
        .def_property_readonly("replicas",
                               [](const PipelineConfig& c) { return c.sim.replicas; })
        .def("set_scale",
             [](PipelineConfig& c, int m, int n) {
                 c.sim.paths = m;
                 c.sim.replicas = n;
             })
        .def("set_output_dir",
             [](PipelineConfig& c, const std::string& dir) { c.output_dir = dir; })
        .def("hash", &config_hash);

    m.def("load_config", &load_config, py::arg("path"));
    m.def("parse_config", &parse_config, py::arg("json_text"));

    m.def(
        "simulate",
        [](const PipelineConfig& cfg, int n_paths, int n_replicas) {
            RandomStream root(cfg.seed);
            auto book = resolve_book(cfg);
            SimulationSet sim =
                simulate_set(cfg.model, cfg.grid, book, n_paths > 0 ? n_paths : cfg.sim.paths,
                             n_replicas > 0 ? n_replicas : cfg.sim.replicas,
                             root.split(stream_keys::kTrainSim));
            return py::make_tuple(std::move(sim.market), std::move(sim.defaults),
                                  std::move(sim.cube));
        },
        py::arg("config"), py::arg("paths") = 0, py::arg("replicas") = 0,
        "Simulate a (market, defaults, mtm cube) set from a config.");

    m.def(
        "defaults_label",
        [](int step, const PipelineConfig& cfg, const MarketBlock& market,
           const DefaultBlock& defaults) {
            auto book = resolve_book(cfg);
            MtMCube cube = build_mtm_cube(market, book, cfg.model);
            return labels_array(defaults_label(step, market, defaults, cube));
        },
        py::arg("step"), py::arg("config"), py::arg("market"), py::arg("defaults"));

    m.def(
        "intensity_label",
        [](int step, const PipelineConfig& cfg, const MarketBlock& market,
           const DefaultBlock& defaults) {
            auto book = resolve_book(cfg);
            MtMCube cube = build_mtm_cube(market, book, cfg.model);
            return labels_array(intensity_label(step, market, defaults, cube));
        },
        py::arg("step"), py::arg("config"), py::arg("market"), py::arg("defaults"));

    m.def(
        "features",
        [](int step, const MarketBlock& market, const DefaultBlock& defaults) {
            return features_array(features_at(step, market, defaults));
        },
        py::arg("step"), py::arg("market"), py::arg("defaults"));

    m.def(
        "twin_l2_error",
        [](py::array_t<double> phi, py::array_t<double> t1, py::array_t<double> t2) {
            EstimateWithError e = twin_l2_error(to_vector(phi), to_vector(t1), to_vector(t2));
            return py::make_tuple(e.value, e.std_error);
        },
        py::arg("predictions"), py::arg("twin1"), py::arg("twin2"));
    m.def(
        "twin_relative_rmse",
        [](py::array_t<double> phi, py::array_t<double> t1, py::array_t<double> t2) {
            return twin_relative_rmse(to_vector(phi), to_vector(t1), to_vector(t2));
        },
        py::arg("predictions"), py::arg("twin1"), py::arg("twin2"));
    m.def(
        "estimate_qr",
        [](py::array_t<double> g1, py::array_t<double> g2) {
            QRDecomposition qr = estimate_qr(to_vector(g1), to_vector(g2));
            return py::make_tuple(qr.q, qr.r, qr.total);
        },
        py::arg("g1"), py::arg("g2"),
        "Q/R variance split from paired conditionally independent losses.");
    m.def(
        "optimal_n", [](double q, double r, double p) { return optimal_n(q, r, p).value; },
        py::arg("q"), py::arg("r"), py::arg("p"));
    m.def("estimate_p", &estimate_p, py::arg("n1"), py::arg("t1"), py::arg("n2"), py::arg("t2"));
    m.def("heuristic_m", &heuristic_m, py::arg("budget"), py::arg("n"), py::arg("p"));

    m.def(
        "run",
        [](const PipelineConfig& cfg) {
            RunManifest man = run(cfg);
            py::dict out;
            out["config_hash"] = man.config_hash;
            out["seed"] = man.seed;
            out["phase_seconds"] = man.phase_seconds;
            out["outputs"] = man.outputs;
            return out;
        },
        py::arg("config"), "Simulate, train, validate; artifacts land in output_dir.");
}
