#include "haicu/cli.hpp"
#include "haicu/dataset.hpp"
#include "haicu/errors.hpp"
#include "haicu/metrics.hpp"
#include "haicu/service.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace haicu;

namespace {

std::vector<Vec2> to_points(const std::vector<std::pair<double, double>>& xy) {
    std::vector<Vec2> out;
    out.reserve(xy.size());
    for (const auto& [x, y] : xy) out.emplace_back(x, y);
    return out;
}

std::vector<std::string> scene_lines(const std::vector<Scene>& scenes) {
    std::vector<std::string> out;
    for (const auto& s : scenes) out.push_back(scene_to_json(s).dump());
    return out;
}

}  // namespace

PYBIND11_MODULE(_haicu, m) {
    m.doc() = "Native core of the haicu trajectory forecasting toolkit";

    auto base = py::register_exception<Error>(m, "HaicuError", PyExc_RuntimeError);
    py::register_exception<InvalidParameter>(m, "InvalidParameter", base.ptr());
    py::register_exception<SimplexViolation>(m, "SimplexViolation", base.ptr());
    py::register_exception<InvariantViolation>(m, "InvariantViolation", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<NotFound>(m, "NotFound", base.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());
    py::register_exception<Divergence>(m, "Divergence", base.ptr());

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv = {"haicu"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command line tool; returns (exit code, stdout, stderr).");

    m.def(
        "generate_scenes",
        [](const std::string& spec, std::uint64_t seed) {
            const auto j = nlohmann::json::parse(spec);
            const auto& gen_j = j.contains("generator") ? j.at("generator") : j;
            auto gen = generator_config_from_json(gen_j);
            const int k = static_cast<int>(gen.classes.size());
            auto noise = j.contains("noise") ? noise_model_from_json(j.at("noise"), k)
                                             : PerceptionNoiseModel::identity(k);
            return scene_lines(generate_synthetic(gen, noise, seed));
        },
        py::arg("spec"), py::arg("seed") = 0, "Synthetic scenes as JSON strings.");

    m.def(
        "load_scenes", [](const std::string& path) { return scene_lines(load_scenes(path)); }, py::arg("path"));

    m.def(
        "dataset_statistics",
        [](const std::string& path) { return dataset_statistics(load_scenes(path)).to_json().dump(); },
        py::arg("path"));

    m.def(
        "ade",
        [](const std::vector<std::pair<double, double>>& pred, const std::vector<std::pair<double, double>>& gt,
           int horizon) { return ade(to_points(pred), to_points(gt), horizon); },
        py::arg("pred"), py::arg("gt"), py::arg("horizon"));
    m.def(
        "fde",
        [](const std::vector<std::pair<double, double>>& pred, const std::vector<std::pair<double, double>>& gt,
           int horizon) { return fde(to_points(pred), to_points(gt), horizon); },
        py::arg("pred"), py::arg("gt"), py::arg("horizon"));

    m.def(
        "welch_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            auto w = welch_t_test(a, b);
            return py::make_tuple(w.t, w.df, w.p);
        },
        py::arg("a"), py::arg("b"), "Two-tailed Welch test; returns (t, df, p).");

    m.def(
        "count_parameters",
        [](const std::string& config) {
            auto model = make_model(ModelConfig::from_json(nlohmann::json::parse(config)), 0);
            return count_parameters(model);
        },
        py::arg("config"));

    py::class_<Service>(m, "Service")
        .def(py::init([](const std::string& checkpoint, const std::string& data) {
                 return std::make_unique<Service>(load_checkpoint(checkpoint), load_scenes(data));
             }),
             py::arg("checkpoint"), py::arg("data"))
        .def(
            "request",
            [](Service& s, const std::string& method, const std::string& path, const std::string& body) {
                Service::Reply r;
                {
                    py::gil_scoped_release release;
                    r = s.handle(method, path, body);
                }
                return py::make_tuple(r.status, r.body.dump());
            },
            py::arg("method"), py::arg("path"), py::arg("body") = "",
            "Dispatches one HTTP-style request; returns (status, JSON body).")
        .def_property_readonly("checkpoint_id", &Service::checkpoint_id);
}
