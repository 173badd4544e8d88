#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <random>

#include "neuroevo/aco.hpp"
#include "neuroevo/app.hpp"
#include "neuroevo/error.hpp"
#include "neuroevo/lstm.hpp"
#include "neuroevo/model_io.hpp"
#include "neuroevo/trainer.hpp"

namespace py = pybind11;
using namespace neuroevo;

namespace {

std::string value_text(const py::handle& v) {
    if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
    if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
        std::string out;
        for (const auto& item : v) out += (out.empty() ? "" : ",") + py::str(item).cast<std::string>();
        return out;
    }
    return py::str(v).cast<std::string>();
}

RunConfig config_from(const py::dict& settings) {
    RunConfig cfg;
    for (const auto& [key, value] : settings) cfg.set(py::str(key).cast<std::string>(), value_text(value));
    cfg.finalize();
    return cfg;
}

py::dict train_report_dict(const TrainReport& r) {
    py::dict d;
    d["cost_history"] = r.cost_history;
    d["final_train_mse"] = r.final_train_mse;
    d["test_mse"] = r.test_mse;
    d["test_mae"] = r.test_mae;
    d["wall_time_s"] = r.wall_time_s;
    return d;
}

py::dict log_row_dict(const IterationLog& row) {
    py::dict d;
    d["iteration"] = row.iteration;
    d["fitness"] = row.fitness;
    d["m1_connections"] = row.m1_count;
    d["m2_connections"] = row.m2_count;
    d["total_connections"] = row.total_connections;
    d["wall_time_s"] = row.wall_time_s;
    return d;
}

std::vector<std::array<double, kWidth>> window_from(const std::vector<std::vector<double>>& rows) {
    std::vector<std::array<double, kWidth>> x(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() > kWidth)
            throw Error(ErrorCode::DimensionMismatch, "a window row holds at most 16 values");
        std::copy(rows[t].begin(), rows[t].end(), x[t].begin());
    }
    return x;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Masked-gate LSTM training and ant colony mesh evolution";

    // Raised for every library failure; `code` names the error code.
    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result(
        [&] { return py::object(py::exception<Error>(m, "NeuroevoError", PyExc_RuntimeError)); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const py::object& type = error_type.get_stored();
            py::object exc = type(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(type.ptr(), exc.ptr());
        }
    });

    py::enum_<Arch>(m, "Arch").value("I", Arch::I).value("II", Arch::II).value("III", Arch::III);
    m.def("default_window", &default_window, py::arg("arch"));

    py::class_<Mesh>(m, "Mesh")
        .def(py::init<>())
        .def_static("full", &Mesh::full)
        .def_static("empty", &Mesh::empty)
        .def_static("reference", &reference_mesh, "Reference 139-edge mesh with every mesh_2 entry set")
        .def_static("from_text", [](const std::string& text) { return parse_mesh_text(text); })
        .def("to_text", [](const Mesh& mesh) { return format_mesh_text(mesh); })
        .def("mark", [](Mesh& mesh, std::size_t i, std::size_t j) {
            if (i >= kWidth || j >= kWidth) throw py::index_error("mesh index out of range");
            mesh.mark(i, j);
        })
        .def_property_readonly("m1", [](const Mesh& mesh) { return mesh.m1; })
        .def_property_readonly("m2", [](const Mesh& mesh) { return mesh.m2; })
        .def_property_readonly("inputs", [](const Mesh& mesh) { return mesh.input; })
        .def("m1_count", &Mesh::m1_count)
        .def("m2_count", &Mesh::m2_count)
        .def("valid", &Mesh::valid)
        .def("__eq__", [](const Mesh& a, const Mesh& b) { return a == b; })
        .def("__repr__", [](const Mesh& mesh) {
            return "<Mesh m1=" + std::to_string(mesh.m1_count()) + " m2=" + std::to_string(mesh.m2_count()) + ">";
        });

    m.def(
        "count_weights",
        [](Arch arch, const Mesh& mesh, std::optional<std::size_t> window) {
            return count_weights(arch, window.value_or(default_window(arch)), mesh);
        },
        py::arg("arch"), py::arg("mesh"), py::arg("window") = py::none());

    m.def(
        "sample_mesh",
        [](std::size_t n_ants, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return generate_paths(Pheromones{}, n_ants, rng);
        },
        py::arg("n_ants"), py::arg("seed") = 1, "Mesh walked by n_ants ants over uniform pheromones");

    py::class_<Network>(m, "Network")
        .def(py::init([](Arch arch, const Mesh& mesh, std::optional<std::size_t> window, std::uint64_t seed) {
                 return Network(arch, window.value_or(default_window(arch)), 1, mesh, seed);
             }),
             py::arg("arch"), py::arg("mesh") = Mesh::full(), py::arg("window") = py::none(), py::arg("seed") = 1)
        .def_static("load", [](const std::filesystem::path& path) { return load_network(path); })
        .def("save", [](const Network& net, const std::filesystem::path& path) { save_network(net, path); })
        .def_property_readonly("arch", &Network::arch)
        .def_property_readonly("window", &Network::window)
        .def_property_readonly("mesh", &Network::mesh)
        .def_property_readonly("channels", [](const Network& net) { return net.inputs.channel_order; })
        .def("weight_count", [](const Network& net) { return count_weights(net.arch(), net.window(), net.mesh()); })
        .def(
            "forward",
            [](const Network& net, const std::vector<std::vector<double>>& rows) {
                const auto x = window_from(rows);
                return network_forward(net, x);
            },
            py::arg("window"), "Prediction for one window of rows (time steps) of normalized values");

    m.def("cross_correlate", [](const std::vector<double>& x, const std::vector<double>& vib) {
        return cross_correlate(x, vib);
    });
    m.def("crc32", [](const py::bytes& data) {
        const std::string s = data;
        return crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    });

    m.def(
        "synth",
        [](const std::filesystem::path& out_dir, std::uint64_t seed, std::size_t n_flights, std::size_t length,
           std::size_t n_channels) {
            py::gil_scoped_release release;
            return cmd_synth(seed, n_flights, length, n_channels, out_dir).files;
        },
        py::arg("out_dir"), py::arg("seed") = 1, py::arg("n_flights") = 30, py::arg("length") = 600,
        py::arg("n_channels") = 16, "Write a synthetic flight corpus; returns the CSV paths");

    m.def(
        "correlate",
        [](const std::filesystem::path& data_dir, const std::filesystem::path& out_csv) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& e : cmd_correlate(data_dir, out_csv).entries) out.emplace_back(e.name, e.score);
            return out;
        },
        py::arg("data_dir"), py::arg("out_csv"), "Rank parameters against the target; best first");

    m.def(
        "train",
        [](const py::dict& settings) {
            const RunConfig cfg = config_from(settings);
            TrainReport r;
            {
                py::gil_scoped_release release;
                r = cmd_train(cfg);
            }
            return train_report_dict(r);
        },
        py::arg("settings"), "Train one network from run-config settings given as a dict");

    m.def(
        "evolve",
        [](const py::dict& settings, const std::string& role) {
            const RunConfig cfg = config_from(settings);
            const Role r = parse_role(role);
            py::gil_scoped_release release;
            return cmd_evolve(cfg, r);
        },
        py::arg("settings"), py::arg("role") = "local", "Run mesh evolution; returns the process exit status");

    m.def(
        "evaluate",
        [](const std::filesystem::path& model, const std::filesystem::path& data_dir,
           const std::filesystem::path& out_dir) {
            EvaluateResult r;
            {
                py::gil_scoped_release release;
                r = cmd_evaluate(model, data_dir, out_dir);
            }
            py::dict d;
            d["mse"] = r.overall.mse;
            d["mae"] = r.overall.mae;
            py::dict flights;
            for (const auto& [id, e] : r.per_flight) flights[py::str(id)] = py::make_tuple(e.mse, e.mae);
            d["per_flight"] = flights;
            return d;
        },
        py::arg("model"), py::arg("data_dir"), py::arg("out_dir"));

    m.def(
        "report",
        [](const std::filesystem::path& log, const std::filesystem::path& out_csv, std::size_t k) {
            const auto r = cmd_report(log, k, out_csv);
            py::list rows;
            for (const auto& row : r.top) rows.append(log_row_dict(row));
            return rows;
        },
        py::arg("log"), py::arg("out_csv"), py::arg("k") = 30, "Top-k rows of an evolution log, best first");
}
