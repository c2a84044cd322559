#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kgmode/analysis.hpp"
#include "kgmode/evolve.hpp"
#include "kgmode/fgr.hpp"
#include "kgmode/hash.hpp"
#include "kgmode/normalform.hpp"
#include "kgmode/pipeline.hpp"
#include "kgmode/spectral.hpp"

namespace py = pybind11;
using namespace kgmode;

namespace {

template <class T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

template <class T>
std::vector<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<T>(a.data(), a.data() + a.size());
}

py::dict fit_dict(const FitResult& f) {
  py::dict d;
  d["model"] = f.model;
  for (const auto& [k, v] : f.params) d[py::str(k)] = v;
  d["r2"] = f.r2;
  return d;
}

py::dict bands_dict(const std::vector<ProbeBand>& bands) {
  std::vector<double> band, m, p;
  for (const auto& b : bands) {
    band.push_back(b.band);
    m.push_back(b.measured);
    p.push_back(b.predicted);
  }
  py::dict d;
  d["band"] = to_numpy(band);
  d["measured"] = to_numpy(m);
  d["predicted"] = to_numpy(p);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Radial Klein-Gordon lab with one internal mode";
  m.attr("__version__") = kCodeVersion;

  py::register_exception<Error>(m, "KgmodeError");

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", &parse_config, py::arg("text"))
      .def_static("load", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"))
      .def("format", [](const RunConfig& c) { return format_config(c); })
      .def("set", [](RunConfig& c, const std::string& k, const std::string& v) { apply_config_entry(c, k, v); },
           py::arg("key"), py::arg("value"))
      .def("hash", [](const RunConfig& c) { return hex(c.hash()); })
      .def("horizon", &RunConfig::horizon)
      .def_readwrite("target_lambda", &RunConfig::target_lambda)
      .def_readwrite("epsilon0", &RunConfig::epsilon0)
      .def_readwrite("t_max", &RunConfig::t_max)
      .def_readwrite("dt", &RunConfig::dt)
      .def_readwrite("k_max", &RunConfig::k_max)
      .def_readwrite("R", &RunConfig::R)
      .def_readwrite("dr", &RunConfig::dr)
      .def_readwrite("k_cap", &RunConfig::k_cap)
      .def_readwrite("kernel_window", &RunConfig::kernel_window)
      .def_readwrite("snapshot_every", &RunConfig::snapshot_every)
      .def_readwrite("probe_trials", &RunConfig::probe_trials)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("nonlinearity", &RunConfig::nonlinearity);

  py::class_<SpectralData>(m, "SpectralData")
      .def_readonly("lambda_", &SpectralData::lambda)
      .def_readonly("energy", &SpectralData::energy)
      .def_property_readonly("depth", [](const SpectralData& s) { return s.potential.depth; })
      .def_property_readonly("n_r", &SpectralData::nr)
      .def_property_readonly("n_k", &SpectralData::nk)
      .def_property_readonly("R", [](const SpectralData& s) { return s.radial.R; })
      .def_property_readonly("r", [](const SpectralData& s) { return to_numpy(s.radial.r); })
      .def_property_readonly("k", [](const SpectralData& s) { return to_numpy(s.kgrid.k); })
      .def_property_readonly("k_weights", [](const SpectralData& s) { return to_numpy(s.kgrid.w); })
      .def_property_readonly("kstar", [](const SpectralData& s) { return s.kgrid.kstar; })
      .def_property_readonly("phi", [](const SpectralData& s) { return to_numpy(s.phi); })
      .def("forward",
           [](const SpectralData& s, const py::array_t<double, py::array::c_style | py::array::forcecast>& f) {
             return to_numpy(s.forward(std::span<const double>(from_numpy(f))));
           })
      .def("inverse",
           [](const SpectralData& s, const py::array_t<double, py::array::c_style | py::array::forcecast>& f) {
             return to_numpy(s.inverse(std::span<const double>(from_numpy(f))));
           });

  py::class_<GenericityReport>(m, "GenericityReport")
      .def_readonly("zero_energy_regular", &GenericityReport::zero_energy_regular)
      .def_readonly("slope", &GenericityReport::slope)
      .def_readonly("intercept", &GenericityReport::intercept);

  m.def(
      "build_spectrum",
      [](const RunConfig& cfg) {
        SpectrumBuild b;
        {
          py::gil_scoped_release release;
          b = build_spectrum(cfg);
        }
        return py::make_tuple(std::move(b.spectral), b.genericity);
      },
      py::arg("config"), "Tuned potential, grids and eigenfunction table; returns (spectral, genericity).");

  py::class_<ResonanceData>(m, "ResonanceData")
      .def_readonly("lambda_", &ResonanceData::lambda)
      .def_readonly("kstar", &ResonanceData::kstar)
      .def_readonly("gamma", &ResonanceData::gamma)
      .def_property_readonly("coupling", [](const ResonanceData& r) { return to_numpy(r.coupling); })
      .def_property_readonly("coupling_star", &ResonanceData::coupling_at_kstar)
      .def("rho", &ResonanceData::rho, py::arg("t"));

  m.def("compute_kstar", &compute_kstar, py::arg("lambda_"));
  m.def("compute_resonance", &compute_resonance, py::arg("spectral"), py::arg("epsilon0"));
  m.def(
      "mollified_gamma_extrapolated",
      [](const SpectralData& s, const ResonanceData& r) {
        return mollified_gamma_table(r.coupling, s.kgrid, s.lambda).extrapolated;
      },
      py::arg("spectral"), py::arg("resonance"));

  py::class_<TraceStore>(m, "TraceStore")
      .def_readonly("dt", &TraceStore::dt)
      .def_property_readonly("t",
                             [](const TraceStore& tr) {
                               std::vector<double> v;
                               for (const auto& r : tr.records) v.push_back(r.t);
                               return to_numpy(v);
                             })
      .def_property_readonly("A",
                             [](const TraceStore& tr) {
                               std::vector<cplx> v;
                               for (const auto& r : tr.records) v.push_back(r.A);
                               return to_numpy(v);
                             })
      .def_property_readonly("f_star",
                             [](const TraceStore& tr) {
                               std::vector<cplx> v;
                               for (const auto& r : tr.records) v.push_back(r.f_star);
                               return to_numpy(v);
                             })
      .def_property_readonly("energy",
                             [](const TraceStore& tr) {
                               std::vector<double> v;
                               for (const auto& r : tr.records) v.push_back(r.energy);
                               return to_numpy(v);
                             })
      .def_property_readonly("snapshot_times", [](const TraceStore& tr) {
        std::vector<double> v;
        for (const auto& s : tr.snapshots) v.push_back(s.t);
        return to_numpy(v);
      });

  m.def(
      "simulate",
      [](const RunConfig& cfg, const SpectralData& s) {
        py::gil_scoped_release release;
        return run(cfg, s).traces;
      },
      py::arg("config"), py::arg("spectral"), "Evolve from A = eps0/2, f = 0 to the horizon.");

  m.def(
      "fit_decay",
      [](const py::array_t<double>& t, const py::array_t<cplx>& X, double lambda, double eps,
         const std::string& model) {
        return fit_dict(fit_decay(from_numpy<double>(t), from_numpy<cplx>(X), lambda, eps, model));
      },
      py::arg("t"), py::arg("X"), py::arg("lambda_"), py::arg("epsilon0"), py::arg("model") = "A");

  m.def(
      "resonant_fit",
      [](const py::array_t<double>& t, const py::array_t<cplx>& f, double lambda, double gamma,
         double coupling_star, double y0_seed) {
        const ResonantModel model{lambda, gamma, coupling_star};
        return fit_dict(resonant_fit(from_numpy<double>(t), from_numpy<cplx>(f), model, y0_seed));
      },
      py::arg("t"), py::arg("f_star"), py::arg("lambda_"), py::arg("gamma"), py::arg("coupling_star"),
      py::arg("y0_seed"));

  m.def(
      "pv_quadrature",
      [](const py::array_t<double>& g, double x0, double h, double a) {
        return pv_quadrature(from_numpy<double>(g), x0, h, a);
      },
      py::arg("g"), py::arg("x0"), py::arg("h"), py::arg("a"));

  m.def(
      "bilinear_scaling_probe",
      [](int trials, std::uint64_t seed) {
        ProbeReport r;
        {
          py::gil_scoped_release release;
          r = bilinear_scaling_probe(trials, seed);
        }
        py::dict d;
        d["bilin1"] = bands_dict(r.bilin1);
        d["bilin2"] = bands_dict(r.bilin2);
        d["slope1_low"] = r.slope1_low;
        d["slope2_low"] = r.slope2_low;
        d["slope2_high"] = r.slope2_high;
        d["constant1"] = r.constant1;
        d["constant2"] = r.constant2;
        return d;
      },
      py::arg("trials") = 6, py::arg("seed") = 20240601);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "kgmode");
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Run a kgmode subcommand; returns the exit code.");
}
