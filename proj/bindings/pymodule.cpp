// Python bindings: a thin layer over the fusion core. Arrays are numpy
// float64 in model space ([-1, 1]) for fusion inputs and display space
// ([0, 255]) for metrics, matching the C++ conventions. Options ride in as
// config text with exactly the same keys the CLI accepts.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "digfuse/errors.hpp"
#include "digfuse/external_denoiser.hpp"
#include "digfuse/fusion.hpp"
#include "digfuse/metrics.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/run_config.hpp"
#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace py = pybind11;
using namespace digfuse;

namespace {

ImageTensor tensor_from_array(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& a) {
    if (a.ndim() != 2 && a.ndim() != 3)
        throw digfuse::ConfigError("arrays must be 2-D (H, W) or 3-D (H, W, C)");
    int h = static_cast<int>(a.shape(0));
    int w = static_cast<int>(a.shape(1));
    int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    ImageTensor t(h, w, c);
    std::copy(a.data(), a.data() + t.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const ImageTensor& t) {
    py::array_t<double> a(t.c == 1 ? std::vector<py::ssize_t>{t.h, t.w}
                                   : std::vector<py::ssize_t>{t.h, t.w, t.c});
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

ModalityStack stack_from_lists(const std::vector<py::array_t<double, py::array::c_style |
                                                                 py::array::forcecast>>& arrays,
                               std::vector<std::string> names) {
    if (names.empty())
        for (size_t i = 0; i < arrays.size(); ++i) names.push_back("m" + std::to_string(i));
    ModalityStack ms;
    ms.names = std::move(names);
    for (const auto& a : arrays) ms.images.push_back(tensor_from_array(a));
    ms.validate();
    return ms;
}

std::unique_ptr<Denoiser> oracle_from_config(const RunConfig& cfg, const ModalityStack& ms,
                                             const NoiseSchedule& s) {
    if (cfg.oracle == "gaussian") {
        ImageTensor mu(ms.images[0].h, ms.images[0].w, ms.images[0].c, cfg.oracle_mu);
        return std::make_unique<GaussianDataOracle>(mu, cfg.oracle_var, s);
    }
    if (cfg.oracle == "empirical")
        return std::make_unique<EmpiricalDataOracle>(ms.images, s);
    if (cfg.oracle.rfind("external:", 0) == 0)
        return std::make_unique<ExternalDenoiser>(cfg.oracle.substr(9),
                                                  cfg.external_timeout_ms);
    throw digfuse::ConfigError("oracle must be gaussian, empirical, or external:DIR");
}

}  // namespace

PYBIND11_MODULE(digfuse, m) {
    m.doc() = "Dynamic information-gain guided diffusion fusion";
    m.attr("__version__") = kToolVersion;

    m.def(
        "schedule",
        [](int T, double beta_start, double beta_end) {
            NoiseSchedule s = make_linear_schedule(T, beta_start, beta_end);
            py::dict d;
            d["beta"] = py::array_t<double>(s.beta.size(), s.beta.data());
            d["alpha"] = py::array_t<double>(s.alpha.size(), s.alpha.data());
            d["alpha_bar"] = py::array_t<double>(s.alpha_bar.size(), s.alpha_bar.data());
            d["sigma"] = py::array_t<double>(s.sigma.size(), s.sigma.data());
            return d;
        },
        py::arg("T") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
        "Linear variance schedule tables as 1-D arrays indexed by t-1.");

    m.def(
        "fuse",
        [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
               images,
           std::vector<std::string> names, const std::string& config_text) {
            RunConfig cfg = parse_config_text(config_text);
            ModalityStack ms = stack_from_lists(images, std::move(names));
            NoiseSchedule s = cfg.schedule();
            std::unique_ptr<Denoiser> d = oracle_from_config(cfg, ms, s);
            FuseResult r = fuse(ms, *d, s, cfg.fusion_config());
            std::ostringstream trace;
            r.trace.to_csv(trace);
            py::dict out;
            out["image"] = array_from_tensor(r.image);
            out["trace_csv"] = trace.str();
            out["records"] = r.trace.records;
            return out;
        },
        py::arg("images"), py::arg("names") = std::vector<std::string>{},
        py::arg("config_text") = std::string{},
        "Fuse model-space modality arrays; options use the CLI config keys.");

    m.def(
        "metrics",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& fused,
           const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
               sources,
           std::vector<std::string> names) {
            ModalityStack ms = stack_from_lists(sources, std::move(names));
            MetricReport r = fusion_report(tensor_from_array(fused), ms);
            py::dict values;
            for (const auto& name : r.names) {
                double v = r.values.at(name);
                if (std::isnan(v))
                    values[name.c_str()] = py::none();
                else
                    values[name.c_str()] = v;
            }
            return values;
        },
        py::arg("fused"), py::arg("sources"), py::arg("names") = std::vector<std::string>{},
        "Fusion quality report over display-range arrays; n/a metrics map to None.");
}
