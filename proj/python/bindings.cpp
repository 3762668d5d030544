#include "cred/boxes.hpp"
#include "cred/config.hpp"
#include "cred/detr.hpp"
#include "cred/flops.hpp"
#include "cred/hungarian.hpp"
#include "cred/osma.hpp"
#include "cred/suites.hpp"
#include "cred/synth.hpp"
#include "cred/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cred;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

PipelineConfig config_from(const py::object& cfg) {
    if (cfg.is_none()) return PipelineConfig{};
    return parse_config(nlohmann::json::parse(py::str(py::module_::import("json").attr("dumps")(cfg)).cast<std::string>()));
}

py::dict budget_dict(const flops::FlopBudget& b) {
    py::dict d;
    d["variant"] = detr::to_string(b.variant);
    d["height"] = b.height;
    d["width"] = b.width;
    d["backbone"] = b.backbone;
    d["encoder"] = b.encoder;
    d["decoder"] = b.decoder;
    d["cram"] = b.cram;
    d["osma"] = b.osma;
    d["total"] = b.total();
    d["encoder_tokens"] = b.encoder_tokens;
    d["decoder_tokens"] = b.decoder_tokens;
    d["r"] = b.r;
    return d;
}

detr::ModelConfig full_scale_model(detr::Variant v) {
    auto m = detr::ModelConfig::preset(v, 256, 6);
    m.detr.heads = 8;
    m.detr.d_ff = 2048;
    m.detr.num_queries = 300;
    m.detr.num_classes = 91;
    return m;
}

}  // namespace

PYBIND11_MODULE(_cred, m) {
    m.doc() = "Desk-scale cross-resolution DETR: OSMA, CRAM, FLOP budgets and a toy training loop";

    py::register_exception<Error>(m, "CredError", PyExc_RuntimeError);
    py::register_exception<ValueError>(m, "CredValueError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("token_count", &osma::token_count, py::arg("n_levels"), py::arg("grid"));

    m.def(
        "osma_output_extents",
        [](std::size_t h0, std::size_t w0, std::size_t g0, std::size_t p) {
            osma::Config cfg;
            cfg.grid = g0;
            cfg.out_tokens = p;
            cfg.validate();
            return osma::output_extents(h0, w0, cfg);
        },
        py::arg("h0"), py::arg("w0"), py::arg("g0") = 1, py::arg("P") = 1);

    m.def(
        "osma_forward",
        [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& levels, std::size_t g0,
           std::size_t p, std::uint64_t seed) {
            FeaturePyramid pyr;
            for (std::size_t i = 0; i < levels.size(); ++i) {
                pyr.levels.push_back(from_numpy(levels[i]));
                pyr.strides.push_back(std::size_t{32} >> i);
            }
            pyr.validate();
            osma::Config cfg;
            cfg.grid = g0;
            cfg.out_tokens = p;
            CounterRng rng(seed, stream_id("osma"));
            const auto params = osma::Params::init(cfg, pyr.size(), pyr.channels(), rng);
            NoGradGuard guard;
            return to_numpy(osma::forward(pyr, params, cfg));
        },
        py::arg("levels"), py::arg("g0") = 1, py::arg("P") = 1, py::arg("seed") = 7,
        "OSMA with seeded random weights over levels ordered coarsest first.");

    m.def(
        "hungarian_match",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
            if (cost.ndim() != 2) throw ShapeError("hungarian_match: cost must be 2-D [N_q, n_gt]");
            std::vector<double> c(cost.data(), cost.data() + cost.size());
            return hungarian_match(c, cost.shape(0), cost.shape(1));
        },
        py::arg("cost"), "Query index for each ground-truth column.");

    m.def(
        "giou",
        [](std::array<double, 4> a, std::array<double, 4> b) {
            return giou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
        },
        py::arg("a"), py::arg("b"), "GIoU of two (cx, cy, w, h) boxes.");

    m.def(
        "budget",
        [](const std::string& variant, std::size_t height, std::size_t width, const py::object& config) {
            const auto v = detr::parse_variant(variant);
            detr::ModelConfig model = full_scale_model(v);
            flops::BudgetOptions options;
            if (!config.is_none()) {
                const auto cfg = config_from(config);
                model = detr::ModelConfig::preset(v, cfg.model.detr.d_model, cfg.model.detr.enc_layers);
                auto d = cfg.model.detr;
                d.variant = v;
                model.detr = d;
                options = cfg.budget;
            }
            return budget_dict(flops::budget_report(model, height, width, options));
        },
        py::arg("variant") = "default", py::arg("height") = 800, py::arg("width") = 1280, py::arg("config") = py::none(),
        "MAC budget per component; full-scale dimensions (C=256, 6+6 layers, N_q=300) unless a config dict is given.");

    m.def(
        "gradcheck",
        [](std::uint64_t seed) {
            py::list out;
            for (const auto& r : suites::all_gradients(seed)) {
                py::dict d;
                d["name"] = r.name;
                d["max_rel_error"] = r.report.max_rel_error;
                d["coords"] = r.report.coords_checked;
                d["passed"] = r.report.passed;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 7);

    m.def(
        "make_sample",
        [](std::uint64_t seed, std::size_t index, std::size_t height, std::size_t width, std::size_t num_classes) {
            const auto s = synth::make_sample(seed, index, height, width, num_classes);
            py::dict d;
            d["image"] = to_numpy(s.image);
            std::vector<std::array<double, 4>> boxes;
            for (const auto& b : s.gt.boxes) boxes.push_back({b.cx, b.cy, b.w, b.h});
            d["boxes"] = boxes;
            d["labels"] = s.gt.labels;
            return d;
        },
        py::arg("seed"), py::arg("index"), py::arg("height") = 64, py::arg("width") = 64, py::arg("num_classes") = 3);

    m.def(
        "forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, const py::object& config) {
            const auto cfg = config_from(config);
            const auto params = detr::Params::init(cfg.model, cfg.seed);
            NoGradGuard guard;
            detr::ForwardTrace trace;
            const auto pred = detr::cred_detr_forward(from_numpy(image), params, cfg.model, &trace);
            py::dict d;
            d["class_logits"] = to_numpy(pred.class_logits);
            d["boxes"] = to_numpy(pred.boxes);
            d["encoder_tokens"] = trace.encoder_tokens();
            d["memory_tokens"] = trace.memory_tokens();
            return d;
        },
        py::arg("image"), py::arg("config") = py::none(), "Forward pass with seeded initial weights.");

    m.def(
        "train_toy",
        [](std::size_t steps, const py::object& config) {
            const auto cfg = config_from(config);
            const auto data = synth::shapes_dataset(cfg.seed, cfg.data.num_images, cfg.data.image_h, cfg.data.image_w,
                                                    cfg.model.detr.num_classes);
            auto params = detr::Params::init(cfg.model, cfg.seed);
            train::ToyOptions opt{steps, cfg.train.lr, cfg.train.momentum, cfg.train.clip_norm};
            train::ToyResult result;
            {
                py::gil_scoped_release release;
                result = train::train_toy(data, params, cfg.model, opt, cfg.loss);
            }
            std::vector<double> losses;
            for (const auto& s : result.history) losses.push_back(s.loss);
            py::dict d;
            d["losses"] = losses;
            d["recall"] = train::recall_at_iou(data, params, cfg.model, 0.5, cfg.loss);
            return d;
        },
        py::arg("steps") = 200, py::arg("config") = py::none(),
        "Full-batch toy training; returns per-step losses and training-set recall@IoU0.5.");
}
