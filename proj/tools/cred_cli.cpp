#include "cred/config.hpp"
#include "cred/crt1.hpp"
#include "cred/flops.hpp"
#include "cred/suites.hpp"
#include "cred/synth.hpp"
#include "cred/train.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace cred;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

constexpr double kGoldenTolerance = 1e-5;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

PipelineConfig resolve_config(const Options& o) {
    PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

std::pair<std::size_t, std::size_t> parse_resolution(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used = 0;
        const auto h = std::stoul(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(text);
        const auto rest = text.substr(x + 1);
        const auto w = std::stoul(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(text);
        return {h, w};
    } catch (const std::exception&) {
        throw ConfigError("--resolution: expected HxW, got '" + text + "'");
    }
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, sep);) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// --- gradcheck ---------------------------------------------------------------

int run_gradcheck(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto results = suites::all_gradients(cfg.seed);
    bool ok = true;
    double worst = 0.0;
    for (const auto& r : results) {
        std::printf("%-28s max_rel_err %.3e  coords %6zu  %s\n", r.name.c_str(), r.report.max_rel_error,
                    r.report.coords_checked, r.report.passed ? "ok" : "FAIL");
        ok = ok && r.report.passed;
        worst = std::max(worst, r.report.max_rel_error);
    }
    std::printf("%zu suites, worst relative error %.3e\n", results.size(), worst);
    return ok ? kOk : kFailure;
}

// --- forward / goldens -------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> golden_tensors(const PipelineConfig& cfg) {
    std::vector<std::pair<std::string, Tensor>> out;
    NoGradGuard no_grad;

    const std::size_t c = cfg.model.detr.d_model;
    const auto pyramid = synth::seeded_pyramid(cfg.seed, c, 5, 8, 3);
    const std::pair<std::size_t, std::size_t> geometries[] = {{1, 1}, {2, 1}, {1, 4}};
    for (const auto& [g, p] : geometries) {
        osma::Config oc = cfg.model.osma;
        oc.grid = g;
        oc.out_tokens = p;
        CounterRng rng(cfg.seed, stream_id("osma-golden"));
        const auto params = osma::Params::init(oc, pyramid.size(), c, rng);
        out.emplace_back("osma_g" + std::to_string(g) + "_p" + std::to_string(p), osma::forward(pyramid, params, oc));
    }

    const auto sample =
        synth::make_sample(cfg.seed, 0, cfg.data.image_h, cfg.data.image_w, cfg.model.detr.num_classes);
    const auto params = detr::Params::init(cfg.model, cfg.seed);
    const auto pred = detr::cred_detr_forward(sample.image, params, cfg.model);
    out.emplace_back("class_logits", pred.class_logits);
    out.emplace_back("boxes", pred.boxes);
    return out;
}

int run_forward(const Options& o, bool write, bool check, const std::string& dir_flag) {
    const auto cfg = resolve_config(o);
    const std::filesystem::path dir = dir_flag.empty() ? cfg.paths.goldens : std::filesystem::path(dir_flag);
    const auto tensors = golden_tensors(cfg);

    if (write) {
        std::filesystem::create_directories(dir);
        for (const auto& [name, t] : tensors) crt1::save(dir / (name + ".crt1"), t);
        std::printf("wrote %zu goldens to %s\n", tensors.size(), dir.string().c_str());
    }
    if (check) {
        for (const auto& [name, t] : tensors) {
            const auto path = dir / (name + ".crt1");
            if (!std::filesystem::exists(path)) {
                std::printf("golden mismatch: %s missing (%s)\n", name.c_str(), path.string().c_str());
                return kFailure;
            }
            const auto golden = crt1::load(path);
            if (golden.shape() != t.shape()) {
                std::printf("golden mismatch: %s shape %s, expected %s\n", name.c_str(), shape_str(t.shape()).c_str(),
                            shape_str(golden.shape()).c_str());
                return kFailure;
            }
            double diff = 0.0;
            for (std::size_t i = 0; i < t.size(); ++i) diff = std::max(diff, std::abs(t.data()[i] - golden.data()[i]));
            if (!(diff <= kGoldenTolerance)) {
                std::printf("golden mismatch: %s max abs diff %.3e (tolerance %.0e)\n", name.c_str(), diff,
                            kGoldenTolerance);
                return kFailure;
            }
            std::printf("%-14s %-12s max abs diff %.3e\n", name.c_str(), shape_str(t.shape()).c_str(), diff);
        }
        std::printf("all %zu goldens match\n", tensors.size());
    }
    if (!write && !check) {
        for (const auto& [name, t] : tensors) std::printf("%-14s %s\n", name.c_str(), shape_str(t.shape()).c_str());
    }
    return kOk;
}

// --- budget ------------------------------------------------------------------

detr::ModelConfig budget_model(const Options& o, const PipelineConfig& cfg, detr::Variant v) {
    if (!o.config_path.empty()) {
        auto m = detr::ModelConfig::preset(v, cfg.model.detr.d_model, cfg.model.detr.enc_layers);
        auto d = cfg.model.detr;
        d.variant = v;
        m.detr = d;
        return m;
    }
    auto m = detr::ModelConfig::preset(v, 256, 6);
    m.detr.heads = 8;
    m.detr.d_ff = 2048;
    m.detr.num_queries = 300;
    m.detr.num_classes = 91;
    return m;
}

int run_budget(const Options& o, const std::string& variants, const std::string& resolution, bool csv) {
    const auto cfg = resolve_config(o);
    const auto [h, w] = parse_resolution(resolution);
    std::vector<flops::FlopBudget> budgets;
    for (const auto& name : split(variants, ',')) {
        detr::Variant v;
        try {
            v = detr::parse_variant(name);
        } catch (const ValueError& e) {
            throw ConfigError(std::string("--variant: ") + e.what());
        }
        budgets.push_back(flops::budget_report(budget_model(o, cfg, v), h, w, cfg.budget));
    }
    if (budgets.empty()) throw ConfigError("--variant: no variant given");
    if (csv) {
        std::cout << flops::format_csv(budgets);
    } else {
        for (std::size_t i = 0; i < budgets.size(); ++i) std::cout << (i ? "\n" : "") << flops::format_table(budgets[i]);
    }
    return kOk;
}

// --- toy training ------------------------------------------------------------

int run_train(const Options& o, std::optional<std::size_t> steps, const std::string& checkpoint,
              const std::string& metrics) {
    auto cfg = resolve_config(o);
    if (steps) cfg.train.steps = *steps;
    if (!checkpoint.empty()) cfg.paths.checkpoint = checkpoint;
    if (!metrics.empty()) cfg.paths.metrics = metrics;

    const auto data = synth::shapes_dataset(cfg.seed, cfg.data.num_images, cfg.data.image_h, cfg.data.image_w,
                                            cfg.model.detr.num_classes);
    auto params = detr::Params::init(cfg.model, cfg.seed);
    if (cfg.paths.metrics.has_parent_path()) std::filesystem::create_directories(cfg.paths.metrics.parent_path());
    std::ofstream log(cfg.paths.metrics);
    if (!log) throw ConfigError("paths.metrics: cannot write " + cfg.paths.metrics.string());

    train::ToyOptions opts{cfg.train.steps, cfg.train.lr, cfg.train.momentum, cfg.train.clip_norm};
    const auto result = train::train_toy(data, params, cfg.model, opts, cfg.loss, [&](const train::StepMetrics& m) {
        log << train::metrics_record(m) << '\n';
        if (m.step == 1 || m.step % 20 == 0 || m.step == opts.steps) {
            std::printf("step %4zu  loss %.6f  ce %.4f  l1 %.4f  giou %.4f\n", m.step, m.loss, m.ce, m.l1, m.giou);
        }
    });
    train::save_checkpoint(cfg.paths.checkpoint, params, cfg.model);
    const double recall = train::recall_at_iou(data, params, cfg.model, 0.5, cfg.loss);
    std::printf("final loss %.17g\n", result.final_loss());
    if (result.history.size() >= 10) std::printf("loss at step 10 %.17g\n", result.loss_at(10));
    std::printf("recall@0.5 %.4f\n", recall);
    std::printf("checkpoint %s, metrics %s\n", cfg.paths.checkpoint.string().c_str(),
                cfg.paths.metrics.string().c_str());
    return kOk;
}

int run_eval(const Options& o, const std::string& checkpoint, std::optional<double> min_recall) {
    auto cfg = resolve_config(o);
    if (!checkpoint.empty()) cfg.paths.checkpoint = checkpoint;
    const auto data = synth::shapes_dataset(cfg.seed, cfg.data.num_images, cfg.data.image_h, cfg.data.image_w,
                                            cfg.model.detr.num_classes);
    auto params = detr::Params::init(cfg.model, cfg.seed);
    train::load_checkpoint(cfg.paths.checkpoint, params, cfg.model);
    const double recall = train::recall_at_iou(data, params, cfg.model, 0.5, cfg.loss);
    std::printf("recall@0.5 %.4f on %zu images\n", recall, data.size());
    if (min_recall && recall < *min_recall) {
        std::printf("recall below %.3f\n", *min_recall);
        return kFailure;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cred: desk-scale cross-resolution detection transformer"};
    app.require_subcommand(1);
    Options opts;
    app.add_option("--config", opts.config_path, "pipeline config (JSON)");
    app.add_option("--seed", opts.seed, "override the config seed");

    auto* gradcheck = app.add_subcommand("gradcheck", "run all gradient suites");

    bool write_goldens = false, check_goldens = false;
    std::string goldens_dir;
    auto* forward = app.add_subcommand("forward", "run the forward pass on a seeded input");
    forward->add_flag("--write-goldens", write_goldens, "write CRT1 goldens");
    forward->add_flag("--check-goldens", check_goldens, "compare against CRT1 goldens");
    forward->add_option("--goldens", goldens_dir, "golden directory (default: paths.goldens)");

    std::string variants = "default", resolution = "800x1280";
    bool csv = false;
    auto* budget = app.add_subcommand("budget", "FLOP budget table");
    budget->add_option("--variant", variants, "comma-separated: baseline,dc,default,dcx025,oo");
    budget->add_option("--resolution", resolution, "HxW");
    budget->add_flag("--csv", csv, "emit CSV");

    std::optional<std::size_t> steps;
    std::string checkpoint, metrics;
    auto* train = app.add_subcommand("train-toy", "toy training smoke test");
    train->add_option("--steps", steps, "training steps");
    train->add_option("--checkpoint", checkpoint, "checkpoint directory (default: paths.checkpoint)");
    train->add_option("--metrics", metrics, "metrics JSONL (default: paths.metrics)");

    std::optional<double> min_recall;
    std::string eval_checkpoint;
    auto* eval = app.add_subcommand("eval-toy", "recall@IoU0.5 of a checkpoint");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory (default: paths.checkpoint)");
    eval->add_option("--min-recall", min_recall, "fail below this recall");

    for (auto* sub : {gradcheck, forward, budget, train, eval}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gradcheck) return run_gradcheck(opts);
        if (*forward) return run_forward(opts, write_goldens, check_goldens, goldens_dir);
        if (*budget) return run_budget(opts, variants, resolution, csv);
        if (*train) return run_train(opts, steps, checkpoint, metrics);
        if (*eval) return run_eval(opts, eval_checkpoint, min_recall);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kUsage;
    } catch (const ValueError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kUsage;
}
