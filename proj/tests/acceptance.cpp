// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "cred/config.hpp"
#include "cred/cram.hpp"
#include "cred/detr.hpp"
#include "cred/flops.hpp"
#include "cred/hungarian.hpp"
#include "cred/mac_counter.hpp"
#include "cred/ops.hpp"
#include "cred/osma.hpp"
#include "cred/suites.hpp"
#include "cred/synth.hpp"
#include "cred/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

using namespace cred;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Criterion {
    int id;
    std::vector<std::string> notes;
    bool ok = true;

    void expect(bool cond, const std::string& what) {
        notes.push_back((cond ? "ok   " : "FAIL ") + what);
        ok = ok && cond;
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double within(double value, double target) { return std::fabs(value - target) / target; }

void gradients(Criterion& c) {
    const auto t0 = Clock::now();
    const auto results = suites::all_gradients(7);
    const double elapsed = seconds_since(t0);
    double worst = 0;
    std::string worst_name;
    for (const auto& r : results) {
        c.expect(r.report.passed, fmt("%-28s max rel %.3e (%zu coords)", r.name.c_str(), r.report.max_rel_error,
                                      r.report.coords_checked));
        if (r.report.max_rel_error >= worst) {
            worst = r.report.max_rel_error;
            worst_name = r.name;
        }
    }
    c.expect(worst < 1e-4, fmt("worst %.3e in %s < 1e-4", worst, worst_name.c_str()));
    c.expect(elapsed < 60.0, fmt("runtime %.1f s < 60 s", elapsed));
}

void osma_structure(Criterion& c) {
    c.expect(osma::token_count(3, 1) == 21, fmt("T(n=3, g=1) = %zu", osma::token_count(3, 1)));

    const auto p = synth::seeded_pyramid(1, 8, 25, 40, 3);
    struct Case {
        std::size_t g, pt, h, w;
    };
    for (const auto& k : {Case{1, 1, 25, 40}, Case{1, 4, 50, 80}, Case{2, 1, 13, 20}}) {
        osma::Config cfg;
        cfg.grid = k.g;
        cfg.out_tokens = k.pt;
        CounterRng rng(2, k.g * 10 + k.pt);
        const auto params = osma::Params::init(cfg, 3, 8, rng);
        NoGradGuard guard;
        const auto out = osma::forward(p, params, cfg);
        c.expect(out.shape() == Shape{8, k.h, k.w} && osma::output_extents(25, 40, cfg) == std::pair{k.h, k.w},
                 fmt("{g0=%zu, P=%zu} on 25x40 -> %s, expected [8, %zu, %zu]", k.g, k.pt,
                     shape_str(out.shape()).c_str(), k.h, k.w));
    }

    auto identity = [](std::size_t g, std::size_t pt) {
        osma::Config cfg;
        cfg.grid = g;
        cfg.out_tokens = pt;
        cfg.norm_enabled = false;
        cfg.act = Activation::identity;
        return cfg;
    };
    {
        const auto single = synth::seeded_pyramid(3, 4, 3, 5, 1);
        const auto cfg = identity(1, 1);
        const auto params = osma::Params::identity(cfg, 1, 4);
        const auto stack = osma::local_aggregate(osma::align_scales(single, cfg), cfg);
        const bool exact = bitwise_equal(osma::one_step_attention(stack, params, cfg).data, stack.data) &&
                           bitwise_equal(osma::forward(single, params, cfg), single.levels[0]);
        c.expect(exact, "identity configuration with T = 1 reproduces its input bitwise");
    }
    for (std::size_t g : {2, 3}) {
        const auto single = synth::seeded_pyramid(4 + g, 4, 6, 6, 1);
        const auto cfg = identity(g, g * g);
        const auto params = osma::Params::identity(cfg, 1, 4);
        c.expect(bitwise_equal(osma::forward(single, params, cfg), single.levels[0]),
                 fmt("identity configuration with g = P^(1/2) = %zu reproduces its input bitwise", g));
    }
}

void cram_contract(Criterion& c) {
    const std::size_t ch = 8;
    const auto p = synth::seeded_pyramid(5, ch, 4, 6, 3);
    const auto& f4 = p.levels[1];
    cram::Config cfg;
    cfg.channels = ch;
    cfg.num_layers = 2;
    CounterRng rng(6, 6);
    const auto params = cram::Params::init(cfg, rng);
    for (std::size_t r : {2, 4}) {
        const std::size_t h = f4.extent(1) / r, w = f4.extent(2) / r;
        const std::vector<Tensor> outs = {synth::seeded_pyramid(7, ch, h, w, 1).levels[0],
                                          synth::seeded_pyramid(8, ch, h, w, 1).levels[0]};
        const auto y = cram::forward(p, outs, params, cfg);
        c.expect(y.shape() == f4.shape(), fmt("r = %zu: encoder %zux%zu -> %s, source level %s", r, h, w,
                                              shape_str(y.shape()).c_str(), shape_str(f4.shape()).c_str()));
    }
    NoGradGuard guard;
    for (auto v : {detr::Variant::default_cred, detr::Variant::dcx025_cred}) {
        const auto m = detr::ModelConfig::preset(v, 32, 2);
        detr::ForwardTrace t;
        detr::cred_detr_forward(synth::make_sample(1, 0, 64, 64, 3).image, detr::Params::init(m, 1), m, &t);
        const double r = static_cast<double>(t.decoder_h) / static_cast<double>(t.encoder_h);
        c.expect(t.decoder_h == 4 && t.decoder_w == 4,
                 fmt("%s pipeline at 64x64: r = %.0f, decoder memory %zux%zu = F4", detr::to_string(v).c_str(), r,
                     t.decoder_h, t.decoder_w));
    }

    cram::Config zero_cfg = cfg;
    zero_cfg.num_layers = 3;
    const auto zeros = cram::Params::zeros(zero_cfg);
    const std::vector<Tensor> outs(3, synth::seeded_pyramid(9, ch, 4, 6, 1).levels[0]);
    c.expect(bitwise_equal(cram::forward(p, outs, zeros, zero_cfg), f4), "zero-weight CRAM returns Y bitwise");
}

detr::ModelConfig full_scale_model(detr::Variant v) {
    auto m = detr::ModelConfig::preset(v, 256, 6);
    m.detr.heads = 8;
    m.detr.d_ff = 2048;
    m.detr.num_queries = 300;
    m.detr.num_classes = 91;
    return m;
}

void flop_anchors(Criterion& c) {
    const auto base = flops::budget_report(full_scale_model(detr::Variant::baseline), 800, 1280);
    const auto dc = flops::budget_report(full_scale_model(detr::Variant::dc), 800, 1280);
    const auto cred = flops::budget_report(full_scale_model(detr::Variant::default_cred), 800, 1280);
    const double e = static_cast<double>(base.encoder), e_dc = static_cast<double>(dc.encoder);
    const double cr = static_cast<double>(cred.cram);
    c.expect(within(e, 12e9) <= 0.15, fmt("encoder %.4g MACs within 15%% of 12G (off %.1f%%)", e, 100 * within(e, 12e9)));
    c.expect(within(e_dc, 80e9) <= 0.05,
             fmt("DC encoder %.4g MACs within 5%% of 80G (off %.1f%%)", e_dc, 100 * within(e_dc, 80e9)));
    c.expect(within(cr, 3e9) <= 0.15, fmt("CRAM %.4g MACs within 15%% of 3G (off %.1f%%)", cr, 100 * within(cr, 3e9)));
    const double ratio = e_dc / e, target = 80.0 / 12.0;
    c.expect(within(ratio, target) <= 0.10, fmt("DC/base encoder ratio %.4f within 10%% of %.4f (allowed [%.4f, %.4f], "
                                                "off %.2f%%)",
                                                ratio, target, 0.9 * target, 1.1 * target, 100 * within(ratio, target)));
}

void cross_validation(Criterion& c) {
    const auto cfg = detr::ModelConfig::preset(detr::Variant::default_cred, 32, 2);
    const auto params = detr::Params::init(cfg, 1);
    const auto budget = flops::budget_report(cfg, 64, 64);
    NoGradGuard guard;
    const auto pyramid = detr::toy_backbone(synth::make_sample(1, 0, 64, 64, 3).image, params.backbone);
    const auto enc_in = osma::forward(pyramid, params.osma, cfg.osma);
    const std::size_t h = enc_in.extent(1), w = enc_in.extent(2);

    auto agree = [&](const char* name, std::uint64_t measured, std::uint64_t analytic) {
        const double off = within(static_cast<double>(analytic), static_cast<double>(measured));
        c.expect(off <= 0.02, fmt("%-8s analytic %llu vs instrumented %llu (off %.3f%%)", name,
                                  static_cast<unsigned long long>(analytic), static_cast<unsigned long long>(measured),
                                  100 * off));
    };

    std::vector<Tensor> encoded;
    {
        MacCounter m;
        encoded = detr::encoder_forward(ops::to_tokens(enc_in), ops::to_tokens(detr::sine_pos_embed(h, w, 32)),
                                        params.encoder, cfg.detr);
        agree("encoder", m.count(), budget.encoder);
    }
    Tensor refined;
    {
        std::vector<Tensor> maps;
        for (const auto& x : encoded) maps.push_back(ops::from_tokens(x, h, w));
        MacCounter m;
        refined = cram::forward(pyramid, maps, params.cram, cfg.cram);
        agree("cram", m.count(), budget.cram);
    }
    {
        const auto memory = ops::to_tokens(refined);
        const auto pos = ops::to_tokens(detr::sine_pos_embed(refined.extent(1), refined.extent(2), 32));
        MacCounter m;
        detr::decoder_forward(memory, pos, params.query_embed, params.decoder, params.decoder_norm, cfg.detr);
        agree("decoder", m.count(), budget.decoder);
    }
}

void matching(Criterion& c) {
    CounterRng rng(7, stream_id("matching"));
    std::size_t mismatches = 0, trials = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t rows = 1 + rng.below(6), cols = rng.below(rows + 1);
        std::vector<double> cost(rows * cols);
        const bool integral = i % 2 == 0;
        for (auto& x : cost) x = integral ? static_cast<double>(rng.below(5)) : rng.uniform(-2.0, 2.0);
        const double got = assignment_cost(cost, cols, hungarian_match(cost, rows, cols));

        std::vector<std::size_t> perm(rows);
        std::iota(perm.begin(), perm.end(), 0);
        double best = cols == 0 ? 0.0 : std::numeric_limits<double>::infinity();
        if (cols > 0) {
            do {
                best = std::min(best, assignment_cost(cost, cols, {perm.begin(), perm.begin() + cols}));
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
        mismatches += got != best;
        ++trials;
    }
    c.expect(mismatches == 0, fmt("%zu of %zu random instances (up to 6x6) differ from exhaustive search", mismatches,
                                  trials));
}

struct TrainRun {
    train::ToyResult result;
    double recall = 0;
    double seconds = 0;
};

TrainRun train_variant(detr::Variant v, std::size_t baseline_downsample = 1) {
    PipelineConfig pc;
    pc.model = detr::ModelConfig::preset(v, 32, 2);
    pc.model.detr.baseline_downsample = baseline_downsample;
    const auto data = synth::shapes_dataset(pc.seed, pc.data.num_images, pc.data.image_h, pc.data.image_w,
                                            pc.model.detr.num_classes);
    auto params = detr::Params::init(pc.model, pc.seed);
    train::ToyOptions opt{pc.train.steps, pc.train.lr, pc.train.momentum, pc.train.clip_norm};
    const auto t0 = Clock::now();
    TrainRun run;
    run.result = train::train_toy(data, params, pc.model, opt, pc.loss);
    run.seconds = seconds_since(t0);
    run.recall = train::recall_at_iou(data, params, pc.model, 0.5, pc.loss);
    return run;
}

TrainRun default_run;

void toy_training(Criterion& c) {
    default_run = train_variant(detr::Variant::default_cred);
    const auto& r = default_run.result;
    const double l10 = r.loss_at(10), last = r.final_loss();
    c.expect(last <= 0.5 * l10, fmt("final loss %.4f <= 0.5 x step-10 loss %.4f (ratio %.3f)", last, l10, last / l10));
    c.expect(default_run.recall >= 0.8, fmt("recall@IoU0.5 %.3f >= 0.8 on the 16 training images", default_run.recall));
    const auto again = train_variant(detr::Variant::default_cred);
    bool same = again.result.history.size() == r.history.size() && again.recall == default_run.recall;
    for (std::size_t i = 0; same && i < r.history.size(); ++i) {
        same = again.result.history[i].loss == r.history[i].loss &&
               again.result.history[i].grad_norm == r.history[i].grad_norm;
    }
    c.expect(same, "second run reproduces every step loss and gradient norm bitwise");
    c.expect(default_run.seconds < 600.0, fmt("runtime %.1f s < 600 s", default_run.seconds));
}

void variant_parity(Criterion& c) {
    const double def = default_run.result.final_loss();
    const auto quarter = train_variant(detr::Variant::dcx025_cred);
    const auto base = train_variant(detr::Variant::baseline, 2);
    const double q = quarter.result.final_loss(), b = base.result.final_loss();
    c.expect(within(q, def) <= 0.10,
             fmt("DCx0.25-CRED final loss %.4f within 10%% of Default-CRED %.4f (off %.1f%%)", q, def, 100 * within(q, def)));
    c.expect(b > def, fmt("quarter-resolution Baseline final loss %.4f > Default-CRED %.4f", b, def));
    c.expect(b > q, fmt("quarter-resolution Baseline final loss %.4f > DCx0.25-CRED %.4f", b, q));
}

}  // namespace

int main() {
    const std::vector<std::pair<int, std::function<void(Criterion&)>>> criteria = {
        {1, gradients},        {2, osma_structure}, {3, cram_contract}, {4, flop_anchors},
        {5, cross_validation}, {6, matching},       {7, toy_training},  {8, variant_parity},
    };
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        Criterion c{id, {}};
        const auto t0 = Clock::now();
        try {
            run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        for (const auto& n : c.notes) std::printf("    %s\n", n.c_str());
        std::printf("criterion %d: %s (%.1f s)\n", id, c.ok ? "PASS" : "FAIL", seconds_since(t0));
        std::fflush(stdout);
        failed += !c.ok;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
