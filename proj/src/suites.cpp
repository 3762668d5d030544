#include "cred/suites.hpp"

#include "cred/boxes.hpp"
#include "cred/cram.hpp"
#include "cred/detr.hpp"
#include "cred/ops.hpp"
#include "cred/osma.hpp"
#include "cred/rng.hpp"
#include "cred/synth.hpp"

#include <functional>

namespace cred::suites {

namespace {

Tensor random_tensor(CounterRng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), true);
}

// Pairs that overlap without either containing the other along any axis,
// so every coordinate moves the GIoU.
std::vector<Tensor> overlapping_boxes(CounterRng& rng, std::size_t n) {
    std::vector<double> a(n * 4), b(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            a[i * 4 + k] = rng.uniform(0.4, 0.6);
            a[i * 4 + k + 2] = rng.uniform(0.2, 0.3);
            b[i * 4 + k] = a[i * 4 + k] + (rng.uniform() < 0.5 ? -0.1 : 0.1);
            b[i * 4 + k + 2] = rng.uniform(0.2, 0.3);
        }
    }
    return {Tensor::from({n, 4}, std::move(a), true), Tensor::from({n, 4}, std::move(b), true)};
}

// sum(out * w) for a fixed random w of out's shape.
Tensor project(const Tensor& out, std::uint64_t seed) {
    CounterRng rng(seed, stream_id("projection"));
    std::vector<double> w(out.size());
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    return ops::sum(ops::mul(out, Tensor::from(out.shape(), std::move(w))));
}

using Builder = std::function<Tensor(const std::vector<Tensor>&)>;

Result check(const std::string& name, std::vector<Tensor> leaves, const Builder& build, std::uint64_t seed,
             const GradCheckOptions& opts) {
    auto report = grad_check([&] { return project(build(leaves), seed); }, leaves, opts);
    return {name, report};
}

}  // namespace

std::vector<Result> op_gradients(std::uint64_t seed, const GradCheckOptions& opts) {
    using namespace ops;
    std::vector<Result> out;
    CounterRng rng(seed, stream_id("op-suite"));
    const Shape shapes2[3] = {{3, 4}, {5, 2}, {4, 6}};
    const Shape chw[3] = {{3, 4, 4}, {3, 2, 6}, {4, 6, 4}};

    for (int i = 0; i < 3; ++i) {
        const std::string tag = "[" + std::to_string(i) + "]";
        const Shape& s = shapes2[i];
        const Shape& m = chw[i];
        const std::uint64_t sd = seed + static_cast<std::uint64_t>(i);

        out.push_back(check("matmul" + tag, {random_tensor(rng, s), random_tensor(rng, {s[1], 3})},
                            [](const auto& l) { return matmul(l[0], l[1]); }, sd, opts));
        out.push_back(check(
            "axis_linear" + tag,
            {random_tensor(rng, m), random_tensor(rng, {m[1], 3}), random_tensor(rng, {3})},
            [](const auto& l) { return axis_linear(l[0], 1, l[1], l[2]); }, sd, opts));
        out.push_back(check(
            "layer_norm" + tag, {random_tensor(rng, m), random_tensor(rng, {m[0]}), random_tensor(rng, {m[0]})},
            [](const auto& l) { return layer_norm(l[0], 0, l[1], l[2], 1e-5); }, sd, opts));
        out.push_back(check("silu" + tag, {random_tensor(rng, s, -3, 3)}, [](const auto& l) { return silu(l[0]); }, sd,
                            opts));
        out.push_back(check("sigmoid" + tag, {random_tensor(rng, s, -3, 3)},
                            [](const auto& l) { return sigmoid(l[0]); }, sd, opts));
        out.push_back(check("relu" + tag, {random_tensor(rng, s)}, [](const auto& l) { return relu(l[0]); }, sd, opts));
        out.push_back(check("softmax" + tag, {random_tensor(rng, s, -2, 2)},
                            [](const auto& l) { return softmax(l[0], 1); }, sd, opts));
        out.push_back(check("log_softmax" + tag, {random_tensor(rng, s, -2, 2)},
                            [](const auto& l) { return log_softmax(l[0], 0); }, sd, opts));
        out.push_back(check("exp_log" + tag, {random_tensor(rng, s, 0.5, 2)},
                            [](const auto& l) { return log(add(exp(l[0]), l[0])); }, sd, opts));
        out.push_back(check("mul_div" + tag, {random_tensor(rng, s), random_tensor(rng, s, 0.5, 2)},
                            [](const auto& l) { return add(mul(l[0], l[1]), div(l[0], l[1])); }, sd, opts));
        out.push_back(check("min_max_abs" + tag, {random_tensor(rng, s), random_tensor(rng, s)},
                            [](const auto& l) { return add(minimum(l[0], l[1]), abs(maximum(l[0], l[1]))); }, sd,
                            opts));
        out.push_back(check("add_row" + tag, {random_tensor(rng, s), random_tensor(rng, {s[1]})},
                            [](const auto& l) { return add_row(l[0], l[1]); }, sd, opts));
        out.push_back(check(
            "bilinear_resize" + tag, {random_tensor(rng, m)},
            [m](const auto& l) { return bilinear_resize(l[0], m[1] * 2 + 1, m[2] + 3); }, sd, opts));
        out.push_back(check("concat" + tag, {random_tensor(rng, m), random_tensor(rng, {m[0], m[1], 3})},
                            [](const auto& l) { return concat({l[0], l[1]}, 2); }, sd, opts));
        out.push_back(check("space_to_depth" + tag, {random_tensor(rng, m)},
                            [](const auto& l) { return space_to_depth(l[0], 2); }, sd, opts));
        out.push_back(check("depth_to_space" + tag, {random_tensor(rng, {4 * m[0], m[1], m[2]})},
                            [](const auto& l) { return depth_to_space(l[0], 2); }, sd, opts));
        out.push_back(check("grid_partition" + tag, {random_tensor(rng, m)},
                            [](const auto& l) { return grid_partition(l[0], 2); }, sd, opts));
        out.push_back(check(
            "grid_merge" + tag, {random_tensor(rng, {m[1] * m[2] / 4, 4, m[0]})},
            [m](const auto& l) { return grid_merge(l[0], m[1], m[2], 2); }, sd, opts));
        out.push_back(check("permute_slice" + tag, {random_tensor(rng, m)},
                            [](const auto& l) {
                                const std::size_t axes[] = {2, 0, 1};
                                return slice(permute(l[0], axes), 0, 1, 3);
                            },
                            sd, opts));
        out.push_back(check("giou_rows" + tag, overlapping_boxes(rng, s[0]),
                            [](const auto& l) { return giou_rows(l[0], l[1]); }, sd, opts));
    }
    return out;
}

std::vector<Result> module_gradients(std::uint64_t seed, const GradCheckOptions& opts) {
    std::vector<Result> out;
    const std::size_t c = 8;

    {
        osma::Config cfg;
        const auto pyramid = synth::seeded_pyramid(seed, c, 2, 3, 3);
        CounterRng rng(seed, stream_id("osma-suite"));
        auto params = osma::Params::init(cfg, 3, c, rng);
        std::vector<Tensor> leaves = pyramid.levels;
        params.visit("osma", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        for (auto& l : leaves) {
            if (l.is_leaf()) l.set_requires_grad(true);
        }
        out.push_back(check(
            "osma_forward", leaves,
            [&](const auto&) { return osma::forward(pyramid, params, cfg); }, seed, opts));
    }
    {
        cram::Config cfg;
        cfg.channels = c;
        cfg.num_layers = 2;
        const auto pyramid = synth::seeded_pyramid(seed + 1, c, 2, 3, 2);
        CounterRng rng(seed, stream_id("cram-suite"));
        auto params = cram::Params::init(cfg, rng);
        const auto enc = synth::seeded_pyramid(seed + 2, c, 2, 3, 1);
        std::vector<Tensor> encoder_outputs{enc.levels[0], enc.levels[0]};
        CounterRng shift(seed, stream_id("cram-shift"));
        encoder_outputs[1] = random_tensor(shift, enc.levels[0].shape());
        std::vector<Tensor> leaves{pyramid.levels[1], encoder_outputs[0], encoder_outputs[1]};
        params.visit("cram", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        for (auto& l : leaves) l.set_requires_grad(true);
        out.push_back(check(
            "cram_layer", leaves,
            [&](const auto&) {
                return cram::layer(cram::init(pyramid, cfg), encoder_outputs[0], params.layers[0], cfg).y;
            },
            seed, opts));
        out.push_back(check(
            "cram_forward", leaves,
            [&](const auto&) { return cram::forward(pyramid, encoder_outputs, params, cfg); }, seed, opts));
    }

    detr::ModelConfig model = detr::ModelConfig::preset(detr::Variant::default_cred, c, 2);
    model.detr.heads = 2;
    model.detr.d_ff = 16;
    model.detr.num_queries = 3;
    model.detr.num_classes = 3;
    auto params = detr::Params::init(model, seed);
    {
        CounterRng rng(seed, stream_id("encoder-suite"));
        const Tensor tokens = random_tensor(rng, {6, c});
        const Tensor pos = random_tensor(rng, {6, c});
        std::vector<Tensor> leaves{tokens, pos};
        for (auto& l : params.encoder) l.visit("enc", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        out.push_back(check(
            "encoder_forward", leaves,
            [&](const auto&) { return ops::concat(detr::encoder_forward(tokens, pos, params.encoder, model.detr), 0); },
            seed, opts));
    }
    {
        CounterRng rng(seed, stream_id("decoder-suite"));
        const Tensor memory = random_tensor(rng, {5, c});
        const Tensor pos = random_tensor(rng, {5, c});
        std::vector<Tensor> leaves{memory, pos};
        for (auto& l : params.decoder) l.visit("dec", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        params.decoder_norm.visit("dec.norm", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        leaves.push_back(params.query_embed);
        out.push_back(check(
            "decoder_forward", leaves,
            [&](const auto&) {
                return detr::decoder_forward(memory, pos, params.query_embed, params.decoder, params.decoder_norm,
                                             model.detr);
            },
            seed, opts));
    }
    {
        CounterRng rng(seed, stream_id("heads-suite"));
        const Tensor decoded = random_tensor(rng, {3, c});
        std::vector<Tensor> leaves{decoded};
        params.heads.visit("heads", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
        out.push_back(check(
            "predict_heads", leaves,
            [&](const auto&) {
                const auto p = detr::predict_heads(decoded, params.heads);
                return ops::concat({ops::reshape(p.class_logits, {p.class_logits.size()}),
                                    ops::reshape(p.boxes, {p.boxes.size()})},
                                   0);
            },
            seed, opts));
    }
    {
        const auto sample = synth::make_sample(seed, 0, 64, 64, model.detr.num_classes);
        BoxSet gt = sample.gt;
        if (gt.boxes.empty() || gt.boxes.size() > model.detr.num_queries) {
            gt.boxes = {{0.3, 0.4, 0.2, 0.3}, {0.7, 0.6, 0.35, 0.25}};
            gt.labels = {0, 2};
        }
        auto leaves = params.tensors(model);
        auto report = grad_check(
            [&] { return detr::set_loss(detr::cred_detr_forward(sample.image, params, model), gt).total; }, leaves,
            opts);
        out.push_back({"default_cred_pipeline", report});
    }
    return out;
}

std::vector<Result> all_gradients(std::uint64_t seed, const GradCheckOptions& opts) {
    auto out = op_gradients(seed, opts);
    auto mods = module_gradients(seed, opts);
    out.insert(out.end(), mods.begin(), mods.end());
    return out;
}

}  // namespace cred::suites
