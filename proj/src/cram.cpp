#include "cred/cram.hpp"

#include "cred/ops.hpp"

#include <string>

namespace cred::cram {

void Config::validate() const {
    if (channels == 0) throw ValueError("cram.channels: must be >= 1");
    if (num_layers == 0) throw ValueError("cram.num_layers: must be >= 1");
    if (source_stage != 3 && source_stage != 4) throw ValueError("cram.source_stage: must be 3 or 4");
    if (eps <= 0) throw ValueError("cram.eps: must be positive");
}

std::size_t Config::pyramid_index() const { return static_cast<std::size_t>(5 - source_stage); }

Params Params::init(const Config& cfg, CounterRng& rng) {
    cfg.validate();
    Params p;
    for (std::size_t i = 0; i < cfg.num_layers; ++i) {
        p.layers.push_back({Linear::init(2 * cfg.channels, cfg.channels, rng), Norm::init(cfg.channels)});
    }
    return p;
}

Params Params::zeros(const Config& cfg) {
    Params p;
    for (std::size_t i = 0; i < cfg.num_layers; ++i) {
        p.layers.push_back({Linear::zeros(2 * cfg.channels, cfg.channels), Norm::init(cfg.channels)});
    }
    return p;
}

void Params::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].proj.visit(prefix + ".layer" + std::to_string(i) + ".proj", fn);
        layers[i].norm.visit(prefix + ".layer" + std::to_string(i) + ".norm", fn);
    }
}

State init(const FeaturePyramid& pyramid, const Config& cfg) {
    cfg.validate();
    const std::size_t idx = cfg.pyramid_index();
    if (idx >= pyramid.size()) {
        throw ValueError("cram.source_stage: pyramid has no F" + std::to_string(cfg.source_stage) + " level");
    }
    return init_from(pyramid.levels[idx], cfg);
}

State init_from(const Tensor& y, const Config& cfg) {
    cfg.validate();
    if (y.rank() != 3 || y.extent(0) != cfg.channels) {
        throw ShapeError("cram: initial feature " + shape_str(y.shape()) + " does not have " +
                         std::to_string(cfg.channels) + " channels");
    }
    return {y, 0, cfg.num_layers};
}

State layer(const State& state, const Tensor& encoder_out, const LayerParams& params, const Config& cfg) {
    if (state.layer_index >= state.num_layers) {
        throw ValueError("cram: layer " + std::to_string(state.layer_index) + " exceeds num_layers " +
                         std::to_string(state.num_layers));
    }
    if (encoder_out.rank() != 3 || encoder_out.extent(0) != state.y.extent(0)) {
        throw ShapeError("cram: encoder output " + shape_str(encoder_out.shape()) + " does not match channels of " +
                         shape_str(state.y.shape()));
    }
    const Tensor upsampled = ops::bilinear_resize(encoder_out, state.y.extent(1), state.y.extent(2));
    Tensor z = params.proj(ops::concat({state.y, upsampled}, 0), 0);
    if (cfg.norm_enabled) z = params.norm(z, 0, cfg.eps);
    z = activate(z, cfg.act);
    return {ops::add(state.y, z), state.layer_index + 1, state.num_layers};
}

Tensor forward(const State& initial, std::span<const Tensor> encoder_outputs, const Params& params, const Config& cfg) {
    if (encoder_outputs.size() != initial.num_layers - initial.layer_index) {
        throw ValueError("cram: got " + std::to_string(encoder_outputs.size()) + " encoder outputs for " +
                         std::to_string(initial.num_layers - initial.layer_index) + " remaining layers");
    }
    if (params.layers.size() < initial.num_layers) throw ValueError("cram: fewer layer parameters than num_layers");
    State s = initial;
    for (const auto& x : encoder_outputs) s = layer(s, x, params.layers[s.layer_index], cfg);
    return s.y;
}

Tensor forward(const FeaturePyramid& pyramid, std::span<const Tensor> encoder_outputs, const Params& params,
               const Config& cfg) {
    return forward(init(pyramid, cfg), encoder_outputs, params, cfg);
}

}  // namespace cred::cram
