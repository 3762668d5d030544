#pragma once

#include "cred/osma.hpp"
#include "cred/params.hpp"
#include "cred/tensor.hpp"

#include <span>
#include <vector>

namespace cred::cram {

struct Config {
    std::size_t channels = 256;
    std::size_t num_layers = 6;  // one refinement per encoder layer
    // Backbone stage feeding Y: 4 (stride 16, default) or 3 (stride 8).
    int source_stage = 4;
    bool norm_enabled = true;
    Activation act = Activation::silu;
    double eps = 1e-5;

    void validate() const;
    // Index of the source stage in a FeaturePyramid ordered F5, F4, F3.
    std::size_t pyramid_index() const;
};

struct LayerParams {
    Linear proj;  // 2C -> C over channels
    Norm norm;    // over channels, per spatial position
};

struct Params {
    std::vector<LayerParams> layers;

    static Params init(const Config& cfg, CounterRng& rng);
    static Params zeros(const Config& cfg);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// The high-resolution feature being refined.
struct State {
    Tensor y;  // [C, H, W]
    std::size_t layer_index = 0;
    std::size_t num_layers = 0;
};

State init(const FeaturePyramid& pyramid, const Config& cfg);
// Starts from an explicit map instead of a backbone level.
State init_from(const Tensor& y, const Config& cfg);

// y' = y + act(norm(W [y ; upsample(x_e)] + b)).
State layer(const State& state, const Tensor& encoder_out, const LayerParams& params, const Config& cfg);

// Folds `layer` over the per-encoder-layer outputs (each [C, h, w]).
Tensor forward(const State& initial, std::span<const Tensor> encoder_outputs, const Params& params, const Config& cfg);
Tensor forward(const FeaturePyramid& pyramid, std::span<const Tensor> encoder_outputs, const Params& params,
               const Config& cfg);

}  // namespace cred::cram
