#pragma once

#include "cred/params.hpp"
#include "cred/tensor.hpp"

#include <cstddef>
#include <vector>

namespace cred {

// Multiscale backbone features. levels[0] is the coarsest map (stride 32),
// each following level is nominally twice as large (stride 16, then 8).
// All levels share the channel count.
struct FeaturePyramid {
    std::vector<Tensor> levels;  // each [C, H_i, W_i]
    std::vector<std::size_t> strides;

    std::size_t channels() const;
    std::size_t size() const { return levels.size(); }
    // Throws unless non-empty, rank-3 and channel-consistent.
    void validate() const;
};

namespace osma {

// Geometry and layer configuration of one OSMA instance.
//
// `grid` is the grid size g on the coarsest level; level i uses 2^i * g.
// Since the coarsest grid size is also the g0 of the {g0, P} output pair,
// one field serves both roles.
struct Config {
    std::size_t grid = 1;
    std::size_t out_tokens = 1;  // P
    std::size_t latent = 0;      // d; 0 means d = T
    std::size_t depth = 2;       // projection blocks before the P-channel layer
    bool norm_enabled = true;
    Activation act = Activation::silu;
    double eps = 1e-5;

    // Throws ValueError naming the offending field.
    void validate() const;
    std::size_t latent_for(std::size_t tokens) const { return latent == 0 ? tokens : latent; }
    // sqrt(P); requires P to be a perfect square.
    std::size_t upscale() const;
};

// Stacked cells per grid: sum over i < n of (2^i * g)^2.
std::size_t token_count(std::size_t n_levels, std::size_t grid);

// Aggregated per-grid matrices: data is [N_g, T, C] with grid index
// row-major over a rows x cols lattice on the coarsest level.
struct GridStack {
    Tensor data;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;

    std::size_t grids() const { return data.extent(0); }
    std::size_t tokens() const { return data.extent(1); }
    std::size_t channels() const { return data.extent(2); }
};

struct Params {
    std::vector<Linear> token_layers;  // T->d, (depth-1) x d->d, d->P; no bias under norm
    std::vector<Norm> norms;           // one per token layer, over C
    Linear column;                     // C->C over the channel axis

    // Random initialization for `n_levels` inputs of width `channels`.
    static Params init(const Config& cfg, std::size_t n_levels, std::size_t channels, CounterRng& rng);
    // Identity mapping: every token layer and the column layer are identities.
    // Requires d = P = T.
    static Params identity(const Config& cfg, std::size_t n_levels, std::size_t channels);

    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Bilinearly resizes level i to 2^i times an aligned coarsest size, where
// the coarsest extents are rounded up to a multiple of `grid`.
FeaturePyramid align_scales(const FeaturePyramid& pyramid, const Config& cfg);

// Splits every level into its co-located grids and stacks the cells,
// coarsest level first and row-major within a level.
GridStack local_aggregate(const FeaturePyramid& aligned, const Config& cfg);

// Token-axis projections (each followed by norm over C and activation)
// down to P tokens, then a C->C column projection without norm.
GridStack one_step_attention(const GridStack& stack, const Params& params, const Config& cfg);

// Places the P vectors of every grid as a sqrt(P) x sqrt(P) block:
// output is [C, rows*sqrt(P), cols*sqrt(P)].
Tensor broadcast_output(const GridStack& attended, const Config& cfg);

// align_scales -> local_aggregate -> one_step_attention -> broadcast_output.
Tensor forward(const FeaturePyramid& pyramid, const Params& params, const Config& cfg);

// Output extents for a coarsest map of h0 x w0 (before alignment).
std::pair<std::size_t, std::size_t> output_extents(std::size_t h0, std::size_t w0, const Config& cfg);

}  // namespace osma
}  // namespace cred
