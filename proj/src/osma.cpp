#include "cred/osma.hpp"

#include "cred/ops.hpp"

#include <cmath>
#include <string>

namespace cred {

std::size_t FeaturePyramid::channels() const {
    if (levels.empty()) throw ValueError("empty feature pyramid");
    return levels.front().extent(0);
}

void FeaturePyramid::validate() const {
    if (levels.empty()) throw ValueError("feature pyramid has no levels");
    const std::size_t c = levels.front().rank() == 3 ? levels.front().extent(0) : 0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& l = levels[i];
        if (l.rank() != 3) throw ShapeError("pyramid level " + std::to_string(i) + " is not [C,H,W]");
        if (l.extent(0) != c) {
            throw ShapeError("pyramid level " + std::to_string(i) + " has " + std::to_string(l.extent(0)) +
                             " channels, expected " + std::to_string(c));
        }
    }
}

namespace osma {

namespace {

std::size_t isqrt_exact(std::size_t v) {
    auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(v))));
    return r * r == v ? r : 0;
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

void Config::validate() const {
    if (grid == 0) throw ValueError("osma.g0: must be >= 1");
    if (out_tokens == 0) throw ValueError("osma.P: must be >= 1");
    if (isqrt_exact(out_tokens) == 0) throw ValueError("osma.P: must be 1 or a perfect square");
    if (depth == 0) throw ValueError("osma.depth: must be >= 1");
    if (eps <= 0) throw ValueError("osma.eps: must be positive");
}

std::size_t Config::upscale() const {
    const std::size_t r = isqrt_exact(out_tokens);
    if (r == 0) throw ValueError("osma.P: " + std::to_string(out_tokens) + " is not a perfect square");
    return r;
}

std::size_t token_count(std::size_t n_levels, std::size_t grid) {
    std::size_t t = 0;
    std::size_t side = grid;
    for (std::size_t i = 0; i < n_levels; ++i, side *= 2) t += side * side;
    return t;
}

Params Params::init(const Config& cfg, std::size_t n_levels, std::size_t channels, CounterRng& rng) {
    cfg.validate();
    const std::size_t t = token_count(n_levels, cfg.grid);
    const std::size_t d = cfg.latent_for(t);
    Params p;
    for (std::size_t i = 0; i <= cfg.depth; ++i) {
        const std::size_t in = i == 0 ? t : d;
        const std::size_t out = i == cfg.depth ? cfg.out_tokens : d;
        p.token_layers.push_back(Linear::init(in, out, rng, !cfg.norm_enabled));
        p.norms.push_back(Norm::init(channels));
    }
    p.column = Linear::init(channels, channels, rng);
    return p;
}

Params Params::identity(const Config& cfg, std::size_t n_levels, std::size_t channels) {
    const std::size_t t = token_count(n_levels, cfg.grid);
    if (cfg.latent_for(t) != t || cfg.out_tokens != t) {
        throw ValueError("identity OSMA parameters need d = P = T = " + std::to_string(t));
    }
    Params p;
    for (std::size_t i = 0; i <= cfg.depth; ++i) {
        p.token_layers.push_back(Linear::identity(t, !cfg.norm_enabled));
        p.norms.push_back(Norm::init(channels));
    }
    p.column = Linear::identity(channels);
    return p;
}

void Params::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < token_layers.size(); ++i) {
        token_layers[i].visit(prefix + ".token" + std::to_string(i), fn);
        norms[i].visit(prefix + ".norm" + std::to_string(i), fn);
    }
    column.visit(prefix + ".column", fn);
}

FeaturePyramid align_scales(const FeaturePyramid& pyramid, const Config& cfg) {
    pyramid.validate();
    cfg.validate();
    const auto& coarsest = pyramid.levels.front();
    const std::size_t h0 = round_up(coarsest.extent(1), cfg.grid);
    const std::size_t w0 = round_up(coarsest.extent(2), cfg.grid);
    FeaturePyramid out;
    out.strides = pyramid.strides;
    for (std::size_t i = 0; i < pyramid.size(); ++i) {
        const std::size_t f = std::size_t{1} << i;
        out.levels.push_back(ops::bilinear_resize(pyramid.levels[i], h0 * f, w0 * f));
    }
    return out;
}

GridStack local_aggregate(const FeaturePyramid& aligned, const Config& cfg) {
    aligned.validate();
    cfg.validate();
    const auto& coarsest = aligned.levels.front();
    if (coarsest.extent(1) % cfg.grid || coarsest.extent(2) % cfg.grid) {
        throw ShapeError("local_aggregate: coarsest level " + shape_str(coarsest.shape()) +
                         " is not divisible by grid " + std::to_string(cfg.grid) + "; align scales first");
    }
    GridStack stack;
    stack.grid_rows = coarsest.extent(1) / cfg.grid;
    stack.grid_cols = coarsest.extent(2) / cfg.grid;
    std::vector<Tensor> parts;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        const std::size_t g = cfg.grid << i;
        const auto& level = aligned.levels[i];
        if (level.extent(1) != stack.grid_rows * g || level.extent(2) != stack.grid_cols * g) {
            throw ShapeError("local_aggregate: level " + std::to_string(i) + " " + shape_str(level.shape()) +
                             " does not tile into the " + std::to_string(stack.grid_rows) + "x" +
                             std::to_string(stack.grid_cols) + " lattice with grid " + std::to_string(g));
        }
        parts.push_back(ops::grid_partition(level, g));
    }
    stack.data = ops::concat(parts, 1);
    return stack;
}

GridStack one_step_attention(const GridStack& stack, const Params& params, const Config& cfg) {
    cfg.validate();
    if (params.token_layers.empty() || params.token_layers.size() != params.norms.size()) {
        throw ValueError("one_step_attention: malformed parameters");
    }
    if (params.token_layers.front().weight.extent(0) != stack.tokens()) {
        throw ShapeError("one_step_attention: first projection expects " +
                         std::to_string(params.token_layers.front().weight.extent(0)) + " tokens, stack has " +
                         std::to_string(stack.tokens()));
    }
    if (params.token_layers.back().weight.extent(1) != cfg.out_tokens) {
        throw ShapeError("one_step_attention: last token projection does not produce P = " +
                         std::to_string(cfg.out_tokens) + " tokens");
    }
    Tensor h = stack.data;
    for (std::size_t i = 0; i < params.token_layers.size(); ++i) {
        h = params.token_layers[i](h, 1);
        if (cfg.norm_enabled) h = params.norms[i](h, 2, cfg.eps);
        h = activate(h, cfg.act);
    }
    h = params.column(h, 2);
    return {h, stack.grid_rows, stack.grid_cols};
}

Tensor broadcast_output(const GridStack& attended, const Config& cfg) {
    const std::size_t up = cfg.upscale();
    if (attended.tokens() != cfg.out_tokens) {
        throw ShapeError("broadcast_output: stack carries " + std::to_string(attended.tokens()) +
                         " vectors per grid, expected P = " + std::to_string(cfg.out_tokens));
    }
    if (attended.grid_rows * attended.grid_cols != attended.grids()) {
        throw ShapeError("broadcast_output: lattice " + std::to_string(attended.grid_rows) + "x" +
                         std::to_string(attended.grid_cols) + " inconsistent with N_g = " +
                         std::to_string(attended.grids()));
    }
    return ops::grid_merge(attended.data, attended.grid_rows * up, attended.grid_cols * up, up);
}

Tensor forward(const FeaturePyramid& pyramid, const Params& params, const Config& cfg) {
    const auto aligned = align_scales(pyramid, cfg);
    const auto stack = local_aggregate(aligned, cfg);
    return broadcast_output(one_step_attention(stack, params, cfg), cfg);
}

std::pair<std::size_t, std::size_t> output_extents(std::size_t h0, std::size_t w0, const Config& cfg) {
    const std::size_t up = cfg.upscale();
    return {round_up(h0, cfg.grid) / cfg.grid * up, round_up(w0, cfg.grid) / cfg.grid * up};
}

}  // namespace osma
}  // namespace cred
