#include "cred/gradcheck.hpp"
#include "cred/ops.hpp"
#include "cred/osma.hpp"
#include "cred/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace cred;

namespace {

FeaturePyramid ladder(std::size_t c, std::size_t h0, std::size_t w0, std::size_t n, std::uint64_t seed = 1) {
    return synth::seeded_pyramid(seed, c, h0, w0, n);
}

osma::Config identity_config(std::size_t g, std::size_t p) {
    osma::Config cfg;
    cfg.grid = g;
    cfg.out_tokens = p;
    cfg.norm_enabled = false;
    cfg.act = Activation::identity;
    return cfg;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("token count matches enumeration") {
    for (std::size_t n = 1; n <= 4; ++n)
        for (std::size_t g = 1; g <= 4; ++g) {
            std::size_t cells = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t gi = g << i;
                for (std::size_t r = 0; r < gi; ++r)
                    for (std::size_t c = 0; c < gi; ++c) ++cells;
            }
            CHECK(osma::token_count(n, g) == cells);
        }
    CHECK(osma::token_count(3, 1) == 21);
    CHECK(osma::token_count(2, 1) == 5);
    CHECK(osma::token_count(1, 2) == 4);
}

TEST_CASE("align_scales examples") {
    const auto p = ladder(2, 25, 40, 3);
    auto extents = [](const FeaturePyramid& q) {
        std::vector<std::pair<std::size_t, std::size_t>> e;
        for (const auto& l : q.levels) e.emplace_back(l.extent(1), l.extent(2));
        return e;
    };
    osma::Config g1;
    const auto same = osma::align_scales(p, g1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(bitwise_equal(same.levels[i], p.levels[i]));

    osma::Config g2;
    g2.grid = 2;
    const auto a = osma::align_scales(p, g2);
    const std::vector<std::pair<std::size_t, std::size_t>> expect = {{26, 40}, {52, 80}, {104, 160}};
    CHECK(extents(a) == expect);
    // divisibility oracle: smallest coarsest extents divisible by g, then the 1:2:4 ladder
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.levels[i].extent(1) % (g2.grid << i) == 0);
        CHECK(a.levels[i].extent(2) % (g2.grid << i) == 0);
    }

    const auto single = ladder(3, 5, 7, 1);
    CHECK(bitwise_equal(osma::align_scales(single, g1).levels[0], single.levels[0]));
}

TEST_CASE("local_aggregate stacks coarsest level first") {
    const auto p = ladder(3, 2, 3, 3);
    osma::Config cfg;
    const auto s = osma::local_aggregate(p, cfg);
    CHECK(s.data.shape() == Shape{6, 21, 3});
    CHECK(s.grid_rows == 2);
    CHECK(s.grid_cols == 3);
    // grid (1,2): coarse cell (1,2), then the 2x2 block at (2,4) of level 1
    const std::size_t j = 1 * 3 + 2;
    auto at = [&](std::size_t level, std::size_t y, std::size_t x, std::size_t c) {
        const auto& t = p.levels[level];
        return t[(c * t.extent(1) + y) * t.extent(2) + x];
    };
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(s.data[(j * 21 + 0) * 3 + c] == at(0, 1, 2, c));
        CHECK(s.data[(j * 21 + 1) * 3 + c] == at(1, 2, 4, c));
        CHECK(s.data[(j * 21 + 2) * 3 + c] == at(1, 2, 5, c));
        CHECK(s.data[(j * 21 + 3) * 3 + c] == at(1, 3, 4, c));
        CHECK(s.data[(j * 21 + 5) * 3 + c] == at(2, 4, 8, c));
        CHECK(s.data[(j * 21 + 20) * 3 + c] == at(2, 7, 11, c));
    }
}

TEST_CASE("identity configuration round trips") {
    SUBCASE("T = 1") {
        const auto p = ladder(4, 3, 5, 1);
        const auto cfg = identity_config(1, 1);
        const auto params = osma::Params::identity(cfg, 1, 4);
        const auto stack = osma::local_aggregate(osma::align_scales(p, cfg), cfg);
        const auto out = osma::one_step_attention(stack, params, cfg);
        CHECK(bitwise_equal(out.data, stack.data));
        CHECK(bitwise_equal(osma::forward(p, params, cfg), p.levels[0]));
    }
    SUBCASE("single level, any dividing grid") {
        for (std::size_t g : {1, 2, 3}) {
            CAPTURE(g);
            const auto p = ladder(2, 6, 6, 1, g);
            const auto cfg = identity_config(g, g * g);
            const auto params = osma::Params::identity(cfg, 1, 2);
            CHECK(bitwise_equal(osma::forward(p, params, cfg), p.levels[0]));
        }
    }
}

TEST_CASE("one_step_attention shape contract") {
    osma::Config cfg;
    const std::size_t c = 256;
    CounterRng rng(3, 4);
    const auto params = osma::Params::init(cfg, 3, c, rng);
    osma::GridStack stack{Tensor::full({1000, 21, c}, 0.5), 25, 40};
    const auto out = osma::one_step_attention(stack, params, cfg);
    CHECK(out.data.shape() == Shape{1000, 1, c});
}

TEST_CASE("broadcast geometry for the three output pairs") {
    const auto p = ladder(4, 25, 40, 3);
    struct Case {
        std::size_t g, pt, h, w;
    };
    for (const auto& k : {Case{1, 1, 25, 40}, Case{1, 4, 50, 80}, Case{2, 1, 13, 20}}) {
        CAPTURE(k.g);
        CAPTURE(k.pt);
        osma::Config cfg;
        cfg.grid = k.g;
        cfg.out_tokens = k.pt;
        CounterRng rng(9, k.g * 10 + k.pt);
        const auto params = osma::Params::init(cfg, 3, 4, rng);
        const auto out = osma::forward(p, params, cfg);
        CHECK(out.shape() == Shape{4, k.h, k.w});
        CHECK(osma::output_extents(25, 40, cfg) == std::pair{k.h, k.w});
    }
}

TEST_CASE("broadcast places P vectors as row-major blocks") {
    osma::Config cfg;
    cfg.out_tokens = 4;
    std::vector<double> v(2 * 4 * 1);
    std::iota(v.begin(), v.end(), 0.0);
    const osma::GridStack q{Tensor::from({2, 4, 1}, v), 1, 2};
    const auto out = osma::broadcast_output(q, cfg);
    REQUIRE(out.shape() == Shape{1, 2, 4});
    const std::vector<double> expect = {0, 1, 4, 5, 2, 3, 6, 7};
    CHECK(std::equal(expect.begin(), expect.end(), out.data().begin()));
}

TEST_CASE("output extents rule") {
    for (std::size_t g : {1, 2, 4})
        for (std::size_t pt : {1, 4, 16})
            for (std::size_t h0 : {2, 5, 8}) {
                osma::Config cfg;
                cfg.grid = g;
                cfg.out_tokens = pt;
                const std::size_t r = pt == 1 ? 1 : pt == 4 ? 2 : 4;
                const std::size_t aligned = (h0 + g - 1) / g;
                CHECK(osma::output_extents(h0, 2 * h0, cfg).first == aligned * r);
            }
}

TEST_CASE("grid order does not matter") {
    const auto p = ladder(5, 4, 4, 3, 17);
    osma::Config cfg;
    CounterRng rng(1, 2);
    const auto params = osma::Params::init(cfg, 3, 5, rng);
    const auto stack = osma::local_aggregate(osma::align_scales(p, cfg), cfg);
    const auto direct = osma::one_step_attention(stack, params, cfg);

    std::vector<std::size_t> perm(stack.grids());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 5, perm.end());
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;

    const osma::GridStack shuffled{ops::index_select(stack.data, 0, perm), stack.grid_rows, stack.grid_cols};
    const auto out = osma::one_step_attention(shuffled, params, cfg);
    const auto restored = ops::index_select(out.data, 0, inverse);
    CHECK(bitwise_equal(restored, direct.data));
}

TEST_CASE("config validation") {
    osma::Config cfg;
    cfg.out_tokens = 3;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.out_tokens = 1;
    cfg.grid = 0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg.grid = 1;
    cfg.depth = 0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("osma gradient check") {
    auto p = ladder(3, 2, 2, 3, 5);
    osma::Config cfg;
    cfg.latent = 6;
    CounterRng rng(2, 3);
    auto params = osma::Params::init(cfg, 3, 3, rng);
    std::vector<Tensor> leaves = p.levels;
    params.visit("osma", [&](const std::string&, Tensor& t) { leaves.push_back(t); });
    CounterRng wr(4, 4);
    std::vector<double> w(3 * 2 * 2);
    for (auto& x : w) x = wr.uniform(-1, 1);
    const auto weights = Tensor::from({3, 2, 2}, w);
    const auto r = grad_check([&] { return ops::sum(ops::mul(osma::forward(p, params, cfg), weights)); }, leaves);
    CHECK(r.max_rel_error < 1e-4);
}
