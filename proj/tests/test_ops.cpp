#include "cred/gradcheck.hpp"
#include "cred/ops.hpp"
#include "cred/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace cred;

namespace {

Tensor random(Shape shape, std::uint64_t seed) {
    CounterRng rng(seed, 2);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("matmul examples") {
    const auto b = Tensor::from({2, 2}, {3, -1, 0.5, 2});
    const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    CHECK(bitwise_equal(ops::matmul(eye, b), b));

    const auto c = ops::matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {0, 1}));
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 2);
    CHECK(c[1] == 4);

    try {
        ops::matmul(random({2, 3}, 1), random({2, 3}, 2));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("matmul agrees with the triple loop") {
    for (std::size_t m : {1, 3, 9, 16})
        for (std::size_t k : {1, 4, 16})
            for (std::size_t n : {2, 7, 16}) {
                const auto a = random({m, k}, m * 100 + k), b = random({k, n}, k * 100 + n);
                const auto c = ops::matmul(a, b);
                const auto ref = naive_matmul(a, b);
                for (std::size_t i = 0; i < ref.size(); ++i) {
                    CHECK(std::abs(c[i] - ref[i]) <= 1e-12 * std::max(1.0, std::abs(ref[i])));
                }
            }
}

TEST_CASE("axis_linear examples") {
    const auto x = random({2, 3, 4}, 5);
    std::vector<double> eye(9, 0.0);
    for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
    CHECK(bitwise_equal(ops::axis_linear(x, 1, Tensor::from({3, 3}, eye), Tensor::zeros({3})), x));

    const auto rows = ops::axis_linear(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), 1, Tensor::full({3, 1}, 1.0));
    CHECK(rows.shape() == Shape{2, 1});
    CHECK(rows[0] == 6);
    CHECK(rows[1] == 15);

    CHECK_THROWS_AS(ops::axis_linear(x, 3, Tensor::zeros({3, 3})), ShapeError);
    CHECK_THROWS_AS(ops::axis_linear(x, 2, Tensor::zeros({3, 3})), ShapeError);
}

TEST_CASE("axis_linear matches permute then matmul") {
    const auto x = random({4, 5, 6}, 11), w = random({5, 7}, 12), b = random({7}, 13);
    const auto y = ops::axis_linear(x, 1, w, b);
    REQUIRE(y.shape() == Shape{4, 7, 6});
    // oracle: move axis 1 last, flatten, multiply, move back
    const std::size_t axes[] = {0, 2, 1};
    const auto flat = ops::reshape(ops::permute(x, axes), {24, 5});
    const auto ref = naive_matmul(flat, w);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t o = 0; o < 7; ++o) {
                const double expect = ref[(i * 6 + j) * 7 + o] + b[o];
                CHECK(y[(i * 7 + o) * 6 + j] == doctest::Approx(expect).epsilon(1e-12));
            }
}

TEST_CASE("layer_norm examples") {
    const auto ones = Tensor::full({3}, 1.0), zeros = Tensor::zeros({3});
    const auto c = ops::layer_norm(Tensor::full({2, 3}, 4.0), 1, ones, zeros, 1e-5);
    for (double v : c.data()) CHECK(v == 0.0);

    const auto s = ops::layer_norm(Tensor::from({2}, {1, 3}), 0, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
    CHECK(s[0] == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-10));

    const auto x = random({5, 8, 3}, 21);
    const auto n = ops::normalize(x, 1, 1e-12);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            double mean = 0, var = 0;
            for (std::size_t j = 0; j < 8; ++j) mean += n[(i * 8 + j) * 3 + k];
            mean /= 8;
            for (std::size_t j = 0; j < 8; ++j) var += std::pow(n[(i * 8 + j) * 3 + k] - mean, 2);
            var /= 8;
            CHECK(std::abs(mean) < 1e-10);
            CHECK(std::abs(var - 1.0) < 1e-6);
        }

    CHECK_THROWS_AS(ops::layer_norm(Tensor::from({1}, {2.0}), 0, Tensor::full({1}, 1.0), Tensor::zeros({1}), 0.0),
                    ValueError);
}

TEST_CASE("silu examples") {
    const auto y = ops::silu(Tensor::from({2}, {0.0, 1.0}));
    CHECK(y[0] == 0.0);
    // 1 / (1 + e^-1) to 16 digits
    CHECK(y[1] == doctest::Approx(0.7310585786300049).epsilon(1e-15));

    std::vector<double> grid;
    for (int i = -20000; i <= 20000; ++i) grid.push_back(i * 1e-3);
    const auto s = ops::silu(Tensor::from({grid.size()}, grid));
    CHECK(*std::min_element(s.data().begin(), s.data().end()) > -0.2785);
}

TEST_CASE("softmax examples") {
    const auto u = ops::softmax(Tensor::zeros({3}), 0);
    for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3));

    const auto big = ops::softmax(Tensor::from({2}, {1000.0, 0.0}), 0);
    CHECK(std::abs(big[0] - 1.0) < 1e-12);
    CHECK(big[1] < 1e-12);

    const auto r = ops::softmax(ops::scale(random({6, 9}, 31), 10.0), 1);
    for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 9; ++j) {
            const double p = r[i * 9 + j];
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("bilinear_resize examples") {
    const auto c = ops::bilinear_resize(Tensor::full({2, 3, 5}, 0.25), 7, 2);
    CHECK(c.shape() == Shape{2, 7, 2});
    for (double v : c.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    const auto x = random({3, 4, 5}, 41);
    CHECK(bitwise_equal(ops::bilinear_resize(x, 4, 5), x));

    // per-pixel oracle: src = (i + 0.5) * H / H2 - 0.5, clamped to [0, H-1]
    const auto m = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    const auto up = ops::bilinear_resize(m, 4, 4);
    auto sample = [&](double sy, double sx) {
        sy = std::clamp(sy, 0.0, 1.0);
        sx = std::clamp(sx, 0.0, 1.0);
        const double top = (1 - sx) * 0 + sx * 1, bottom = (1 - sx) * 2 + sx * 3;
        return (1 - sy) * top + sy * bottom;
    };
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(up[i * 4 + j] == doctest::Approx(sample((i + 0.5) * 0.5 - 0.5, (j + 0.5) * 0.5 - 0.5)));
        }
    CHECK(up[0] == 0.0);
    CHECK(up[5] == doctest::Approx(0.75));
    CHECK(up[15] == 3.0);
}

TEST_CASE("concat examples") {
    const auto a = random({2, 3}, 51);
    CHECK(bitwise_equal(ops::concat({a}, 0), a));

    const auto j = ops::concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})}, 0);
    CHECK(j.shape() == Shape{3});
    CHECK(j[2] == 3);

    const auto b = random({2, 5}, 52);
    const auto ab = ops::concat({a, b}, 1);
    CHECK(bitwise_equal(ops::slice(ab, 1, 0, 3), a));
    CHECK(bitwise_equal(ops::slice(ab, 1, 3, 8), b));
    CHECK_THROWS_AS(ops::concat({a, b}, 0), ShapeError);
}

TEST_CASE("space_to_depth examples") {
    const auto x = random({3, 4, 6}, 61);
    CHECK(bitwise_equal(ops::space_to_depth(x, 1), x));

    const auto s = ops::space_to_depth(Tensor::from({1, 2, 2}, {10, 11, 12, 13}), 2);
    CHECK(s.shape() == Shape{4, 1, 1});
    for (int i = 0; i < 4; ++i) CHECK(s[i] == 10 + i);

    CHECK(bitwise_equal(ops::depth_to_space(ops::space_to_depth(x, 2), 2), x));
    CHECK_THROWS_AS(ops::space_to_depth(x, 4), ShapeError);
}

TEST_CASE("grid_partition and grid_merge examples") {
    const auto x = random({3, 4, 6}, 71);
    const auto flat = ops::grid_partition(x, 1);
    CHECK(flat.shape() == Shape{24, 1, 3});
    CHECK(flat[(1 * 6 + 2) * 3 + 1] == x[(1 * 4 + 1) * 6 + 2]);

    std::vector<double> v(16);
    for (int i = 0; i < 16; ++i) v[i] = i;
    const auto g = ops::grid_partition(Tensor::from({1, 4, 4}, v), 2);
    CHECK(g.shape() == Shape{4, 4, 1});
    CHECK(g[0] == 0);
    CHECK(g[1] == 1);
    CHECK(g[2] == 4);
    CHECK(g[3] == 5);
    CHECK(g[4] == 2);  // grid 1 starts at cell (0,2)

    const auto m = random({2, 8, 8}, 72);
    for (std::size_t gs : {1, 2, 4}) CHECK(bitwise_equal(ops::grid_merge(ops::grid_partition(m, gs), 8, 8, gs), m));

    const auto whole = ops::grid_partition(m, 8);
    CHECK(whole.shape() == Shape{1, 64, 2});
    CHECK(bitwise_equal(ops::grid_merge(whole, 8, 8, 8), m));

    CHECK_THROWS_AS(ops::grid_merge(random({3, 4, 2}, 73), 8, 8, 2), ShapeError);
    CHECK_THROWS_AS(ops::grid_partition(m, 3), ShapeError);
}

TEST_CASE("token layout round trip") {
    const auto x = random({4, 3, 5}, 81);
    const auto t = ops::to_tokens(x);
    CHECK(t.shape() == Shape{15, 4});
    CHECK(t[(2 * 5 + 1) * 4 + 3] == x[(3 * 3 + 2) * 5 + 1]);
    CHECK(bitwise_equal(ops::from_tokens(t, 3, 5), x));
}

TEST_CASE("every op passes grad_check on a random shape") {
    CounterRng rng(5, 9);
    auto leaf = [&](Shape s) {
        std::vector<double> v(numel(s));
        for (auto& x : v) x = rng.uniform(0.2, 1.5);
        return Tensor::from(std::move(s), std::move(v), true);
    };
    auto w = [&](const Tensor& t) {
        std::vector<double> v(t.size());
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        return Tensor::from(t.shape(), std::move(v));
    };
    auto a = leaf({3, 4}), b = leaf({3, 4}), m = leaf({4, 2}), x = leaf({2, 4, 6});
    auto g = leaf({4}), beta = leaf({4});
    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"sub", [&] { return ops::sub(a, b); }},
        {"neg_abs", [&] { return ops::abs(ops::neg(a)); }},
        {"add_scalar", [&] { return ops::add_scalar(a, 0.5); }},
        {"transpose", [&] { return ops::transpose(a); }},
        {"matmul", [&] { return ops::matmul(a, m); }},
        {"mean", [&] { return ops::mean(ops::mul(a, b)); }},
        {"index_select", [&] {
             const std::size_t idx[] = {2, 0, 2};
             return ops::index_select(a, 0, idx);
         }},
        {"layer_norm", [&] { return ops::layer_norm(x, 1, g, beta, 1e-5); }},
        {"to_tokens", [&] { return ops::to_tokens(x); }},
        {"bilinear", [&] { return ops::bilinear_resize(x, 3, 9); }},
    };
    for (const auto& [name, f] : cases) {
        CAPTURE(name);
        const auto weights = w(f());
        const auto r = grad_check([&] { return ops::sum(ops::mul(f(), weights)); }, {a, b, m, x, g, beta});
        CHECK(r.passed);
    }
}
