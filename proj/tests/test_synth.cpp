#include "cred/crt1.hpp"
#include "cred/synth.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace cred;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("seeded pyramid") {
    const auto a = synth::seeded_pyramid(3, 4, 2, 2, 3), b = synth::seeded_pyramid(3, 4, 2, 2, 3);
    REQUIRE(a.size() == 3);
    CHECK(a.levels[0].shape() == Shape{4, 2, 2});
    CHECK(a.levels[1].shape() == Shape{4, 4, 4});
    CHECK(a.levels[2].shape() == Shape{4, 8, 8});
    CHECK(a.strides == std::vector<std::size_t>{32, 16, 8});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(bitwise_equal(a.levels[i], b.levels[i]));
        for (double v : a.levels[i].data()) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
    }
    CHECK_FALSE(bitwise_equal(a.levels[0], synth::seeded_pyramid(4, 4, 2, 2, 3).levels[0]));
}

TEST_CASE("rectangle masks match their boxes") {
    const std::size_t h = 64, w = 96;
    for (std::size_t i = 0; i < 200; ++i) {
        const auto s = synth::make_sample(5, i, h, w, 4);
        CHECK(s.objects.size() <= 4);
        for (std::size_t k = 0; k < s.objects.size(); ++k) {
            const auto& o = s.objects[k];
            const auto& b = s.gt.boxes[k];
            CHECK(b.x0() >= 0.0);
            CHECK(b.y0() >= 0.0);
            CHECK(b.x1() <= 1.0);
            CHECK(b.y1() <= 1.0);
            if (o.ellipse) continue;
            const auto mask = synth::rasterize(o, h, w);
            std::size_t inter = 0, on = 0;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double px = (static_cast<double>(x) + 0.5) / w, py = (static_cast<double>(y) + 0.5) / h;
                    const bool in_box = px > b.x0() && px < b.x1() && py > b.y0() && py < b.y1();
                    on += mask[y * w + x];
                    inter += mask[y * w + x] && in_box;
                    CHECK(mask[y * w + x] == in_box);
                }
            CHECK(inter == on);
            CHECK(on == o.w * o.h);
        }
        s.gt.validate(4);
        for (double v : s.image.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("class histogram is near uniform") {
    const std::size_t k = 3;
    std::vector<std::size_t> counts(k, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 1000; ++i)
        for (auto label : synth::make_sample(7, i, 32, 32, k).gt.labels) {
            ++counts[label];
            ++total;
        }
    const double expect = static_cast<double>(total) / k;
    for (auto c : counts) CHECK(std::fabs(static_cast<double>(c) - expect) <= 0.1 * expect);
}

TEST_CASE("datasets are deterministic and order independent") {
    const auto a = synth::shapes_dataset(9, 6, 64, 64, 3);
    const auto b = synth::shapes_dataset(9, 6, 64, 64, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(bitwise_equal(a[i].image, b[i].image));
        CHECK(a[i].gt.labels == b[i].gt.labels);
    }
    const auto single = synth::make_sample(9, 4, 64, 64, 3);
    CHECK(bitwise_equal(single.image, a[4].image));
    CHECK_THROWS_AS(synth::shapes_dataset(9, 1, 60, 64, 3), ValueError);
}

TEST_CASE("dataset export") {
    const auto dir = std::filesystem::temp_directory_path() / "cred_synth_export";
    std::filesystem::remove_all(dir);
    const auto data = synth::shapes_dataset(2, 3, 32, 64, 3);
    synth::export_dataset(dir, data);
    std::ifstream in(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    REQUIRE(manifest["samples"].size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& e = manifest["samples"][i];
        CHECK(e["labels"].get<std::vector<std::size_t>>() == data[i].gt.labels);
        CHECK(e["boxes"].size() == data[i].gt.size());
        const auto img = crt1::load(dir / e["file"].get<std::string>());
        CHECK(img.shape() == Shape{3, 32, 64});
    }
    std::filesystem::remove_all(dir);
}
