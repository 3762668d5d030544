#include "cred/synth.hpp"

#include "cred/crt1.hpp"
#include "cred/rng.hpp"

#include <json.hpp>

#include <array>
#include <fstream>

namespace cred::synth {

FeaturePyramid seeded_pyramid(std::uint64_t seed, std::size_t channels, std::size_t h0, std::size_t w0,
                              std::size_t n_levels) {
    if (channels == 0 || h0 == 0 || w0 == 0 || n_levels == 0) {
        throw ValueError("seeded_pyramid: extents must be positive");
    }
    FeaturePyramid p;
    for (std::size_t i = 0; i < n_levels; ++i) {
        CounterRng rng(seed, stream_id("pyramid") + i);
        const std::size_t h = h0 << i, w = w0 << i;
        std::vector<double> v(channels * h * w);
        for (auto& x : v) {
            do {
                x = rng.uniform(-1.0, 1.0);
            } while (x == -1.0);
        }
        p.levels.push_back(Tensor::from({channels, h, w}, std::move(v)));
        p.strides.push_back(std::size_t{32} >> std::min<std::size_t>(i, 5));
    }
    return p;
}

std::vector<bool> rasterize(const ShapeObject& obj, std::size_t height, std::size_t width) {
    std::vector<bool> mask(height * width, false);
    const double cx = static_cast<double>(obj.x0) + static_cast<double>(obj.w) / 2;
    const double cy = static_cast<double>(obj.y0) + static_cast<double>(obj.h) / 2;
    for (std::size_t y = obj.y0; y < std::min(height, obj.y0 + obj.h); ++y)
        for (std::size_t x = obj.x0; x < std::min(width, obj.x0 + obj.w); ++x) {
            bool inside = true;
            if (obj.ellipse) {
                const double dx = (static_cast<double>(x) + 0.5 - cx) / (static_cast<double>(obj.w) / 2);
                const double dy = (static_cast<double>(y) + 0.5 - cy) / (static_cast<double>(obj.h) / 2);
                inside = dx * dx + dy * dy <= 1.0;
            }
            mask[y * width + x] = inside;
        }
    return mask;
}

Box to_box(const ShapeObject& obj, std::size_t height, std::size_t width) {
    const double W = static_cast<double>(width), H = static_cast<double>(height);
    return {(static_cast<double>(obj.x0) + static_cast<double>(obj.w) / 2) / W,
            (static_cast<double>(obj.y0) + static_cast<double>(obj.h) / 2) / H, static_cast<double>(obj.w) / W,
            static_cast<double>(obj.h) / H};
}

namespace {

std::array<double, 3> class_color(std::size_t label) {
    static constexpr std::array<std::array<double, 3>, 6> palette{{
        {0.95, 0.15, 0.15},
        {0.15, 0.85, 0.2},
        {0.2, 0.3, 0.95},
        {0.95, 0.9, 0.15},
        {0.9, 0.2, 0.9},
        {0.15, 0.9, 0.9},
    }};
    auto c = palette[label % palette.size()];
    const double dim = 1.0 - 0.3 * static_cast<double>((label / palette.size()) % 3);
    for (auto& v : c) v *= dim;
    return c;
}

}  // namespace

ShapesSample make_sample(std::uint64_t seed, std::size_t index, std::size_t height, std::size_t width,
                         std::size_t num_classes) {
    if (height == 0 || width == 0 || height % 32 || width % 32) {
        throw ValueError("shapes_dataset: image extents must be positive multiples of 32");
    }
    if (num_classes == 0) throw ValueError("shapes_dataset: num_classes must be >= 1");
    CounterRng rng(seed, index);
    ShapesSample s;
    s.seed = seed;
    s.index = index;

    std::vector<double> img(3 * height * width);
    for (auto& v : img) v = 0.15 * rng.uniform();

    const std::size_t count = rng.below(5);
    const std::size_t min_h = height / 5, max_h = height / 2;
    const std::size_t min_w = width / 5, max_w = width / 2;
    for (std::size_t k = 0; k < count; ++k) {
        ShapeObject o;
        o.label = rng.below(num_classes);
        o.ellipse = o.label % 2 == 1;
        o.w = min_w + rng.below(max_w - min_w + 1);
        o.h = min_h + rng.below(max_h - min_h + 1);
        o.x0 = rng.below(width - o.w + 1);
        o.y0 = rng.below(height - o.h + 1);
        const auto color = class_color(o.label);
        const auto mask = rasterize(o, height, width);
        for (std::size_t p = 0; p < mask.size(); ++p) {
            if (!mask[p]) continue;
            for (std::size_t c = 0; c < 3; ++c) img[c * height * width + p] = color[c];
        }
        s.objects.push_back(o);
        s.gt.boxes.push_back(to_box(o, height, width));
        s.gt.labels.push_back(o.label);
    }
    s.image = Tensor::from({3, height, width}, std::move(img));
    return s;
}

std::vector<ShapesSample> shapes_dataset(std::uint64_t seed, std::size_t count, std::size_t height, std::size_t width,
                                         std::size_t num_classes) {
    std::vector<ShapesSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(seed, i, height, width, num_classes));
    return out;
}

void export_dataset(const std::filesystem::path& dir, const std::vector<ShapesSample>& samples) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "CRT1";
    manifest["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
        const std::string file = "image_" + std::to_string(s.index) + ".crt1";
        crt1::save(dir / file, s.image);
        nlohmann::json entry;
        entry["file"] = file;
        entry["seed"] = s.seed;
        entry["index"] = s.index;
        entry["boxes"] = nlohmann::json::array();
        for (const auto& b : s.gt.boxes) entry["boxes"].push_back({b.cx, b.cy, b.w, b.h});
        entry["labels"] = s.gt.labels;
        manifest["samples"].push_back(entry);
    }
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw Error("export_dataset: cannot write manifest in " + dir.string());
}

}  // namespace cred::synth
