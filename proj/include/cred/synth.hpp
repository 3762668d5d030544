#pragma once

#include "cred/boxes.hpp"
#include "cred/osma.hpp"
#include "cred/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cred::synth {

// Uniform(-1, 1) features on the 1:2:4 ladder: level i is
// [C, 2^i * h0, 2^i * w0]; strides start at 32 and halve.
FeaturePyramid seeded_pyramid(std::uint64_t seed, std::size_t channels, std::size_t h0, std::size_t w0,
                              std::size_t n_levels);

// One drawn object in pixel coordinates [x0, x0 + w) x [y0, y0 + h).
struct ShapeObject {
    std::size_t x0 = 0, y0 = 0, w = 0, h = 0;
    std::size_t label = 0;
    bool ellipse = false;
};

// Pixels covered by the object, row-major H x W.
std::vector<bool> rasterize(const ShapeObject& obj, std::size_t height, std::size_t width);
Box to_box(const ShapeObject& obj, std::size_t height, std::size_t width);

struct ShapesSample {
    Tensor image;  // [3, H, W] in [0, 1]
    BoxSet gt;
    std::vector<ShapeObject> objects;
    std::uint64_t seed = 0;
    std::size_t index = 0;
};

// Even classes are rectangles, odd classes ellipses; every class has its
// own color. 0-4 objects on a low-amplitude noise background. A sample is a
// pure function of (seed, index).
ShapesSample make_sample(std::uint64_t seed, std::size_t index, std::size_t height, std::size_t width,
                         std::size_t num_classes);
std::vector<ShapesSample> shapes_dataset(std::uint64_t seed, std::size_t count, std::size_t height, std::size_t width,
                                         std::size_t num_classes);

// Writes image_<i>.crt1 files and manifest.json (boxes, labels, seed).
void export_dataset(const std::filesystem::path& dir, const std::vector<ShapesSample>& samples);

}  // namespace cred::synth
