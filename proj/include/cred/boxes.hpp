#pragma once

#include "cred/tensor.hpp"

#include <cstddef>
#include <vector>

namespace cred {

// Normalized (cx, cy, w, h) box.
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;

    double x0() const { return cx - w / 2; }
    double y0() const { return cy - h / 2; }
    double x1() const { return cx + w / 2; }
    double y1() const { return cy + h / 2; }
    double area() const { return w * h; }
};

struct BoxSet {
    std::vector<Box> boxes;
    std::vector<std::size_t> labels;

    std::size_t size() const { return boxes.size(); }
    // Throws unless 0 <= cx,cy <= 1, 0 < w,h <= 1 and labels match boxes.
    void validate(std::size_t num_classes) const;
    // [n, 4] tensor of (cx, cy, w, h); undefined when empty.
    Tensor as_tensor() const;
};

double iou(const Box& a, const Box& b);
// IoU - (hull - union) / hull, in (-1, 1]. Throws on non-positive extents.
double giou(const Box& a, const Box& b);

// Differentiable GIoU between matching rows of two [n, 4] (cx, cy, w, h)
// tensors; returns [n].
Tensor giou_rows(const Tensor& a, const Tensor& b);

}  // namespace cred
