#include "cred/boxes.hpp"

#include "cred/ops.hpp"

#include <algorithm>

namespace cred {

void BoxSet::validate(std::size_t num_classes) const {
    if (labels.size() != boxes.size()) throw ValueError("box set: label count does not match box count");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        if (!(b.cx >= 0 && b.cx <= 1 && b.cy >= 0 && b.cy <= 1 && b.w > 0 && b.w <= 1 && b.h > 0 && b.h <= 1)) {
            throw ValueError("box set: box " + std::to_string(i) + " outside the normalized range");
        }
        if (labels[i] >= num_classes) throw ValueError("box set: label " + std::to_string(labels[i]) + " out of range");
    }
}

Tensor BoxSet::as_tensor() const {
    if (boxes.empty()) return {};
    std::vector<double> v;
    v.reserve(boxes.size() * 4);
    for (const auto& b : boxes) v.insert(v.end(), {b.cx, b.cy, b.w, b.h});
    return Tensor::from({boxes.size(), 4}, std::move(v));
}

namespace {

void require_valid(const Box& b) {
    if (!(b.w > 0 && b.h > 0)) throw ValueError("giou: degenerate box with non-positive width or height");
}

double intersection(const Box& a, const Box& b) {
    const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
    const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
    return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b) {
    require_valid(a);
    require_valid(b);
    const double inter = intersection(a, b);
    return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
    require_valid(a);
    require_valid(b);
    const double inter = intersection(a, b);
    const double uni = a.area() + b.area() - inter;
    const double hull = (std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0())) *
                        (std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0()));
    return inter / uni - (hull - uni) / hull;
}

Tensor giou_rows(const Tensor& a, const Tensor& b) {
    using namespace ops;
    if (a.rank() != 2 || a.extent(1) != 4 || a.shape() != b.shape()) {
        throw ShapeError("giou_rows: expected two [n,4] tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    auto col = [](const Tensor& t, std::size_t i) { return reshape(slice(t, 1, i, i + 1), {t.extent(0)}); };
    struct Corners {
        Tensor x0, y0, x1, y1, area;
    };
    auto corners = [&](const Tensor& t) {
        const Tensor cx = col(t, 0), cy = col(t, 1), w = col(t, 2), h = col(t, 3);
        const Tensor hw = scale(w, 0.5), hh = scale(h, 0.5);
        return Corners{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh), mul(w, h)};
    };
    const Corners p = corners(a), q = corners(b);
    const Tensor zero = Tensor::zeros({a.extent(0)});
    const Tensor iw = maximum(sub(minimum(p.x1, q.x1), maximum(p.x0, q.x0)), zero);
    const Tensor ih = maximum(sub(minimum(p.y1, q.y1), maximum(p.y0, q.y0)), zero);
    const Tensor inter = mul(iw, ih);
    const Tensor uni = sub(add(p.area, q.area), inter);
    const Tensor hull = mul(sub(maximum(p.x1, q.x1), minimum(p.x0, q.x0)), sub(maximum(p.y1, q.y1), minimum(p.y0, q.y0)));
    return sub(div(inter, uni), div(sub(hull, uni), hull));
}

}  // namespace cred
