#pragma once

#include "cred/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace cred {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Coordinates probed per leaf; 0 probes all of them. When limited, the
    // probed coordinates are an evenly strided subset (deterministic).
    std::size_t max_coords_per_leaf = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_leaf = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
    bool passed = false;
};

// Compares the reverse-mode gradient of a scalar-valued function against
// central differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate.
// `f` must rebuild its graph from `leaves` on every call. Relative error is
// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                           const GradCheckOptions& options = {});

}  // namespace cred
