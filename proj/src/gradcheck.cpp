#include "cred/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cred {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                           const GradCheckOptions& options) {
    if (options.step <= 0) throw ValueError("grad_check: step must be positive");
    for (auto& leaf : leaves) {
        if (!leaf.is_leaf()) throw ValueError("grad_check: every checked tensor must be a leaf");
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }

    Tensor out = f();
    if (out.size() != 1) throw ShapeError("grad_check: function must be scalar-valued, got " + shape_str(out.shape()));
    out.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& leaf : leaves) {
        if (leaf.has_grad()) {
            auto g = leaf.grad();
            analytic.emplace_back(g.begin(), g.end());
        } else {
            analytic.emplace_back(leaf.size(), 0.0);  // unreachable from the output
        }
    }

    GradCheckReport report;
    NoGradGuard no_grad;
    const double h = options.step;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto values = leaves[l].mutable_data();
        const std::size_t n = values.size();
        const std::size_t probes = options.max_coords_per_leaf == 0 ? n : std::min(n, options.max_coords_per_leaf);
        for (std::size_t p = 0; p < probes; ++p) {
            const std::size_t i = probes == n ? p : (p * n) / probes;
            const double saved = values[i];
            values[i] = saved + h;
            const double plus = f().item();
            values[i] = saved - h;
            const double minus = f().item();
            values[i] = saved;

            const double numeric = (plus - minus) / (2 * h);
            const double a = analytic[l][i];
            const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            ++report.coords_checked;
            if (rel > report.max_rel_error || report.coords_checked == 1) {
                report.max_rel_error = rel;
                report.worst_leaf = l;
                report.worst_coord = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

}  // namespace cred
