#include "cred/hungarian.hpp"

#include "cred/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cred {

// Shortest augmenting path formulation with potentials, O(n^2 m). Ground
// truths play the role of rows of the transposed problem so that n <= m.
std::vector<std::size_t> hungarian_match(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
    if (cost.size() != rows * cols) throw ShapeError("hungarian_match: cost size does not match dimensions");
    if (cols > rows) {
        throw ValueError("hungarian_match: " + std::to_string(cols) + " ground truths exceed " + std::to_string(rows) +
                         " queries");
    }
    for (double c : cost) {
        if (!std::isfinite(c)) throw NonFiniteError("hungarian_match: non-finite cost");
    }
    const std::size_t n = cols, m = rows;
    if (n == 0) return {};
    auto at = [&](std::size_t gt, std::size_t q) { return cost[q * cols + gt]; };

    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= m; ++j) {
        if (owner[j] != 0) assignment[owner[j] - 1] = j - 1;
    }
    return assignment;
}

double assignment_cost(const std::vector<double>& cost, std::size_t cols, const std::vector<std::size_t>& assignment) {
    double total = 0.0;
    for (std::size_t gt = 0; gt < assignment.size(); ++gt) total += cost[assignment[gt] * cols + gt];
    return total;
}

}  // namespace cred
