#pragma once

#include <cstddef>
#include <vector>

namespace cred {

// Minimum-cost assignment of every column (ground truth) to a distinct row
// (query) of a row-major rows x cols cost matrix, cols <= rows.
// Returns query index per ground truth. Ties resolve toward the lowest
// query index.
std::vector<std::size_t> hungarian_match(const std::vector<double>& cost, std::size_t rows, std::size_t cols);

double assignment_cost(const std::vector<double>& cost, std::size_t cols, const std::vector<std::size_t>& assignment);

}  // namespace cred
