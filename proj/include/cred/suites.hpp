#pragma once

#include "cred/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Named gradient-check suites shared by the CLI, the acceptance test and the
// Python module. Each check reduces its output to a scalar with a fixed
// random weighting so that no coordinate has an identically zero gradient.
namespace cred::suites {

struct Result {
    std::string name;
    GradCheckReport report;
};

// Every differentiable op on three random shapes each.
std::vector<Result> op_gradients(std::uint64_t seed, const GradCheckOptions& opts = {});
// OSMA, CRAM, encoder, decoder, heads and the Default-CRED pipeline
// (C = 8, N_q = 3, 64 x 64 image) through the set loss.
std::vector<Result> module_gradients(std::uint64_t seed, const GradCheckOptions& opts = {});

std::vector<Result> all_gradients(std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace cred::suites
