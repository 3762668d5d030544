#pragma once

#include <cstdint>

namespace cred {

// Counts multiply-accumulates performed by forward ops in the current thread
// while alive. Counters nest: every active counter sees every MAC.
// Only matmul, axis_linear and bilinear_resize report; elementwise work,
// softmax and normalization are not counted.
class MacCounter {
  public:
    MacCounter();
    ~MacCounter();
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;

    std::uint64_t count() const { return count_; }

    // Called by ops.
    static void record(std::uint64_t macs);

  private:
    std::uint64_t count_ = 0;
    MacCounter* outer_ = nullptr;
};

}  // namespace cred
