#pragma once

#include "cred/tensor.hpp"

#include <filesystem>
#include <iosfwd>

// CRT1 golden-tensor files: ASCII magic "CRT1", u32 rank, rank x u32 extents,
// then float32 values in row-major order. All integers and floats are
// little-endian.
namespace cred::crt1 {

void write(std::ostream& os, const Tensor& t);
Tensor read(std::istream& is);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace cred::crt1
