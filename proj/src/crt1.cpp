#include "cred/crt1.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cred::crt1 {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'R', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("crt1: truncated stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write(std::ostream& os, const Tensor& t) {
    os.write(kMagic.data(), kMagic.size());
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!os) throw Error("crt1: write failed");
}

Tensor read(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw Error("crt1: bad magic");
    const std::uint32_t rank = get_u32(is);
    if (rank == 0 || rank > 16) throw Error("crt1: unsupported rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = get_u32(is);
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
    return Tensor::from(std::move(shape), std::move(data));
}

void save(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("crt1: cannot open " + path.string() + " for writing");
    write(os, t);
}

Tensor load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("crt1: cannot open " + path.string());
    return read(is);
}

}  // namespace cred::crt1
