#include "promptforge/binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>

#include "promptforge/errors.hpp"

namespace promptforge {

namespace {

constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes;
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(bytes.data(), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
    std::array<unsigned char, 8> bytes;
    in.read(reinterpret_cast<char*>(bytes.data()), 8);
    if (in.gcount() != 8) throw FormatError("unexpected end of binary data");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_tensor(std::ostream& out, const Tensor& t) {
    write_u64(out, t.rank());
    for (auto dim : t.shape()) write_u64(out, dim);
    for (double v : t.values()) write_f64(out, v);
}

Tensor read_tensor(std::istream& in, bool requires_grad) {
    const auto rank = read_u64(in);
    if (rank == 0 || rank > kMaxRank) throw FormatError("bad tensor rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& dim : shape) {
        dim = read_u64(in);
        if (dim == 0 || dim > kMaxElements) throw FormatError("bad tensor dimension");
        count *= dim;
        if (count > kMaxElements) throw FormatError("tensor too large");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = read_f64(in);
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t hash) {
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            hash ^= (bits >> (8 * i)) & 0xffU;
            hash *= 0x100000001b3ULL;
        }
    }
    return hash;
}

}  // namespace promptforge
