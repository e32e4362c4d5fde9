#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "promptforge/tensor.hpp"

namespace promptforge {

// Little-endian primitives, independent of host byte order.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

/// rank (u64), dims (u64 each), then the values as f64.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, bool requires_grad = false);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
/// FNV-1a over the little-endian bytes of each value.
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace promptforge
