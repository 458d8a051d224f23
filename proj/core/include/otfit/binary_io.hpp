#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string_view>

namespace otfit::io {

// Little-endian primitives. Readers throw FormatError{Truncated} on EOF.

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_bytes(std::ostream& os, std::string_view bytes);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_bytes(std::istream& is, char* out, std::size_t n);

/// Big-endian 32-bit, for IDX headers.
void write_u32_be(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32_be(std::istream& is);

}  // namespace otfit::io
