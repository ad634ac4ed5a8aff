#pragma once

#include <cstdint>
#include <string>

namespace qp {

// Round-trip decimal formatting for CSV cells ('%.17g', '.' separator).
std::string format_double(double v);

// FNV-1a 64-bit over raw bytes; artifact checksums for the run manifest.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace qp
