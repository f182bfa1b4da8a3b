#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

namespace hybridstc {

inline constexpr std::string_view kVersion = "0.1.0";

/// Shortest-roundtrip-safe decimal with 17 significant digits.
std::string format_double(double v);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view data);

/// "# hybridstc <version> config_hash=<h> seed=<s>" provenance line.
void write_provenance(std::ostream& os, std::string_view config_hash, std::uint64_t seed);

}  // namespace hybridstc
