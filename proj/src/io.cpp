#include "hybridstc/io.hpp"

#include <cstdio>

namespace hybridstc {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_provenance(std::ostream& os, std::string_view config_hash, std::uint64_t seed) {
  os << "# hybridstc " << kVersion << " config_hash=" << config_hash << " seed=" << seed << '\n';
}

}  // namespace hybridstc
