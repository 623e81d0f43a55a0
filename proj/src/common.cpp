#include "pfkit/common.hpp"

#include <fstream>
#include <sstream>

namespace pfkit {

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path, "cannot open file for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path, "cannot open file for writing");
  out << content;
  if (!out) throw ValidationError(path, "write failed");
}

std::string hash_file(const std::string& path) {
  return hex64(fnv1a(read_text_file(path)));
}

}  // namespace pfkit
