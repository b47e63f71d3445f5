#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tabmlm {

inline constexpr std::string_view kVersion = "1.0.0";

// Error taxonomy maps 1:1 onto CLI exit codes (see tools/tabmlm.cpp).
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit, used for vocabulary fingerprints and stream derivation.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace tabmlm
