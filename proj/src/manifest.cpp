#include "tabmlm/manifest.hpp"

#include <charconv>

#include "tabmlm/common.hpp"

namespace tabmlm {

void Manifest::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = std::move(value);
      return;
    }
  entries_.emplace_back(key, std::move(value));
}

void Manifest::set(const std::string& key, const char* value) {
  set(key, std::string(value));
}

void Manifest::set(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void Manifest::set(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void Manifest::set(const std::string& key, double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  set(key, std::string(buf, ptr));
}

void Manifest::set(const std::string& key, bool value) {
  set(key, std::string(value ? "true" : "false"));
}

std::string Manifest::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void Manifest::write(const std::string& path) const {
  write_file(path, serialize());
}

}  // namespace tabmlm
