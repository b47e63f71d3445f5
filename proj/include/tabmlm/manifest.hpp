#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tabmlm {

// Insertion-ordered key=value record of a run's resolved inputs; written
// next to every subcommand's outputs.
class Manifest {
 public:
  void set(const std::string& key, std::string value);
  void set(const std::string& key, const char* value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, double value);
  void set(const std::string& key, bool value);

  std::string serialize() const;  // "key=value\n" lines
  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace tabmlm
