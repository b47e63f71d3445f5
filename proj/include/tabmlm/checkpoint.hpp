#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tabmlm/model.hpp"
#include "tabmlm/train_config.hpp"

namespace tabmlm {

struct AdamState {
  Parameters m, v;
  std::uint64_t t = 0;  // completed optimizer steps
};

// On-disk layout (little-endian): magic "TMLM", format version, vocabulary
// hash, model config, completed-epoch count, train meta, then every tensor
// by name with its shape, and a trailing FNV-1a checksum over everything
// before it.
struct Checkpoint {
  Parameters params;
  std::uint64_t epoch = 0;  // epochs completed when this was written
  std::uint64_t vocab_hash = 0;
  TrainMeta meta;
  std::optional<AdamState> adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Verifies the checksum before parsing and refuses a file whose stored
// vocabulary hash differs from expected_vocab_hash.
Checkpoint load_checkpoint(const std::string& path,
                           std::uint64_t expected_vocab_hash);

}  // namespace tabmlm
