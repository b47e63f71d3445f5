#pragma once

#include <cstdint>
#include <string>

namespace tabmlm {

enum class MaskPolicy : std::uint8_t {
  value_tokens_only = 0,  // only four-digit value tokens are maskable
  any_token = 1,          // any real token except CLS/SEP
};

std::string mask_policy_name(MaskPolicy p);
MaskPolicy mask_policy_from_name(const std::string& name);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  double mask_rate = 0.15;
  std::uint64_t seed = 0;
  MaskPolicy policy = MaskPolicy::value_tokens_only;
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::string checkpoint_dir;        // empty disables checkpoint files
};

// The slice of TrainConfig a checkpoint carries so a resumed run draws the
// same random streams.
struct TrainMeta {
  double lr = 1e-4;
  std::uint64_t batch_size = 64;
  double mask_rate = 0.15;
  MaskPolicy policy = MaskPolicy::value_tokens_only;
  std::uint64_t seed = 0;
};

}  // namespace tabmlm
