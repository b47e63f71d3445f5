#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tabmlm/checkpoint.hpp"
#include "tabmlm/model.hpp"
#include "tabmlm/table.hpp"
#include "tabmlm/tokenizer.hpp"
#include "tabmlm/train_config.hpp"

namespace tabmlm {

// Sequence length of an n-column row including CLS/SEP.
inline std::size_t row_seq_len(std::size_t n_columns) {
  return 7 * n_columns + 1;
}

// Serialize and encode one normalized row (no masks) into a padded triple.
TokenTriple encode_row(const std::vector<double>& row, const Vocabulary& vocab,
                       std::size_t seq_len);

// Masks k = max(1, round(rate * candidates)) positions chosen without
// replacement; each masked position's label gets the original id and the
// input becomes [MASK]. Errors when the policy yields no candidates.
void apply_masking(TokenTriple& triple, double rate, MaskPolicy policy,
                   Xoshiro256ss& rng);

struct TrainResult {
  // (completed-epoch number, mean masked cross-entropy over the epoch)
  std::vector<std::pair<std::uint64_t, double>> loss_curve;
  std::vector<std::string> checkpoint_paths;  // in write order
};

// Masked-LM training with Adam over the serialized rows of a normalized
// table. Random streams are derived from (seed, absolute epoch index), so
// resuming from a checkpoint at start_epoch reproduces an uninterrupted run
// bit for bit. params and adam are updated in place.
TrainResult train_model(
    Parameters& params, AdamState& adam, std::uint64_t start_epoch,
    const Table& train_norm, const Vocabulary& vocab, const TrainConfig& cfg,
    const std::function<void(std::uint64_t, double)>& on_epoch = {});

}  // namespace tabmlm
