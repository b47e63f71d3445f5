#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabmlm/model.hpp"
#include "tabmlm/table.hpp"
#include "tabmlm/tokenizer.hpp"

namespace tabmlm {

// One filled cell. `normalized` is on the 1e-4 grid; it is NaN only in
// unrestricted mode when the winning token is not a four-digit id.
struct CellFill {
  std::size_t row = 0, col = 0;
  TokenId token = 0;
  double normalized = 0.0;
};

// Masked prediction over normalized rows. All missing cells of a row are
// masked together and decoded from one forward pass.
class Imputer {
 public:
  // restrict_to_values limits argmax to the four-digit token block, which
  // guarantees a well-formed number; batch_rows trades memory for speed.
  Imputer(const Parameters& params, const Vocabulary& vocab,
          bool restrict_to_values = true, std::size_t batch_rows = 32);

  // NaN cells are filled; rows without NaN contribute nothing. Fills come
  // back in (row, col) order.
  std::vector<CellFill> impute_normalized(
      const std::vector<std::vector<double>>& rows);

 private:
  const Parameters& params_;
  const Vocabulary& vocab_;
  bool restrict_;
  std::size_t batch_rows_;
  BatchRunner<float> runner_;
};

struct AblationReport {
  std::size_t column = 0;
  std::vector<std::uint64_t> epochs;   // ascending, one per checkpoint
  std::vector<std::size_t> row_ids;    // sampled validation rows
  std::vector<std::vector<double>> errors;  // [epoch][sampled row], >= 0
  std::vector<double> baseline;  // column-mean predictor, same rows and units
  bool denormalized = false;
};

// Hides `col` in every stride-th validation row, imputes it with each
// checkpoint, and records absolute errors (normalized units unless
// denormalized, which needs stats). Never mutates the table.
AblationReport ablate_column(const std::vector<std::string>& checkpoint_paths,
                             const Vocabulary& vocab, const Table& val_norm,
                             std::size_t col, std::size_t stride = 25,
                             bool denormalized = false,
                             const ColumnStats* stats = nullptr);

// CSV matrix (rows = epochs, cols = sampled rows, 17 significant digits),
// 8-bit binary PGM with pixel = round(255 * err / max_err) so zero error is
// black, and an index sidecar listing the column, epoch ids, and row ids.
void export_heatmap(const AblationReport& report, const std::string& csv_path,
                    const std::string& image_path,
                    const std::string& index_path);

}  // namespace tabmlm
