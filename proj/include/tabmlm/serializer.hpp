#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tabmlm {

// Character span of one column's value fragment inside SerializedRow::text:
// the four digits after "0.", or the "[MASK]" surface for a masked column.
struct ValueSlot {
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Text form of one normalized row. Grammar: docs/serialization_grammar.md.
// Example: "column 0: 0.1230, column 1: 0.[MASK]"
struct SerializedRow {
  std::string text;
  std::vector<ValueSlot> value_slots;       // one per column, left to right
  std::vector<std::size_t> masked_columns;  // ascending; j-th mask = j-th entry
};

// Column index tokens exist for 0..94 only.
inline constexpr std::size_t kMaxColumns = 95;

// Tokens per serialized row, excluding [CLS]/[SEP]: 6 per field + commas.
constexpr std::size_t serialized_token_count(std::size_t n_columns) {
  return 7 * n_columns - 1;
}

// `values` are normalized cells; columns listed in `masked_columns` render as
// "0.[MASK]" and may be NaN. A NaN in any unmasked column is an error.
SerializedRow serialize_row(const std::vector<double>& values,
                            const std::vector<std::size_t>& masked_columns = {});

// Inverse of serialize_row for filled text; "[MASK]" fragments parse as NaN.
std::vector<double> parse_row(const std::string& text,
                              std::size_t expect_columns);

}  // namespace tabmlm
