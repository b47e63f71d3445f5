#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tabmlm {

// Numeric table: header row + dense double cells. Missing cells (imputation
// inputs only) are stored as quiet NaN and tracked in MissingMask.
struct Table {
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> rows;

  std::size_t n_columns() const { return column_names.size(); }
  std::size_t n_rows() const { return rows.size(); }
};

struct MissingMask {
  std::vector<std::vector<std::uint8_t>> cells;  // 1 = missing
  std::size_t count = 0;
};

struct CsvWithMissing {
  Table table;
  MissingMask missing;
  // Cell text exactly as read (trimmed); lets imputation output keep the
  // source formatting of cells it did not touch.
  std::vector<std::vector<std::string>> raw_cells;
};

struct ColumnStats {
  std::vector<double> min;
  std::vector<double> max;
};

// Strict loader: every cell must parse as a finite double.
Table load_csv(const std::string& path);

// Imputation loader: cells that are empty, "nan" (any case), or equal to
// `marker` become NaN and are flagged missing.
CsvWithMissing load_csv_with_missing(const std::string& path,
                                     const std::string& marker);

// Per-column min/max over every non-missing cell. Computed on the full table
// before any split so train and validation share one value map.
ColumnStats compute_stats(const Table& table);

// Round half up to 4 decimals as an integer in [0, 9999]; 1.0 clamps to
// 0.9999 so every normalized value serializes as "0." + four digits.
int quantize_unit(double x_norm);
inline double quantize(double x_norm) { return quantize_unit(x_norm) / 1e4; }

// (x - min) / (max - min), quantized. Rejects constant columns. NaN passes.
Table normalize(const Table& table, const ColumnStats& stats);

inline double denormalize(double q, double col_min, double col_max) {
  return col_min + q * (col_max - col_min);
}

// Seeded Fisher-Yates shuffle of row order, then split: first n_train rows
// to .first, rest to .second.
std::pair<Table, Table> split_shuffle(const Table& table, std::size_t n_train,
                                      std::uint64_t seed);

// decimals >= 0 writes fixed precision; negative writes %.17g round-trip.
void write_csv(const Table& table, const std::string& path, int decimals = -1);

void write_stats_csv(const ColumnStats& stats,
                     const std::vector<std::string>& column_names,
                     const std::string& path);
std::pair<ColumnStats, std::vector<std::string>> load_stats_csv(
    const std::string& path);

}  // namespace tabmlm
