#include "tabmlm/table.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "tabmlm/common.hpp"
#include "tabmlm/rng.hpp"

namespace tabmlm {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (;;) {
    std::size_t comma = line.find(',', begin);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(begin)));
      return out;
    }
    out.push_back(trim(std::string_view(line).substr(begin, comma - begin)));
    begin = comma + 1;
  }
}

bool is_nan_literal(const std::string& cell) {
  return cell.size() == 3 && (cell[0] == 'n' || cell[0] == 'N') &&
         (cell[1] == 'a' || cell[1] == 'A') && (cell[2] == 'n' || cell[2] == 'N');
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw data_error("row " + std::to_string(row + 1) + ", column " +
                     std::to_string(col) + ": cannot parse \"" + cell +
                     "\" as a finite number");
  return v;
}

// Shared CSV walk; `missing` null means strict mode.
Table load_impl(const std::string& path, const std::string* marker,
                MissingMask* missing,
                std::vector<std::vector<std::string>>* raw = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);

  Table t;
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.column_names = split_line(line);
  if (t.column_names.empty() || t.column_names[0].empty())
    throw data_error(path + ": missing header row");

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.n_columns())
      throw data_error(path + ": row " + std::to_string(row + 1) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(t.n_columns()));
    std::vector<double> vals(cells.size());
    std::vector<std::uint8_t> miss(cells.size(), 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      bool is_missing =
          missing && (cells[c].empty() || is_nan_literal(cells[c]) ||
                      (marker && !marker->empty() && cells[c] == *marker));
      if (is_missing) {
        vals[c] = std::numeric_limits<double>::quiet_NaN();
        miss[c] = 1;
        ++missing->count;
      } else {
        vals[c] = parse_cell(cells[c], row, c);
      }
    }
    t.rows.push_back(std::move(vals));
    if (missing) missing->cells.push_back(std::move(miss));
    if (raw) raw->push_back(std::move(cells));
    ++row;
  }
  if (t.rows.empty()) throw data_error(path + ": no data rows");
  return t;
}

void format_cell(std::string& out, double v, int decimals) {
  char buf[64];
  int n = decimals >= 0 ? std::snprintf(buf, sizeof buf, "%.*f", decimals, v)
                        : std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

Table load_csv(const std::string& path) {
  return load_impl(path, nullptr, nullptr);
}

CsvWithMissing load_csv_with_missing(const std::string& path,
                                     const std::string& marker) {
  CsvWithMissing out;
  out.table = load_impl(path, &marker, &out.missing, &out.raw_cells);
  return out;
}

ColumnStats compute_stats(const Table& table) {
  const std::size_t n = table.n_columns();
  ColumnStats s;
  s.min.assign(n, std::numeric_limits<double>::infinity());
  s.max.assign(n, -std::numeric_limits<double>::infinity());
  for (const auto& row : table.rows)
    for (std::size_t c = 0; c < n; ++c) {
      if (std::isnan(row[c])) continue;
      s.min[c] = std::min(s.min[c], row[c]);
      s.max[c] = std::max(s.max[c], row[c]);
    }
  for (std::size_t c = 0; c < n; ++c)
    if (!std::isfinite(s.min[c]))
      throw data_error("column " + std::to_string(c) + " has no observed values");
  return s;
}

int quantize_unit(double x_norm) {
  double scaled = std::floor(x_norm * 1e4 + 0.5);
  if (scaled < 0.0) scaled = 0.0;
  if (scaled > 9999.0) scaled = 9999.0;
  return static_cast<int>(scaled);
}

Table normalize(const Table& table, const ColumnStats& stats) {
  const std::size_t n = table.n_columns();
  if (stats.min.size() != n || stats.max.size() != n)
    throw data_error("stats column count does not match table");
  for (std::size_t c = 0; c < n; ++c)
    if (!(stats.max[c] > stats.min[c]))
      throw data_error("column " + std::to_string(c) +
                       " (" + table.column_names[c] +
                       ") is constant; zero-one normalization is undefined");
  Table out;
  out.column_names = table.column_names;
  out.rows.reserve(table.n_rows());
  for (const auto& row : table.rows) {
    std::vector<double> r(n);
    for (std::size_t c = 0; c < n; ++c)
      r[c] = std::isnan(row[c])
                 ? row[c]
                 : quantize((row[c] - stats.min[c]) / (stats.max[c] - stats.min[c]));
    out.rows.push_back(std::move(r));
  }
  return out;
}

std::pair<Table, Table> split_shuffle(const Table& table, std::size_t n_train,
                                      std::uint64_t seed) {
  if (n_train == 0 || n_train > table.n_rows())
    throw data_error("train size " + std::to_string(n_train) +
                     " out of range for " + std::to_string(table.n_rows()) +
                     " rows");
  std::vector<std::size_t> order(table.n_rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto gen = derive_stream(seed, "split");
  shuffle(order, gen);

  std::pair<Table, Table> out;
  out.first.column_names = out.second.column_names = table.column_names;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.first : out.second).rows.push_back(table.rows[order[i]]);
  return out;
}

void write_csv(const Table& table, const std::string& path, int decimals) {
  std::string out;
  for (std::size_t c = 0; c < table.n_columns(); ++c) {
    if (c) out += ',';
    out += table.column_names[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      format_cell(out, row[c], decimals);
    }
    out += '\n';
  }
  write_file(path, out);
}

void write_stats_csv(const ColumnStats& stats,
                     const std::vector<std::string>& column_names,
                     const std::string& path) {
  Table t;
  t.column_names = column_names;
  t.rows = {stats.min, stats.max};
  write_csv(t, path, -1);
}

std::pair<ColumnStats, std::vector<std::string>> load_stats_csv(
    const std::string& path) {
  Table t = load_csv(path);
  if (t.n_rows() != 2)
    throw data_error(path + ": stats file must have exactly a min row and a max row");
  return {ColumnStats{t.rows[0], t.rows[1]}, t.column_names};
}

}  // namespace tabmlm
