#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tabmlm/common.hpp"
#include "tabmlm/table.hpp"

using namespace tabmlm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "tabmlm_table_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

}  // namespace

TEST_CASE("load_csv parses headers and cells") {
  auto p = temp_file("basic.csv");
  write_text(p, "a,b,c\n1,2.5,-3e2\n4,0.125,6\n");
  Table t = load_csv(p.string());
  REQUIRE(t.n_columns() == 3);
  REQUIRE(t.n_rows() == 2);
  CHECK(t.column_names == std::vector<std::string>{"a", "b", "c"});
  CHECK(t.rows[0][2] == -300.0);
  CHECK(t.rows[1][1] == 0.125);
}

TEST_CASE("load_csv rejects malformed input") {
  auto p = temp_file("bad.csv");
  write_text(p, "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(load_csv(p.string()), data_error);
  write_text(p, "a,b\n1,zebra\n");
  CHECK_THROWS_AS(load_csv(p.string()), data_error);
  write_text(p, "a,b\n");
  CHECK_NOTHROW(load_csv(p.string()));  // header-only table is loadable
  CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv"), io_error);
}

TEST_CASE("load_csv_with_missing flags empty, nan, and marker cells") {
  auto p = temp_file("missing.csv");
  write_text(p, "x,y\n1.5,\nNaN,2\n?,3\n4,5\n");
  CsvWithMissing c = load_csv_with_missing(p.string(), "?");
  REQUIRE(c.table.n_rows() == 4);
  CHECK(c.missing.count == 3);
  CHECK(c.missing.cells[0][1] == 1);
  CHECK(c.missing.cells[1][0] == 1);
  CHECK(c.missing.cells[2][0] == 1);
  CHECK(c.missing.cells[3][0] == 0);
  CHECK(std::isnan(c.table.rows[0][1]));
  CHECK(std::isnan(c.table.rows[2][0]));
  CHECK(c.table.rows[3][1] == 5.0);
  // Raw text is preserved for cells the imputer leaves alone.
  CHECK(c.raw_cells[0][0] == "1.5");
  CHECK(c.raw_cells[3][1] == "5");
}

TEST_CASE("compute_stats finds per-column extrema on the housing table") {
  Table t = load_csv("data/california_housing.csv");
  REQUIRE(t.n_columns() == 9);
  REQUIRE(t.n_rows() == 20640);
  ColumnStats s = compute_stats(t);
  // Frozen from an independent pass over the file.
  CHECK(s.min[0] == doctest::Approx(0.4999).epsilon(1e-12));
  CHECK(s.max[0] == doctest::Approx(15.0001).epsilon(1e-12));
  CHECK(s.min[1] == 1.0);
  CHECK(s.max[1] == 52.0);
  CHECK(s.min[4] == 3.0);
  CHECK(s.max[4] == 35682.0);
  CHECK(s.min[7] == doctest::Approx(-124.35).epsilon(1e-12));
  CHECK(s.max[7] == doctest::Approx(-114.31).epsilon(1e-12));
  CHECK(s.min[8] == doctest::Approx(0.14999).epsilon(1e-12));
  CHECK(s.max[8] == doctest::Approx(5.00001).epsilon(1e-12));
}

TEST_CASE("compute_stats rejects a column with no observed value") {
  Table t;
  t.column_names = {"a", "b"};
  t.rows = {{1.0, std::nan("")}, {2.0, std::nan("")}};
  CHECK_THROWS_AS(compute_stats(t), data_error);
}

TEST_CASE("quantize_unit rounds half up into [0, 9999]") {
  CHECK(quantize_unit(0.23486) == 2349);
  CHECK(quantize_unit(0.23484) == 2348);
  CHECK(quantize_unit(0.00005) == 1);   // exact half rounds up
  CHECK(quantize_unit(0.0) == 0);
  CHECK(quantize_unit(1.0) == 9999);    // top clamps into four digits
  CHECK(quantize_unit(0.99999) == 9999);
  CHECK(quantize_unit(0.5) == 5000);
  CHECK(quantize(0.23486) == doctest::Approx(0.2349).epsilon(1e-12));
}

TEST_CASE("normalize maps extremes to 0 and 0.9999 and quantizes") {
  Table t;
  t.column_names = {"v"};
  t.rows = {{10.0}, {20.0}, {15.0}, {11.2345}};
  ColumnStats s = compute_stats(t);
  Table n = normalize(t, s);
  CHECK(n.rows[0][0] == 0.0);
  CHECK(n.rows[1][0] == 0.9999);
  CHECK(n.rows[2][0] == 0.5);
  // (11.2345-10)/10 = 0.123450 -> round half up at 4 decimals
  CHECK(n.rows[3][0] == doctest::Approx(0.1235).epsilon(1e-12));
}

TEST_CASE("normalize rejects constant columns and passes NaN through") {
  Table t;
  t.column_names = {"c", "v"};
  t.rows = {{3.0, 1.0}, {3.0, 2.0}};
  ColumnStats s = compute_stats(t);
  CHECK_THROWS_AS(normalize(t, s), data_error);

  Table u;
  u.column_names = {"v"};
  u.rows = {{1.0}, {std::nan("")}, {2.0}};
  ColumnStats su;
  su.min = {1.0};
  su.max = {2.0};
  Table nu = normalize(u, su);
  CHECK(std::isnan(nu.rows[1][0]));
  CHECK(nu.rows[2][0] == 0.9999);
}

TEST_CASE("denormalize inverts the affine map") {
  CHECK(denormalize(0.0, -5.0, 5.0) == -5.0);
  CHECK(denormalize(0.9999, -5.0, 5.0) == doctest::Approx(4.999).epsilon(1e-12));
  CHECK(denormalize(0.25, 100.0, 300.0) == 150.0);
}

TEST_CASE("split_shuffle partitions rows deterministically") {
  Table t;
  t.column_names = {"v"};
  for (int i = 0; i < 10; ++i) t.rows.push_back({static_cast<double>(i)});
  auto [train, val] = split_shuffle(t, 7, 99);
  REQUIRE(train.n_rows() == 7);
  REQUIRE(val.n_rows() == 3);
  std::vector<double> all;
  for (const auto& r : train.rows) all.push_back(r[0]);
  for (const auto& r : val.rows) all.push_back(r[0]);
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);

  auto [train2, val2] = split_shuffle(t, 7, 99);
  CHECK(train2.rows == train.rows);
  auto [train3, val3] = split_shuffle(t, 7, 100);
  CHECK(train3.rows != train.rows);  // different seed, different order

  CHECK_THROWS_AS(split_shuffle(t, 11, 1), data_error);
  auto [all_train, none] = split_shuffle(t, 10, 1);
  CHECK(none.n_rows() == 0);
}

TEST_CASE("write_csv round-trips exact doubles at %.17g") {
  Table t;
  t.column_names = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-17, 12345.6789}};
  auto p = temp_file("roundtrip.csv");
  write_csv(t, p.string());
  Table back = load_csv(p.string());
  REQUIRE(back.n_rows() == 2);
  CHECK(back.column_names == t.column_names);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(back.rows[r][c] == t.rows[r][c]);
}

TEST_CASE("write_csv fixed-decimal mode renders four digits") {
  Table t;
  t.column_names = {"a"};
  t.rows = {{0.1235}, {0.0}};
  auto p = temp_file("fixed.csv");
  write_csv(t, p.string(), 4);
  std::string body = read_file(p.string());
  CHECK(body == "a\n0.1235\n0.0000\n");
}

TEST_CASE("stats csv round-trips extrema exactly") {
  ColumnStats s;
  s.min = {0.4999, -124.35, 1e-300};
  s.max = {15.0001, -114.31, 2e300};
  std::vector<std::string> names{"x", "y", "z"};
  auto p = temp_file("stats.csv");
  write_stats_csv(s, names, p.string());
  auto [back, back_names] = load_stats_csv(p.string());
  CHECK(back_names == names);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.min[i] == s.min[i]);
    CHECK(back.max[i] == s.max[i]);
  }
}
