#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tabmlm/checkpoint.hpp"
#include "tabmlm/common.hpp"
#include "tabmlm/imputer.hpp"
#include "tabmlm/model.hpp"
#include "tabmlm/table.hpp"
#include "tabmlm/tokenizer.hpp"

using namespace tabmlm;
namespace fs = std::filesystem;

namespace {

ModelConfig imputer_config() {
  ModelConfig c;
  c.vocab_size = static_cast<std::int64_t>(kVocabSize);
  c.max_positions = 20;
  c.hidden = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.dropout = 0.0;
  return c;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "tabmlm_imputer_tests";
  fs::create_directories(dir);
  return dir;
}

double nan_v() { return std::nan(""); }

}  // namespace

TEST_CASE("impute_normalized fills every NaN on the 1e-4 grid in order") {
  Parameters p = init_params<float>(imputer_config(), 5);
  Vocabulary v = Vocabulary::build();
  Imputer imp(p, v);

  std::vector<std::vector<double>> rows{
      {0.25, 0.5},
      {nan_v(), 0.75},
      {0.1, 0.2},
      {nan_v(), nan_v()},
  };
  std::vector<CellFill> fills = imp.impute_normalized(rows);
  REQUIRE(fills.size() == 3);
  CHECK(fills[0].row == 1);
  CHECK(fills[0].col == 0);
  CHECK(fills[1].row == 3);
  CHECK(fills[1].col == 0);
  CHECK(fills[2].row == 3);
  CHECK(fills[2].col == 1);
  for (const CellFill& f : fills) {
    CHECK(f.token >= kFirstValueId);
    CHECK(f.token <= kLastValueId);
    double grid = (f.token - kFirstValueId) / 1e4;
    CHECK(f.normalized == grid);
    CHECK(std::llround(f.normalized * 1e4) ==
          static_cast<long long>(f.token - kFirstValueId));
  }

  // No missing cells, no fills.
  CHECK(imp.impute_normalized({{0.1, 0.2}}).empty());
}

TEST_CASE("imputation is deterministic and batch-size independent") {
  Parameters p = init_params<float>(imputer_config(), 6);
  Vocabulary v = Vocabulary::build();
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 70; ++r)
    rows.push_back({nan_v(), (r % 100) / 100.0});

  Imputer a(p, v, true, 32);
  Imputer b(p, v, true, 7);
  std::vector<CellFill> fa = a.impute_normalized(rows);
  std::vector<CellFill> fb = b.impute_normalized(rows);
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    CHECK(fa[i].token == fb[i].token);
    CHECK(fa[i].row == fb[i].row);
  }
}

TEST_CASE("unrestricted mode may pick a non-value token; restricted cannot") {
  Parameters p = init_params<float>(imputer_config(), 7);
  // A huge decoder bias makes [MASK] the global argmax everywhere.
  p.out_bias.v[static_cast<std::size_t>(kMaskId)] = 100.0f;
  Vocabulary v = Vocabulary::build();

  std::vector<std::vector<double>> rows{{nan_v(), 0.5}};

  Imputer restricted(p, v, true);
  std::vector<CellFill> fr = restricted.impute_normalized(rows);
  REQUIRE(fr.size() == 1);
  CHECK(fr[0].token >= kFirstValueId);
  CHECK(fr[0].token <= kLastValueId);
  CHECK(!std::isnan(fr[0].normalized));

  Imputer open(p, v, false);
  std::vector<CellFill> fo = open.impute_normalized(rows);
  REQUIRE(fo.size() == 1);
  CHECK(fo[0].token == kMaskId);
  CHECK(std::isnan(fo[0].normalized));

  // When the global winner is a value token the two modes agree.
  p.out_bias.v[static_cast<std::size_t>(kMaskId)] = 0.0f;
  p.out_bias.v[static_cast<std::size_t>(kFirstValueId + 7777)] = 100.0f;
  Imputer r2(p, v, true);
  Imputer o2(p, v, false);
  CHECK(r2.impute_normalized(rows)[0].token == kFirstValueId + 7777);
  CHECK(o2.impute_normalized(rows)[0].token == kFirstValueId + 7777);
  CHECK(o2.impute_normalized(rows)[0].normalized == 0.7777);
}

TEST_CASE("imputer rejects a model narrower than the vocabulary") {
  ModelConfig c = imputer_config();
  c.vocab_size = 200;
  Parameters p = init_params<float>(c, 8);
  Vocabulary v = Vocabulary::build();
  CHECK_THROWS_AS(Imputer(p, v), data_error);
}

TEST_CASE("impute_normalized rejects ragged rows") {
  Parameters p = init_params<float>(imputer_config(), 9);
  Vocabulary v = Vocabulary::build();
  Imputer imp(p, v);
  std::vector<std::vector<double>> rows{{0.1, nan_v()}, {0.3}};
  CHECK_THROWS_AS(imp.impute_normalized(rows), data_error);
}

TEST_CASE("ablate_column samples stride rows against every checkpoint") {
  Vocabulary v = Vocabulary::build();
  ModelConfig c = imputer_config();

  auto make_ckpt = [&](std::uint64_t epoch, std::uint64_t seed) {
    Checkpoint ck;
    ck.params = init_params<float>(c, seed);
    ck.epoch = epoch;
    ck.vocab_hash = v.hash();
    std::string path =
        (temp_dir() / ("abl_" + std::to_string(epoch) + ".bin")).string();
    save_checkpoint(ck, path);
    return path;
  };
  // Deliberately out of order; the report must sort by epoch.
  std::vector<std::string> paths{make_ckpt(30, 2), make_ckpt(10, 3)};

  Table val;
  val.column_names = {"a", "b"};
  val.rows = {{0.1, 0.9}, {0.2, 0.8}, {0.3, 0.7}, {0.4, 0.6}, {0.5, 0.5}};

  AblationReport rep = ablate_column(paths, v, val, 1, 2);
  CHECK(rep.column == 1);
  CHECK(rep.epochs == std::vector<std::uint64_t>{10, 30});
  CHECK(rep.row_ids == std::vector<std::size_t>{0, 2, 4});
  REQUIRE(rep.errors.size() == 2);
  REQUIRE(rep.errors[0].size() == 3);
  for (const auto& row : rep.errors)
    for (double e : row) {
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
    }

  // Baseline: |column mean - truth| at the sampled rows; mean of b is 0.7.
  REQUIRE(rep.baseline.size() == 3);
  CHECK(rep.baseline[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rep.baseline[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.baseline[2] == doctest::Approx(0.2).epsilon(1e-12));

  // Denormalized units scale every error by the column span.
  ColumnStats stats;
  stats.min = {0.0, 10.0};
  stats.max = {1.0, 20.0};
  AblationReport den = ablate_column(paths, v, val, 1, 2, true, &stats);
  CHECK(den.denormalized);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(den.errors[e][i] ==
            doctest::Approx(rep.errors[e][i] * 10.0).epsilon(1e-9));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(den.baseline[i] ==
          doctest::Approx(rep.baseline[i] * 10.0).epsilon(1e-9));
}

TEST_CASE("ablate_column validates inputs") {
  Vocabulary v = Vocabulary::build();
  Table val;
  val.column_names = {"a", "b"};
  val.rows = {{0.1, 0.9}};

  CHECK_THROWS_AS(ablate_column({}, v, val, 1, 1), data_error);
  CHECK_THROWS_AS(ablate_column({"x.bin"}, v, val, 2, 1), data_error);
  CHECK_THROWS_AS(ablate_column({"x.bin"}, v, val, 1, 0), data_error);
  CHECK_THROWS_AS(ablate_column({"x.bin"}, v, val, 1, 1, true, nullptr),
                  data_error);

  Table empty;
  empty.column_names = {"a"};
  CHECK_THROWS_AS(ablate_column({"x.bin"}, v, empty, 0, 1), data_error);

  Table withnan;
  withnan.column_names = {"a", "b"};
  withnan.rows = {{0.1, nan_v()}};
  CHECK_THROWS_AS(ablate_column({"x.bin"}, v, withnan, 1, 1), data_error);
}

TEST_CASE("export_heatmap writes matrix, image, and index") {
  AblationReport rep;
  rep.column = 3;
  rep.epochs = {10, 20};
  rep.row_ids = {0, 25, 50};
  rep.errors = {{0.5, 0.125, 0.0078125}, {0.25, 1.0, 0.0625}};
  rep.baseline = {0.3, 0.3, 0.3};

  fs::path d = temp_dir();
  std::string csv = (d / "hm.csv").string();
  std::string pgm = (d / "hm.pgm").string();
  std::string idx = (d / "hm_index.csv").string();
  export_heatmap(rep, csv, pgm, idx);

  // Matrix round-trips through %.17g.
  Table back = load_csv(csv);
  REQUIRE(back.n_rows() == 2);
  REQUIRE(back.n_columns() == 3);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(back.rows[e][i] == rep.errors[e][i]);

  // PGM: P5 header, 3x2, max value 255; max error pixel is 255.
  std::string img = read_file(pgm);
  CHECK(img.rfind("P5\n3 2\n255\n", 0) == 0);
  std::string pixels = img.substr(11);
  REQUIRE(pixels.size() == 6);
  CHECK(static_cast<unsigned char>(pixels[4]) == 255);  // err 1.0 at (1,1)
  CHECK(static_cast<unsigned char>(pixels[0]) == 128);  // 0.5 -> round(127.5)
  CHECK(static_cast<unsigned char>(pixels[2]) == 2);    // 0.0078125 -> 2

  std::string index = read_file(idx);
  CHECK(index.find("kind,id\n") == 0);
  CHECK(index.find("column,3\n") != std::string::npos);
  CHECK(index.find("epoch,10\n") != std::string::npos);
  CHECK(index.find("epoch,20\n") != std::string::npos);
  CHECK(index.find("row,25\n") != std::string::npos);

  // All-zero errors render an all-black image.
  AblationReport zero = rep;
  zero.errors = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  export_heatmap(zero, csv, pgm, idx);
  std::string black = read_file(pgm);
  for (std::size_t i = 11; i < black.size(); ++i) CHECK(black[i] == '\0');

  // A single nonzero error is the lone bright pixel.
  AblationReport one = rep;
  one.errors = {{0.0, 0.0, 0.0}, {0.0, 0.7, 0.0}};
  export_heatmap(one, csv, pgm, idx);
  std::string lone = read_file(pgm);
  for (std::size_t i = 11; i < lone.size(); ++i)
    CHECK(static_cast<unsigned char>(lone[i]) == (i == 15 ? 255 : 0));

  AblationReport bad;
  CHECK_THROWS_AS(export_heatmap(bad, csv, pgm, idx), data_error);
}
