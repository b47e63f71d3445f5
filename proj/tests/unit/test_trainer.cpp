#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tabmlm/common.hpp"
#include "tabmlm/rng.hpp"
#include "tabmlm/table.hpp"
#include "tabmlm/tokenizer.hpp"
#include "tabmlm/trainer.hpp"

using namespace tabmlm;

namespace {

ModelConfig test_config() {
  ModelConfig c;
  c.vocab_size = static_cast<std::int64_t>(kVocabSize);
  c.max_positions = 18;
  c.hidden = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.dropout = 0.0;
  return c;
}

Table toy_table() {
  Table t;
  t.column_names = {"a", "b"};
  t.rows = {{0.1, 0.9}, {0.2, 0.8}, {0.3, 0.7}, {0.4, 0.6}};
  return t;
}

TrainConfig toy_config(std::uint64_t epochs) {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 2;
  cfg.epochs = epochs;
  cfg.mask_rate = 0.15;
  cfg.seed = 40;
  return cfg;
}

bool params_equal(const Parameters& a, const Parameters& b) {
  bool eq = true;
  a.for_each([&](const std::string& name, const Tensor<float>& t) {
    const Tensor<float>* other = nullptr;
    b.for_each([&](const std::string& n2, const Tensor<float>& t2) {
      if (n2 == name) other = &t2;
    });
    if (other == nullptr || t.v != other->v) eq = false;
  });
  return eq;
}

}  // namespace

TEST_CASE("encode_row produces the expected token layout") {
  Vocabulary v = Vocabulary::build();
  TokenTriple t = encode_row({0.123, 0.9999}, v, row_seq_len(2) + 3);
  REQUIRE(t.input_ids.size() == row_seq_len(2) + 3);
  CHECK(row_seq_len(2) == 15);
  CHECK(t.input_ids[0] == kClsId);
  // column 0 : 0 . 1230 , column 1 : 0 . 9999 [SEP]
  CHECK(t.input_ids[1] == 4);
  CHECK(t.input_ids[2] == 8);
  CHECK(t.input_ids[3] == 5);
  CHECK(t.input_ids[4] == 8);
  CHECK(t.input_ids[5] == 7);
  CHECK(t.input_ids[6] == 104 + 1230);
  CHECK(t.input_ids[7] == 6);
  CHECK(t.input_ids[13] == 10103);
  CHECK(t.input_ids[14] == kSepId);
  CHECK(t.input_ids[15] == kPadId);
  CHECK(t.real_len() == 15);
}

TEST_CASE("apply_masking masks k = max(1, round(rate * candidates))") {
  Vocabulary v = Vocabulary::build();

  auto masked_positions = [](const TokenTriple& t) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < t.input_ids.size(); ++i)
      if (t.input_ids[i] == kMaskId) pos.push_back(i);
    return pos;
  };

  // 2 value candidates, rate 0.15 -> k = 1.
  TokenTriple t = encode_row({0.1, 0.2}, v, row_seq_len(2));
  TokenTriple orig = t;
  Xoshiro256ss g(1);
  apply_masking(t, 0.15, MaskPolicy::value_tokens_only, g);
  auto pos = masked_positions(t);
  REQUIRE(pos.size() == 1);
  // Only the two value positions are candidates.
  CHECK((pos[0] == 6 || pos[0] == 13));
  CHECK(t.labels[pos[0]] == orig.input_ids[pos[0]]);
  for (std::size_t i = 0; i < t.input_ids.size(); ++i) {
    if (i == pos[0]) continue;
    CHECK(t.input_ids[i] == orig.input_ids[i]);
    CHECK(t.labels[i] == kIgnoreLabel);
  }

  // 9 value candidates: rate 0.15 -> 1, rate 0.5 -> round(4.5) = 5.
  std::vector<double> nine(9, 0.5);
  TokenTriple t9 = encode_row(nine, v, row_seq_len(9));
  Xoshiro256ss g9(2);
  apply_masking(t9, 0.15, MaskPolicy::value_tokens_only, g9);
  CHECK(masked_positions(t9).size() == 1);

  TokenTriple t9b = encode_row(nine, v, row_seq_len(9));
  apply_masking(t9b, 0.5, MaskPolicy::value_tokens_only, g9);
  CHECK(masked_positions(t9b).size() == 5);

  // rate 1.0 masks every candidate.
  TokenTriple tall = encode_row(nine, v, row_seq_len(9));
  apply_masking(tall, 1.0, MaskPolicy::value_tokens_only, g9);
  CHECK(masked_positions(tall).size() == 9);
}

TEST_CASE("any-token policy can mask structural tokens") {
  Vocabulary v = Vocabulary::build();
  // Large rate so the sample must include non-value positions.
  TokenTriple t = encode_row({0.1, 0.2}, v, row_seq_len(2));
  Xoshiro256ss g(3);
  apply_masking(t, 1.0, MaskPolicy::any_token, g);
  std::size_t n_masked = 0;
  for (std::size_t i = 0; i < t.input_ids.size(); ++i)
    if (t.input_ids[i] == kMaskId) ++n_masked;
  // Candidates are every real token except CLS and SEP.
  CHECK(n_masked == 13);
  CHECK(t.input_ids[0] == kClsId);
  CHECK(t.input_ids[14] == kSepId);
}

TEST_CASE("apply_masking validates rate and candidate supply") {
  Vocabulary v = Vocabulary::build();
  TokenTriple t = encode_row({0.1, 0.2}, v, row_seq_len(2));
  Xoshiro256ss g(4);
  CHECK_THROWS_AS(apply_masking(t, 0.0, MaskPolicy::value_tokens_only, g),
                  data_error);
  CHECK_THROWS_AS(apply_masking(t, 1.5, MaskPolicy::value_tokens_only, g),
                  data_error);

  // A triple whose values are already masks has no value candidates.
  TokenTriple bare;
  bare.input_ids = {kClsId, 4, 8, 5, 8, 7, kMaskId, kSepId};
  bare.attention_mask.assign(8, 1);
  bare.labels.assign(8, kIgnoreLabel);
  CHECK_THROWS_AS(apply_masking(bare, 0.15, MaskPolicy::value_tokens_only, g),
                  data_error);
}

TEST_CASE("mask policy names round-trip and reject junk") {
  CHECK(mask_policy_name(MaskPolicy::value_tokens_only) == "value-tokens-only");
  CHECK(mask_policy_name(MaskPolicy::any_token) == "any-token");
  CHECK(mask_policy_from_name("value-tokens-only") ==
        MaskPolicy::value_tokens_only);
  CHECK(mask_policy_from_name("any-token") == MaskPolicy::any_token);
  CHECK_THROWS_AS(mask_policy_from_name("sometimes"), usage_error);
}

TEST_CASE("training is deterministic and lr=0 is a no-op on weights") {
  Vocabulary v = Vocabulary::build();
  ModelConfig mc = test_config();
  Table table = toy_table();

  Parameters p1 = init_params<float>(mc, 7);
  Parameters p2 = init_params<float>(mc, 7);
  AdamState a1{zeros_like(p1), zeros_like(p1), 0};
  AdamState a2{zeros_like(p2), zeros_like(p2), 0};

  TrainConfig cfg = toy_config(3);
  TrainResult r1 = train_model(p1, a1, 0, table, v, cfg);
  TrainResult r2 = train_model(p2, a2, 0, table, v, cfg);
  CHECK(params_equal(p1, p2));
  REQUIRE(r1.loss_curve.size() == 3);
  CHECK(r1.loss_curve[0].first == 1);
  CHECK(r1.loss_curve[2].first == 3);
  for (std::size_t e = 0; e < 3; ++e)
    CHECK(r1.loss_curve[e].second == r2.loss_curve[e].second);
  CHECK(a1.t == a2.t);
  CHECK(a1.t == 6);  // 3 epochs x ceil(4/2) batches

  Parameters frozen = init_params<float>(mc, 7);
  Parameters before = frozen;
  AdamState af{zeros_like(frozen), zeros_like(frozen), 0};
  TrainConfig zero = toy_config(2);
  zero.lr = 0.0;
  train_model(frozen, af, 0, table, v, zero);
  CHECK(params_equal(frozen, before));
  CHECK(af.t == 4);  // optimizer state still advances
}

TEST_CASE("a split run resumes bit-for-bit") {
  Vocabulary v = Vocabulary::build();
  ModelConfig mc = test_config();
  Table table = toy_table();

  Parameters full = init_params<float>(mc, 9);
  AdamState af{zeros_like(full), zeros_like(full), 0};
  train_model(full, af, 0, table, v, toy_config(4));

  Parameters split = init_params<float>(mc, 9);
  AdamState as{zeros_like(split), zeros_like(split), 0};
  train_model(split, as, 0, table, v, toy_config(2));
  TrainResult tail = train_model(split, as, 2, table, v, toy_config(4));

  CHECK(params_equal(full, split));
  CHECK(af.t == as.t);
  REQUIRE(tail.loss_curve.size() == 2);
  CHECK(tail.loss_curve[0].first == 3);
}

TEST_CASE("checkpoints appear at the requested interval") {
  namespace fs = std::filesystem;
  Vocabulary v = Vocabulary::build();
  ModelConfig mc = test_config();
  Table table = toy_table();

  fs::path dir = fs::temp_directory_path() / "tabmlm_trainer_tests" / "ckpt";
  fs::remove_all(dir.parent_path());
  fs::create_directories(dir);

  Parameters p = init_params<float>(mc, 10);
  AdamState a{zeros_like(p), zeros_like(p), 0};
  TrainConfig cfg = toy_config(5);
  cfg.checkpoint_every = 2;
  cfg.checkpoint_dir = dir.string();
  TrainResult r = train_model(p, a, 0, table, v, cfg);

  // Epochs 2 and 4 from the interval plus the final epoch 5.
  REQUIRE(r.checkpoint_paths.size() == 3);
  CHECK(fs::path(r.checkpoint_paths[0]).filename() == "epoch_000002.bin");
  CHECK(fs::path(r.checkpoint_paths[1]).filename() == "epoch_000004.bin");
  CHECK(fs::path(r.checkpoint_paths[2]).filename() == "epoch_000005.bin");
  for (const auto& cp : r.checkpoint_paths) CHECK(fs::exists(cp));

  Checkpoint back = load_checkpoint(r.checkpoint_paths[2], v.hash());
  CHECK(back.epoch == 5);
  CHECK(back.meta.seed == cfg.seed);
  CHECK(params_equal(back.params, p));
}

TEST_CASE("train_model validates its inputs") {
  Vocabulary v = Vocabulary::build();
  ModelConfig mc = test_config();
  Table table = toy_table();
  Parameters p = init_params<float>(mc, 11);
  AdamState a{zeros_like(p), zeros_like(p), 0};

  TrainConfig cfg = toy_config(0);
  CHECK_THROWS_AS(train_model(p, a, 0, table, v, cfg), usage_error);

  cfg = toy_config(2);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_model(p, a, 0, table, v, cfg), usage_error);

  cfg = toy_config(2);
  CHECK_THROWS_AS(train_model(p, a, 3, table, v, cfg), usage_error);

  Table empty;
  empty.column_names = {"a"};
  cfg = toy_config(1);
  CHECK_THROWS_AS(train_model(p, a, 0, empty, v, cfg), data_error);

  // Row too wide for max_positions: 7n+1 must fit max_seq_len.
  Table wide;
  wide.column_names = {"a", "b", "c"};
  wide.rows = {{0.1, 0.2, 0.3}};
  CHECK_THROWS_AS(train_model(p, a, 0, wide, v, cfg), data_error);
}

TEST_CASE("loss declines on a memorizable toy table") {
  Vocabulary v = Vocabulary::build();
  ModelConfig mc = test_config();
  Table table = toy_table();
  Parameters p = init_params<float>(mc, 12);
  AdamState a{zeros_like(p), zeros_like(p), 0};
  TrainConfig cfg = toy_config(30);
  cfg.lr = 3e-3;
  cfg.batch_size = 1;
  TrainResult r = train_model(p, a, 0, table, v, cfg);
  double first = r.loss_curve.front().second;
  double last = r.loss_curve.back().second;
  CHECK(first > 5.0);  // starts near ln(10104) ~ 9.2
  CHECK(last < first / 2);
}
