#include "tabmlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tabmlm/common.hpp"
#include "tabmlm/kernels.hpp"
#include "tabmlm/serializer.hpp"

namespace tabmlm {

std::string mask_policy_name(MaskPolicy p) {
  switch (p) {
    case MaskPolicy::value_tokens_only:
      return "value-tokens-only";
    case MaskPolicy::any_token:
      return "any-token";
  }
  throw usage_error("unknown masking policy");
}

MaskPolicy mask_policy_from_name(const std::string& name) {
  if (name == "value-tokens-only") return MaskPolicy::value_tokens_only;
  if (name == "any-token") return MaskPolicy::any_token;
  throw usage_error("unknown masking policy \"" + name +
                    "\" (use value-tokens-only or any-token)");
}

TokenTriple encode_row(const std::vector<double>& row, const Vocabulary& vocab,
                       std::size_t seq_len) {
  const SerializedRow ser = serialize_row(row);
  return make_triple(encode(ser.text, vocab), seq_len);
}

void apply_masking(TokenTriple& triple, double rate, MaskPolicy policy,
                   Xoshiro256ss& rng) {
  if (!(rate > 0.0 && rate <= 1.0))
    throw data_error("mask rate must be in (0, 1]");
  const std::size_t real = triple.real_len();
  std::vector<std::size_t> candidates;
  if (policy == MaskPolicy::value_tokens_only) {
    for (std::size_t i = 0; i < real; ++i) {
      const TokenId id = triple.input_ids[i];
      if (id >= kFirstValueId && id <= kLastValueId) candidates.push_back(i);
    }
  } else {
    // everything between CLS and SEP
    for (std::size_t i = 1; i + 1 < real; ++i) candidates.push_back(i);
  }
  if (candidates.empty())
    throw data_error("no maskable positions under policy " +
                     mask_policy_name(policy));

  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(rate * static_cast<double>(candidates.size()))));
  // partial Fisher-Yates: the first k entries become the sample
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(
                rng.next_below(static_cast<std::uint64_t>(candidates.size() - i)));
    std::swap(candidates[i], candidates[j]);
    const std::size_t pos = candidates[i];
    triple.labels[pos] = triple.input_ids[pos];
    triple.input_ids[pos] = kMaskId;
  }
}

TrainResult train_model(
    Parameters& params, AdamState& adam, std::uint64_t start_epoch,
    const Table& train_norm, const Vocabulary& vocab, const TrainConfig& cfg,
    const std::function<void(std::uint64_t, double)>& on_epoch) {
  if (cfg.epochs == 0) throw usage_error("epoch count must be positive");
  if (cfg.batch_size == 0) throw usage_error("batch size must be positive");
  if (start_epoch > cfg.epochs)
    throw usage_error("start epoch beyond configured epoch count");
  if (train_norm.n_rows() == 0) throw data_error("empty training table");

  const std::size_t seq_len = row_seq_len(train_norm.n_columns());
  if (seq_len > static_cast<std::size_t>(params.config.max_seq_len()))
    throw data_error("serialized rows need " + std::to_string(seq_len) +
                     " tokens, more than the model's " +
                     std::to_string(params.config.max_seq_len()));

  std::vector<TokenTriple> base;
  base.reserve(train_norm.n_rows());
  for (const auto& row : train_norm.rows)
    base.push_back(encode_row(row, vocab, seq_len));

  // Stable parameter/grad/moment views in for_each order for the optimizer.
  Parameters grads = zeros_like(params);
  struct Slot {
    float *w, *g, *m, *v;
    std::size_t n;
  };
  std::vector<Slot> slots;
  {
    std::vector<float*> ws, gs, ms, vs;
    std::vector<std::size_t> ns;
    params.for_each([&](const std::string&, Tensor<float>& t) {
      ws.push_back(t.data());
      ns.push_back(static_cast<std::size_t>(t.size()));
    });
    grads.for_each(
        [&](const std::string&, Tensor<float>& t) { gs.push_back(t.data()); });
    adam.m.for_each(
        [&](const std::string&, Tensor<float>& t) { ms.push_back(t.data()); });
    adam.v.for_each(
        [&](const std::string&, Tensor<float>& t) { vs.push_back(t.data()); });
    if (gs.size() != ws.size() || ms.size() != ws.size() || vs.size() != ws.size())
      throw data_error("optimizer state shape does not match the model");
    for (std::size_t i = 0; i < ws.size(); ++i)
      slots.push_back({ws[i], gs[i], ms[i], vs[i], ns[i]});
  }

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  // Running beta powers; rebuilt multiplicatively so a resumed run sees the
  // exact doubles an uninterrupted run would.
  double beta1_pow = 1.0, beta2_pow = 1.0;
  for (std::uint64_t s = 0; s < adam.t; ++s) {
    beta1_pow *= kBeta1;
    beta2_pow *= kBeta2;
  }

  const double dropout = params.config.dropout;
  BatchRunner<float> runner;
  TrainResult result;

  std::vector<std::size_t> order(base.size());
  for (std::uint64_t e = start_epoch; e < cfg.epochs; ++e) {
    const std::string tag = "/" + std::to_string(e);
    auto order_rng = derive_stream(cfg.seed, "order" + tag);
    auto mask_rng = derive_stream(cfg.seed, "mask" + tag);
    auto drop_rng = derive_stream(cfg.seed, "dropout" + tag);

    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, order_rng);

    double ce_sum = 0.0;
    std::size_t masked_total = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      std::vector<TokenTriple> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(base[order[i]]);
        apply_masking(batch.back(), cfg.mask_rate, cfg.policy, mask_rng);
      }
      std::vector<const TokenTriple*> ptrs;
      ptrs.reserve(batch.size());
      for (const auto& t : batch) ptrs.push_back(&t);

      const StepStats stats =
          runner.loss_and_grad(params, ptrs, grads, dropout,
                               dropout > 0.0 ? &drop_rng : nullptr);
      if (!std::isfinite(stats.loss))
        throw data_error("training diverged: non-finite loss at epoch " +
                         std::to_string(e + 1) + ", batch " +
                         std::to_string(batch_index + 1));
      ce_sum += stats.loss * static_cast<double>(stats.masked);
      masked_total += stats.masked;

      beta1_pow *= kBeta1;
      beta2_pow *= kBeta2;
      ++adam.t;
      const double bias1 = 1.0 / (1.0 - beta1_pow);
      const double bias2 = 1.0 / (1.0 - beta2_pow);
      for (const Slot& s : slots)
        kernels::adam_update(s.n, s.w, s.g, s.m, s.v, cfg.lr, kBeta1, kBeta2,
                             kEps, bias1, bias2);
    }

    const double mean_loss = ce_sum / static_cast<double>(masked_total);
    result.loss_curve.emplace_back(e + 1, mean_loss);
    if (on_epoch) on_epoch(e + 1, mean_loss);

    const bool at_interval =
        cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0;
    const bool is_final = e + 1 == cfg.epochs;
    if (!cfg.checkpoint_dir.empty() && (at_interval || is_final)) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%06llu.bin",
                    static_cast<unsigned long long>(e + 1));
      const std::string path = cfg.checkpoint_dir + "/" + name;
      Checkpoint ckpt;
      ckpt.params = params;
      ckpt.epoch = e + 1;
      ckpt.vocab_hash = vocab.hash();
      ckpt.meta = TrainMeta{cfg.lr, cfg.batch_size, cfg.mask_rate, cfg.policy,
                            cfg.seed};
      ckpt.adam = adam;
      save_checkpoint(ckpt, path);
      result.checkpoint_paths.push_back(path);
    }
  }
  return result;
}

}  // namespace tabmlm
