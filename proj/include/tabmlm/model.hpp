#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tabmlm/rng.hpp"
#include "tabmlm/tokenizer.hpp"

namespace tabmlm {

// Encoder hyperparameters. vocab_size may exceed the tokenizer's size (the
// embedding table is then padded; useful only for parameter-count
// comparisons), never be smaller.
struct ModelConfig {
  std::int64_t vocab_size = static_cast<std::int64_t>(kVocabSize);
  std::int64_t max_positions = 514;  // two reserved leading slots
  std::int64_t hidden = 768;
  std::int64_t heads = 12;
  std::int64_t layers = 6;
  std::int64_t ffn_dim = 0;  // 0 means 4*hidden
  std::int64_t type_vocab = 1;
  double dropout = 0.1;
  double ln_eps = 1e-5;

  std::int64_t ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden; }
  std::int64_t head_dim() const { return hidden / heads; }
  std::int64_t max_seq_len() const { return max_positions - 2; }
  void validate() const;

  static ModelConfig paper_preset();  // the full-size reference configuration
  static ModelConfig desk_preset();   // trainable on one CPU core
  static ModelConfig tiny_preset();   // smoke-test scale
};

template <class T>
struct Tensor {
  std::vector<T> v;
  std::int64_t rows = 0, cols = 0;

  void resize(std::int64_t r, std::int64_t c) {
    rows = r;
    cols = c;
    v.assign(static_cast<std::size_t>(r * c), T(0));
  }
  std::int64_t size() const { return rows * cols; }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* row(std::int64_t i) { return v.data() + i * cols; }
  const T* row(std::int64_t i) const { return v.data() + i * cols; }
};

// Weights are stored [out x in] so y = x * W^T.
template <class T>
struct LayerParamsT {
  Tensor<T> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  Tensor<T> ln1_g, ln1_b;  // after the attention residual
  Tensor<T> ff1_w, ff1_b;  // [F x H]
  Tensor<T> ff2_w, ff2_b;  // [H x F]
  Tensor<T> ln2_g, ln2_b;
};

template <class T>
struct ParametersT {
  ModelConfig config;
  Tensor<T> tok_emb;   // [V x H]; doubles as the tied MLM decoder weight
  Tensor<T> pos_emb;   // [P x H]
  Tensor<T> type_emb;  // [type_vocab x H]
  std::vector<LayerParamsT<T>> layers;
  Tensor<T> head_w, head_b;        // MLM head transform [H x H], [H]
  Tensor<T> head_ln_g, head_ln_b;  // [H]
  Tensor<T> out_bias;              // [V]

  // Fixed visitation order; initialization, checkpoints, and the optimizer
  // all rely on it.
  template <class Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  std::uint64_t param_count() const {
    std::uint64_t n = 0;
    for_each([&](const std::string&, const Tensor<T>& t) {
      n += static_cast<std::uint64_t>(t.size());
    });
    return n;
  }

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn& fn) {
    fn("tok_emb", self.tok_emb);
    fn("pos_emb", self.pos_emb);
    fn("type_emb", self.type_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& lay = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      fn(p + "q_w", lay.q_w);
      fn(p + "q_b", lay.q_b);
      fn(p + "k_w", lay.k_w);
      fn(p + "k_b", lay.k_b);
      fn(p + "v_w", lay.v_w);
      fn(p + "v_b", lay.v_b);
      fn(p + "o_w", lay.o_w);
      fn(p + "o_b", lay.o_b);
      fn(p + "ln1_g", lay.ln1_g);
      fn(p + "ln1_b", lay.ln1_b);
      fn(p + "ff1_w", lay.ff1_w);
      fn(p + "ff1_b", lay.ff1_b);
      fn(p + "ff2_w", lay.ff2_w);
      fn(p + "ff2_b", lay.ff2_b);
      fn(p + "ln2_g", lay.ln2_g);
      fn(p + "ln2_b", lay.ln2_b);
    }
    fn("head_w", self.head_w);
    fn("head_b", self.head_b);
    fn("head_ln_g", self.head_ln_g);
    fn("head_ln_b", self.head_ln_b);
    fn("out_bias", self.out_bias);
  }
};

using Parameters = ParametersT<float>;

// Allocates shapes per config; weights N(0, 0.02), biases 0, LN gain 1.
template <class T>
ParametersT<T> init_params(const ModelConfig& config, std::uint64_t seed);

// All-zero tensors of the shapes the config dictates.
template <class T>
ParametersT<T> make_zero_params(const ModelConfig& config);

template <class T>
ParametersT<T> zeros_like(const ParametersT<T>& p);

template <class T>
struct ForwardOutput {
  std::int64_t batch = 0, seq = 0, vocab = 0;
  std::vector<T> logits;  // [batch x seq x vocab]
};

// Contract path: full padded sequence, logits at every position, no dropout.
template <class T>
ForwardOutput<T> forward(const ParametersT<T>& p,
                         const std::vector<TokenTriple>& batch);

// Mean cross-entropy over labeled positions; accumulated in double.
template <class T>
double mlm_loss(const ForwardOutput<T>& out,
                const std::vector<TokenTriple>& batch);

// Gradients of mlm_loss(forward(p, batch)) for every parameter tensor.
template <class T>
ParametersT<T> backward(const ParametersT<T>& p,
                        const std::vector<TokenTriple>& batch);

struct StepStats {
  double loss = 0.0;
  std::size_t masked = 0;
};

// Reusable-buffer engine for the hot paths: fused loss+gradients over the
// batch's real length with MLM-head work only at labeled positions
// (mathematically identical to the contract path; see tests), and logit
// extraction at chosen positions for imputation.
template <class T>
class BatchRunner {
 public:
  BatchRunner();
  ~BatchRunner();
  BatchRunner(BatchRunner&&) noexcept;
  BatchRunner& operator=(BatchRunner&&) noexcept;

  // grads is overwritten (shapes must match p). dropout_rng required when
  // dropout > 0.
  StepStats loss_and_grad(const ParametersT<T>& p,
                          const std::vector<const TokenTriple*>& batch,
                          ParametersT<T>& grads, double dropout = 0.0,
                          Xoshiro256ss* dropout_rng = nullptr);

  // Logits rows at positions[b] (ascending, real positions) per sequence,
  // concatenated in batch order: [sum |positions[b]| x V].
  std::vector<T> logits_at(const ParametersT<T>& p,
                           const std::vector<const TokenTriple*>& batch,
                           const std::vector<std::vector<std::int32_t>>& positions);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;

  template <class U>
  friend ForwardOutput<U> forward(const ParametersT<U>&,
                                  const std::vector<TokenTriple>&);
  template <class U>
  friend ParametersT<U> backward(const ParametersT<U>&,
                                 const std::vector<TokenTriple>&);
};

extern template class BatchRunner<float>;
extern template class BatchRunner<double>;

}  // namespace tabmlm
