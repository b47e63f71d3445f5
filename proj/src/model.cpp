#include "tabmlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "tabmlm/common.hpp"
#include "tabmlm/kernels.hpp"

namespace tabmlm {

void ModelConfig::validate() const {
  if (hidden <= 0 || heads <= 0 || layers <= 0 || vocab_size <= 0 ||
      type_vocab <= 0 || ffn() <= 0)
    throw data_error("model config: all dimensions must be positive");
  if (hidden % heads != 0)
    throw data_error("model config: hidden (" + std::to_string(hidden) +
                     ") not divisible by heads (" + std::to_string(heads) + ")");
  if (max_positions < 3)
    throw data_error("model config: max_positions must be at least 3");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw data_error("model config: dropout must be in [0, 1)");
  if (!(ln_eps > 0.0)) throw data_error("model config: ln_eps must be positive");
}

ModelConfig ModelConfig::paper_preset() {
  ModelConfig c;
  c.vocab_size = 51100;  // embedding table padded beyond the tokenizer's 10104
  c.max_positions = 514;
  c.hidden = 768;
  c.heads = 12;
  c.layers = 6;
  return c;
}

ModelConfig ModelConfig::desk_preset() {
  ModelConfig c;
  c.vocab_size = static_cast<std::int64_t>(kVocabSize);
  c.hidden = 128;
  c.heads = 4;
  c.layers = 2;
  c.dropout = 0.0;  // desk-scale runs chase memorization, not regularization
  return c;
}

ModelConfig ModelConfig::tiny_preset() {
  ModelConfig c;
  c.vocab_size = static_cast<std::int64_t>(kVocabSize);
  c.hidden = 32;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 128;
  c.dropout = 0.0;
  return c;
}

namespace {

template <class T>
void alloc_params(ParametersT<T>& p) {
  const auto& c = p.config;
  const std::int64_t H = c.hidden, F = c.ffn();
  p.tok_emb.resize(c.vocab_size, H);
  p.pos_emb.resize(c.max_positions, H);
  p.type_emb.resize(c.type_vocab, H);
  p.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : p.layers) {
    l.q_w.resize(H, H);
    l.q_b.resize(H, 1);
    l.k_w.resize(H, H);
    l.k_b.resize(H, 1);
    l.v_w.resize(H, H);
    l.v_b.resize(H, 1);
    l.o_w.resize(H, H);
    l.o_b.resize(H, 1);
    l.ln1_g.resize(H, 1);
    l.ln1_b.resize(H, 1);
    l.ff1_w.resize(F, H);
    l.ff1_b.resize(F, 1);
    l.ff2_w.resize(H, F);
    l.ff2_b.resize(H, 1);
    l.ln2_g.resize(H, 1);
    l.ln2_b.resize(H, 1);
  }
  p.head_w.resize(H, H);
  p.head_b.resize(H, 1);
  p.head_ln_g.resize(H, 1);
  p.head_ln_b.resize(H, 1);
  p.out_bias.resize(c.vocab_size, 1);
}

bool ends_with(const std::string& s, std::string_view suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

template <class T>
void add_bias_rows(std::int64_t rows, std::int64_t cols, T* x, const T* b) {
  for (std::int64_t i = 0; i < rows; ++i) {
    T* xi = x + i * cols;
    for (std::int64_t j = 0; j < cols; ++j) xi[j] += b[j];
  }
}

template <class T>
void colsum_acc(std::int64_t rows, std::int64_t cols, const T* dy, T* out) {
  for (std::int64_t i = 0; i < rows; ++i) {
    const T* di = dy + i * cols;
    for (std::int64_t j = 0; j < cols; ++j) out[j] += di[j];
  }
}

template <class T>
void layernorm_fwd(std::int64_t rows, std::int64_t h, const T* x, const T* g,
                   const T* b, T* y, T* mean, T* rstd, T eps) {
  for (std::int64_t i = 0; i < rows; ++i) {
    const T* xi = x + i * h;
    T* yi = y + i * h;
    T mu = 0;
    for (std::int64_t j = 0; j < h; ++j) mu += xi[j];
    mu /= static_cast<T>(h);
    T var = 0;
    for (std::int64_t j = 0; j < h; ++j) {
      const T d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(h);
    const T r = T(1) / std::sqrt(var + eps);
    mean[i] = mu;
    rstd[i] = r;
    for (std::int64_t j = 0; j < h; ++j)
      yi[j] = g[j] * ((xi[j] - mu) * r) + b[j];
  }
}

// dgain/dbias accumulate; dx is written.
template <class T>
void layernorm_bwd(std::int64_t rows, std::int64_t h, const T* dy, const T* x,
                   const T* mean, const T* rstd, const T* g, T* dgain,
                   T* dbias, T* dx) {
  for (std::int64_t i = 0; i < rows; ++i) {
    const T* dyi = dy + i * h;
    const T* xi = x + i * h;
    T* dxi = dx + i * h;
    const T mu = mean[i], r = rstd[i];
    T m1 = 0, m2 = 0;
    for (std::int64_t j = 0; j < h; ++j) {
      const T xhat = (xi[j] - mu) * r;
      const T dyg = dyi[j] * g[j];
      dgain[j] += dyi[j] * xhat;
      dbias[j] += dyi[j];
      m1 += dyg;
      m2 += dyg * xhat;
    }
    m1 /= static_cast<T>(h);
    m2 /= static_cast<T>(h);
    for (std::int64_t j = 0; j < h; ++j) {
      const T xhat = (xi[j] - mu) * r;
      dxi[j] = r * (dyi[j] * g[j] - m1 - xhat * m2);
    }
  }
}

// Scale, then softmax over the first live entries of the row; zero the rest.
template <class T>
void softmax_prefix(T* row, std::int64_t live, std::int64_t len, T scale) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::int64_t j = 0; j < live; ++j) {
    row[j] *= scale;
    mx = std::max(mx, row[j]);
  }
  for (std::int64_t j = 0; j < live; ++j) row[j] -= mx;
  kernels::vexp(static_cast<std::size_t>(live), row, row);
  double sum = 0;
  for (std::int64_t j = 0; j < live; ++j) sum += static_cast<double>(row[j]);
  const T inv = static_cast<T>(1.0 / sum);
  for (std::int64_t j = 0; j < live; ++j) row[j] *= inv;
  for (std::int64_t j = live; j < len; ++j) row[j] = 0;
}

template <class T>
void dropout_fill(std::size_t n, T* x, T* mask, double p, Xoshiro256ss& rng) {
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) {
    const T s = rng.next_double() >= p ? keep_scale : T(0);
    mask[i] = s;
    x[i] *= s;
  }
}

template <class T>
void apply_mask(std::size_t n, T* x, const T* mask) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= mask[i];
}

}  // namespace

template <class T>
ParametersT<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParametersT<T> p;
  p.config = config;
  alloc_params(p);
  auto gen = derive_stream(seed, "init");
  NormalSampler normal(gen);
  p.for_each([&](const std::string& name, Tensor<T>& t) {
    if (ends_with(name, "_w") || name.find("emb") != std::string::npos) {
      for (auto& v : t.v) v = static_cast<T>(0.02 * normal.next());
    } else if (ends_with(name, "_g")) {
      std::fill(t.v.begin(), t.v.end(), T(1));
    } else {
      std::fill(t.v.begin(), t.v.end(), T(0));
    }
  });
  return p;
}

template <class T>
ParametersT<T> make_zero_params(const ModelConfig& config) {
  config.validate();
  ParametersT<T> z;
  z.config = config;
  alloc_params(z);
  return z;
}

template <class T>
ParametersT<T> zeros_like(const ParametersT<T>& p) {
  return make_zero_params<T>(p.config);
}

// ---------------------------------------------------------------------------
// Engine

template <class T>
struct BatchRunner<T>::Impl {
  struct LayerCache {
    std::vector<T> x_in, q, k, v, attn, attn_drop, ctx, r1, y1, f1, r2;
    std::vector<T> mean1, rstd1, mean2, rstd2;
    std::vector<T> mask_ao, mask_f2, mask_attn;
  };

  std::vector<LayerCache> lay;
  std::vector<T> x_final, mask_emb;
  std::vector<T> hs, t1, tg, yh, mean_h, rstd_h, logits, dlogits;
  std::vector<T> sH1, sH2, sH3, sH4, dq, dk, dv, dx, sF1, sF2, datt, expbuf;
  std::vector<std::int64_t> head_rows;
  std::vector<std::int64_t> live;  // real length per sequence

  struct Result {
    double loss = std::numeric_limits<double>::quiet_NaN();
    std::size_t masked = 0;
  };

  // One fused pass. `positions` selects MLM-head rows (nullptr = every
  // position). Returns loss stats; logits stay in this->logits ([M x V],
  // rows in head_rows order). When grads is non-null, gradient tensors are
  // zeroed and filled.
  Result run(const ParametersT<T>& p,
             const std::vector<const TokenTriple*>& batch, bool full_seq,
             const std::vector<std::vector<std::int32_t>>* positions,
             ParametersT<T>* grads, double dropout, Xoshiro256ss* drop_rng) {
    const ModelConfig& cfg = p.config;
    cfg.validate();
    if (batch.empty()) throw data_error("empty batch");
    if (dropout > 0.0 && !drop_rng)
      throw data_error("dropout requires an rng stream");

    const std::int64_t B = static_cast<std::int64_t>(batch.size());
    const std::int64_t S_full = static_cast<std::int64_t>(batch[0]->seq_len());
    const std::int64_t H = cfg.hidden, F = cfg.ffn(), V = cfg.vocab_size;
    const std::int64_t A = cfg.heads, d = cfg.head_dim();
    const std::int64_t L = cfg.layers;

    live.resize(static_cast<std::size_t>(B));
    std::int64_t max_live = 0;
    for (std::int64_t b = 0; b < B; ++b) {
      const TokenTriple& tr = *batch[b];
      if (static_cast<std::int64_t>(tr.seq_len()) != S_full)
        throw data_error("ragged batch: sequence lengths differ");
      const std::int64_t lb = static_cast<std::int64_t>(tr.real_len());
      if (lb < 2) throw data_error("sequence without CLS/SEP framing");
      live[b] = lb;
      max_live = std::max(max_live, lb);
      for (std::int64_t i = 0; i < S_full; ++i) {
        const TokenId id = tr.input_ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= V)
          throw data_error("token id " + std::to_string(id) +
                           " out of range for vocab " + std::to_string(V));
      }
    }
    const std::int64_t S = full_seq ? S_full : max_live;
    if (S > cfg.max_seq_len())
      throw data_error("sequence length " + std::to_string(S) +
                       " exceeds max " + std::to_string(cfg.max_seq_len()));
    const std::int64_t N = B * S;
    const bool drop = dropout > 0.0;

    // Head row selection.
    head_rows.clear();
    if (positions) {
      if (static_cast<std::int64_t>(positions->size()) != B)
        throw data_error("positions list does not match batch size");
      for (std::int64_t b = 0; b < B; ++b) {
        std::int32_t prev = -1;
        for (std::int32_t pos : (*positions)[static_cast<std::size_t>(b)]) {
          if (pos <= prev || pos >= live[b])
            throw data_error("head position out of order or beyond real tokens");
          prev = pos;
          head_rows.push_back(b * S + pos);
        }
      }
    } else {
      for (std::int64_t r = 0; r < N; ++r) head_rows.push_back(r);
    }
    const std::int64_t M = static_cast<std::int64_t>(head_rows.size());
    if (M == 0) throw data_error("no head positions selected");

    lay.resize(static_cast<std::size_t>(L));
    for (auto& lc : lay) {
      lc.x_in.resize(N * H);
      lc.q.resize(N * H);
      lc.k.resize(N * H);
      lc.v.resize(N * H);
      lc.attn.resize(B * A * S * S);
      lc.ctx.resize(N * H);
      lc.r1.resize(N * H);
      lc.y1.resize(N * H);
      lc.f1.resize(N * F);
      lc.r2.resize(N * H);
      lc.mean1.resize(N);
      lc.rstd1.resize(N);
      lc.mean2.resize(N);
      lc.rstd2.resize(N);
      if (drop) {
        lc.attn_drop.resize(B * A * S * S);
        lc.mask_ao.resize(N * H);
        lc.mask_f2.resize(N * H);
        lc.mask_attn.resize(B * A * S * S);
      }
    }
    x_final.resize(N * H);
    sH1.resize(N * H);
    sF1.resize(N * F);
    if (drop) mask_emb.resize(N * H);

    const T eps = static_cast<T>(cfg.ln_eps);
    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

    // Embeddings (position ids are offset by the two reserved slots).
    {
      T* x = lay[0].x_in.data();
      for (std::int64_t b = 0; b < B; ++b) {
        const TokenTriple& tr = *batch[b];
        for (std::int64_t i = 0; i < S; ++i) {
          const TokenId id = tr.input_ids[static_cast<std::size_t>(i)];
          const T* te = p.tok_emb.row(id);
          const T* pe = p.pos_emb.row(2 + i);
          const T* ye = p.type_emb.row(0);
          T* xi = x + (b * S + i) * H;
          for (std::int64_t j = 0; j < H; ++j) xi[j] = te[j] + pe[j] + ye[j];
        }
      }
      if (drop) dropout_fill(static_cast<std::size_t>(N * H), x,
                             mask_emb.data(), dropout, *drop_rng);
    }

    // Encoder stack.
    for (std::int64_t l = 0; l < L; ++l) {
      auto& lc = lay[static_cast<std::size_t>(l)];
      const auto& w = p.layers[static_cast<std::size_t>(l)];
      const T* x = lc.x_in.data();

      kernels::gemm_nt(N, H, H, x, H, w.q_w.data(), H, lc.q.data(), H, false);
      add_bias_rows<T>(N, H, lc.q.data(), w.q_b.data());
      kernels::gemm_nt(N, H, H, x, H, w.k_w.data(), H, lc.k.data(), H, false);
      add_bias_rows<T>(N, H, lc.k.data(), w.k_b.data());
      kernels::gemm_nt(N, H, H, x, H, w.v_w.data(), H, lc.v.data(), H, false);
      add_bias_rows<T>(N, H, lc.v.data(), w.v_b.data());

      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t h = 0; h < A; ++h) {
          const T* qh = lc.q.data() + b * S * H + h * d;
          const T* kh = lc.k.data() + b * S * H + h * d;
          const T* vh = lc.v.data() + b * S * H + h * d;
          T* att = lc.attn.data() + ((b * A + h) * S) * S;
          kernels::gemm_nt(S, S, d, qh, H, kh, H, att, S, false);
          for (std::int64_t i = 0; i < S; ++i)
            softmax_prefix(att + i * S, live[b], S, inv_sqrt_d);
          const T* att_used = att;
          if (drop) {
            T* ad = lc.attn_drop.data() + ((b * A + h) * S) * S;
            T* am = lc.mask_attn.data() + ((b * A + h) * S) * S;
            std::memcpy(ad, att, sizeof(T) * S * S);
            dropout_fill(static_cast<std::size_t>(S * S), ad, am, dropout,
                         *drop_rng);
            att_used = ad;
          }
          T* ch = lc.ctx.data() + b * S * H + h * d;
          kernels::gemm_nn(S, d, S, att_used, S, vh, H, ch, H, false);
        }
      }

      T* ao = sH1.data();
      kernels::gemm_nt(N, H, H, lc.ctx.data(), H, w.o_w.data(), H, ao, H, false);
      add_bias_rows<T>(N, H, ao, w.o_b.data());
      if (drop) dropout_fill(static_cast<std::size_t>(N * H), ao,
                             lc.mask_ao.data(), dropout, *drop_rng);
      for (std::int64_t i = 0; i < N * H; ++i) lc.r1[i] = x[i] + ao[i];
      layernorm_fwd<T>(N, H, lc.r1.data(), w.ln1_g.data(), w.ln1_b.data(),
                       lc.y1.data(), lc.mean1.data(), lc.rstd1.data(), eps);

      kernels::gemm_nt(N, F, H, lc.y1.data(), H, w.ff1_w.data(), H,
                       lc.f1.data(), F, false);
      add_bias_rows<T>(N, F, lc.f1.data(), w.ff1_b.data());
      kernels::gelu(static_cast<std::size_t>(N * F), lc.f1.data(), sF1.data());
      T* f2 = sH1.data();
      kernels::gemm_nt(N, H, F, sF1.data(), F, w.ff2_w.data(), F, f2, H, false);
      add_bias_rows<T>(N, H, f2, w.ff2_b.data());
      if (drop) dropout_fill(static_cast<std::size_t>(N * H), f2,
                             lc.mask_f2.data(), dropout, *drop_rng);
      for (std::int64_t i = 0; i < N * H; ++i) lc.r2[i] = lc.y1[i] + f2[i];

      T* x_out = (l + 1 < L) ? lay[static_cast<std::size_t>(l + 1)].x_in.data()
                             : x_final.data();
      layernorm_fwd<T>(N, H, lc.r2.data(), w.ln2_g.data(), w.ln2_b.data(),
                       x_out, lc.mean2.data(), lc.rstd2.data(), eps);
    }

    // MLM head at the selected rows.
    hs.resize(M * H);
    t1.resize(M * H);
    tg.resize(M * H);
    yh.resize(M * H);
    mean_h.resize(M);
    rstd_h.resize(M);
    logits.resize(M * V);
    for (std::int64_t r = 0; r < M; ++r)
      std::memcpy(hs.data() + r * H, x_final.data() + head_rows[r] * H,
                  sizeof(T) * H);
    kernels::gemm_nt(M, H, H, hs.data(), H, p.head_w.data(), H, t1.data(), H,
                     false);
    add_bias_rows<T>(M, H, t1.data(), p.head_b.data());
    kernels::gelu(static_cast<std::size_t>(M * H), t1.data(), tg.data());
    layernorm_fwd<T>(M, H, tg.data(), p.head_ln_g.data(), p.head_ln_b.data(),
                     yh.data(), mean_h.data(), rstd_h.data(), eps);
    kernels::gemm_nt(M, V, H, yh.data(), H, p.tok_emb.data(), H, logits.data(),
                     V, false);
    add_bias_rows<T>(M, V, logits.data(), p.out_bias.data());

    // Loss over labeled head rows (cross-entropy, double accumulation).
    Result res;
    double loss_sum = 0;
    std::size_t n_masked = 0;
    expbuf.resize(V);
    for (std::int64_t r = 0; r < M; ++r) {
      const std::int64_t b = head_rows[r] / S;
      const std::int64_t i = head_rows[r] % S;
      const std::int32_t label =
          batch[b]->labels[static_cast<std::size_t>(i)];
      if (label < 0) continue;
      if (label >= V) throw data_error("label id out of range");
      const T* row = logits.data() + r * V;
      T mx = row[0];
      for (std::int64_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
      for (std::int64_t v = 0; v < V; ++v) expbuf[v] = row[v] - mx;
      kernels::vexp(static_cast<std::size_t>(V), expbuf.data(), expbuf.data());
      double sum = 0;
      for (std::int64_t v = 0; v < V; ++v) sum += static_cast<double>(expbuf[v]);
      loss_sum += std::log(sum) - static_cast<double>(row[label] - mx);
      ++n_masked;
    }
    if (n_masked > 0) res.loss = loss_sum / static_cast<double>(n_masked);
    res.masked = n_masked;

    if (!grads) return res;
    if (n_masked == 0)
      throw data_error("gradients requested but batch has no masked labels");

    // dlogits = (softmax - onehot) / n_masked at labeled rows, 0 elsewhere.
    dlogits.assign(static_cast<std::size_t>(M * V), T(0));
    const T inv_n = static_cast<T>(1.0 / static_cast<double>(n_masked));
    for (std::int64_t r = 0; r < M; ++r) {
      const std::int64_t b = head_rows[r] / S;
      const std::int64_t i = head_rows[r] % S;
      const std::int32_t label =
          batch[b]->labels[static_cast<std::size_t>(i)];
      if (label < 0) continue;
      const T* row = logits.data() + r * V;
      T* drow = dlogits.data() + r * V;
      T mx = row[0];
      for (std::int64_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
      for (std::int64_t v = 0; v < V; ++v) drow[v] = row[v] - mx;
      kernels::vexp(static_cast<std::size_t>(V), drow, drow);
      double sum = 0;
      for (std::int64_t v = 0; v < V; ++v) sum += static_cast<double>(drow[v]);
      const T inv_sum = static_cast<T>(1.0 / sum);
      for (std::int64_t v = 0; v < V; ++v) drow[v] *= inv_sum * inv_n;
      drow[label] -= inv_n;
    }

    ParametersT<T>& g = *grads;
    g.for_each([](const std::string&, Tensor<T>& t) {
      std::fill(t.v.begin(), t.v.end(), T(0));
    });

    // Head backward.
    colsum_acc<T>(M, V, dlogits.data(), g.out_bias.data());
    kernels::gemm_tn(V, H, M, dlogits.data(), V, yh.data(), H,
                     g.tok_emb.data(), H, true);
    std::vector<T>& dyh = sH2;
    dyh.resize(M * H);
    kernels::gemm_nn(M, H, V, dlogits.data(), V, p.tok_emb.data(), H,
                     dyh.data(), H, false);
    std::vector<T>& dtg = sH3;
    dtg.resize(M * H);
    layernorm_bwd<T>(M, H, dyh.data(), tg.data(), mean_h.data(),
                     rstd_h.data(), p.head_ln_g.data(), g.head_ln_g.data(),
                     g.head_ln_b.data(), dtg.data());
    std::vector<T>& dt1 = sH4;
    dt1.resize(M * H);
    kernels::gelu_backward(static_cast<std::size_t>(M * H), t1.data(),
                           dtg.data(), dt1.data());
    kernels::gemm_tn(H, H, M, dt1.data(), H, hs.data(), H, g.head_w.data(), H,
                     true);
    colsum_acc<T>(M, H, dt1.data(), g.head_b.data());
    std::vector<T>& dhs = sH2;  // dyh no longer needed
    kernels::gemm_nn(M, H, H, dt1.data(), H, p.head_w.data(), H, dhs.data(), H,
                     false);

    dx.assign(static_cast<std::size_t>(N * H), T(0));
    for (std::int64_t r = 0; r < M; ++r)
      std::memcpy(dx.data() + head_rows[r] * H, dhs.data() + r * H,
                  sizeof(T) * H);

    // Encoder backward.
    sH1.resize(N * H);
    sH2.resize(N * H);
    sH3.resize(N * H);
    sH4.resize(N * H);
    dq.resize(N * H);
    dk.resize(N * H);
    dv.resize(N * H);
    sF2.resize(N * F);
    datt.resize(S * S);
    for (std::int64_t l = L - 1; l >= 0; --l) {
      auto& lc = lay[static_cast<std::size_t>(l)];
      const auto& w = p.layers[static_cast<std::size_t>(l)];
      auto& gw = g.layers[static_cast<std::size_t>(l)];

      // LN2
      layernorm_bwd<T>(N, H, dx.data(), lc.r2.data(), lc.mean2.data(),
                       lc.rstd2.data(), w.ln2_g.data(), gw.ln2_g.data(),
                       gw.ln2_b.data(), sH1.data());  // sH1 = dr2 = dy1 base
      T* df2 = sH2.data();
      std::memcpy(df2, sH1.data(), sizeof(T) * N * H);
      if (drop) apply_mask(static_cast<std::size_t>(N * H), df2,
                           lc.mask_f2.data());

      kernels::gelu(static_cast<std::size_t>(N * F), lc.f1.data(), sF1.data());
      kernels::gemm_tn(H, F, N, df2, H, sF1.data(), F, gw.ff2_w.data(), F,
                       true);
      colsum_acc<T>(N, H, df2, gw.ff2_b.data());
      kernels::gemm_nn(N, F, H, df2, H, w.ff2_w.data(), F, sF2.data(), F,
                       false);
      kernels::gelu_backward(static_cast<std::size_t>(N * F), lc.f1.data(),
                             sF2.data(), sF2.data());
      kernels::gemm_tn(F, H, N, sF2.data(), F, lc.y1.data(), H,
                       gw.ff1_w.data(), H, true);
      colsum_acc<T>(N, F, sF2.data(), gw.ff1_b.data());
      kernels::gemm_nn(N, H, F, sF2.data(), F, w.ff1_w.data(), H, sH1.data(),
                       H, true);  // dy1 = dr2 + df1 * W1

      // LN1
      layernorm_bwd<T>(N, H, sH1.data(), lc.r1.data(), lc.mean1.data(),
                       lc.rstd1.data(), w.ln1_g.data(), gw.ln1_g.data(),
                       gw.ln1_b.data(), sH2.data());  // sH2 = dr1
      T* dao = sH3.data();
      std::memcpy(dao, sH2.data(), sizeof(T) * N * H);
      if (drop) apply_mask(static_cast<std::size_t>(N * H), dao,
                           lc.mask_ao.data());

      kernels::gemm_tn(H, H, N, dao, H, lc.ctx.data(), H, gw.o_w.data(), H,
                       true);
      colsum_acc<T>(N, H, dao, gw.o_b.data());
      T* dctx = sH4.data();
      kernels::gemm_nn(N, H, H, dao, H, w.o_w.data(), H, dctx, H, false);

      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t h = 0; h < A; ++h) {
          const T* att = lc.attn.data() + ((b * A + h) * S) * S;
          const T* qh = lc.q.data() + b * S * H + h * d;
          const T* kh = lc.k.data() + b * S * H + h * d;
          const T* dch = dctx + b * S * H + h * d;
          const T* att_used = drop
              ? lc.attn_drop.data() + ((b * A + h) * S) * S
              : att;
          // dv = attn_used^T * dctx
          kernels::gemm_tn(S, d, S, att_used, S, dch, H,
                           dv.data() + b * S * H + h * d, H, false);
          // dattn (through the values product)
          kernels::gemm_nt(S, S, d, dch, H, lc.v.data() + b * S * H + h * d, H,
                           datt.data(), S, false);
          if (drop)
            apply_mask(static_cast<std::size_t>(S * S), datt.data(),
                       lc.mask_attn.data() + ((b * A + h) * S) * S);
          // softmax backward, folding in the 1/sqrt(d) score scale
          for (std::int64_t i = 0; i < S; ++i) {
            const T* ai = att + i * S;
            T* di = datt.data() + i * S;
            double dot = 0;
            for (std::int64_t j = 0; j < live[b]; ++j)
              dot += static_cast<double>(di[j]) * static_cast<double>(ai[j]);
            const T dot_t = static_cast<T>(dot);
            for (std::int64_t j = 0; j < live[b]; ++j)
              di[j] = ai[j] * (di[j] - dot_t) * inv_sqrt_d;
            for (std::int64_t j = live[b]; j < S; ++j) di[j] = 0;
          }
          kernels::gemm_nn(S, d, S, datt.data(), S, kh, H,
                           dq.data() + b * S * H + h * d, H, false);
          kernels::gemm_tn(S, d, S, datt.data(), S, qh, H,
                           dk.data() + b * S * H + h * d, H, false);
        }
      }

      const T* x = lc.x_in.data();
      kernels::gemm_tn(H, H, N, dq.data(), H, x, H, gw.q_w.data(), H, true);
      colsum_acc<T>(N, H, dq.data(), gw.q_b.data());
      kernels::gemm_tn(H, H, N, dk.data(), H, x, H, gw.k_w.data(), H, true);
      colsum_acc<T>(N, H, dk.data(), gw.k_b.data());
      kernels::gemm_tn(H, H, N, dv.data(), H, x, H, gw.v_w.data(), H, true);
      colsum_acc<T>(N, H, dv.data(), gw.v_b.data());

      // dx_in = dr1 + dq Wq + dk Wk + dv Wv
      std::memcpy(dx.data(), sH2.data(), sizeof(T) * N * H);
      kernels::gemm_nn(N, H, H, dq.data(), H, w.q_w.data(), H, dx.data(), H,
                       true);
      kernels::gemm_nn(N, H, H, dk.data(), H, w.k_w.data(), H, dx.data(), H,
                       true);
      kernels::gemm_nn(N, H, H, dv.data(), H, w.v_w.data(), H, dx.data(), H,
                       true);
    }

    if (drop) apply_mask(static_cast<std::size_t>(N * H), dx.data(),
                         mask_emb.data());
    for (std::int64_t b = 0; b < B; ++b) {
      const TokenTriple& tr = *batch[b];
      for (std::int64_t i = 0; i < live[b]; ++i) {
        const T* dxi = dx.data() + (b * S + i) * H;
        T* gt = g.tok_emb.row(tr.input_ids[static_cast<std::size_t>(i)]);
        T* gp = g.pos_emb.row(2 + i);
        T* gy = g.type_emb.row(0);
        for (std::int64_t j = 0; j < H; ++j) {
          gt[j] += dxi[j];
          gp[j] += dxi[j];
          gy[j] += dxi[j];
        }
      }
    }
    return res;
  }
};

template <class T>
BatchRunner<T>::BatchRunner() : impl_(new Impl) {}
template <class T>
BatchRunner<T>::~BatchRunner() = default;
template <class T>
BatchRunner<T>::BatchRunner(BatchRunner&&) noexcept = default;
template <class T>
BatchRunner<T>& BatchRunner<T>::operator=(BatchRunner&&) noexcept = default;

template <class T>
StepStats BatchRunner<T>::loss_and_grad(
    const ParametersT<T>& p, const std::vector<const TokenTriple*>& batch,
    ParametersT<T>& grads, double dropout, Xoshiro256ss* dropout_rng) {
  // Labeled positions drive both head work and the loss.
  std::vector<std::vector<std::int32_t>> positions(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& labels = batch[b]->labels;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) positions[b].push_back(static_cast<std::int32_t>(i));
  }
  auto res = impl_->run(p, batch, /*full_seq=*/false, &positions, &grads,
                        dropout, dropout_rng);
  return StepStats{res.loss, res.masked};
}

template <class T>
std::vector<T> BatchRunner<T>::logits_at(
    const ParametersT<T>& p, const std::vector<const TokenTriple*>& batch,
    const std::vector<std::vector<std::int32_t>>& positions) {
  impl_->run(p, batch, /*full_seq=*/false, &positions, nullptr, 0.0, nullptr);
  return std::move(impl_->logits);
}

template <class T>
ForwardOutput<T> forward(const ParametersT<T>& p,
                         const std::vector<TokenTriple>& batch) {
  std::vector<const TokenTriple*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& t : batch) ptrs.push_back(&t);
  BatchRunner<T> runner;
  auto* impl = runner.impl_.get();
  impl->run(p, ptrs, /*full_seq=*/true, nullptr, nullptr, 0.0, nullptr);
  ForwardOutput<T> out;
  out.batch = static_cast<std::int64_t>(batch.size());
  out.seq = static_cast<std::int64_t>(batch[0].seq_len());
  out.vocab = p.config.vocab_size;
  out.logits = std::move(impl->logits);
  return out;
}

template <class T>
double mlm_loss(const ForwardOutput<T>& out,
                const std::vector<TokenTriple>& batch) {
  if (static_cast<std::int64_t>(batch.size()) != out.batch)
    throw data_error("batch size does not match forward output");
  const std::int64_t S = out.seq, V = out.vocab;
  double sum = 0;
  std::size_t count = 0;
  for (std::int64_t b = 0; b < out.batch; ++b) {
    const auto& labels = batch[static_cast<std::size_t>(b)].labels;
    if (static_cast<std::int64_t>(labels.size()) != S)
      throw data_error("labels length does not match forward output");
    for (std::int64_t i = 0; i < S; ++i) {
      const std::int32_t label = labels[static_cast<std::size_t>(i)];
      if (label < 0) continue;
      if (label >= V) throw data_error("label id out of range");
      const T* row = out.logits.data() + (b * S + i) * V;
      double mx = static_cast<double>(row[0]);
      for (std::int64_t v = 1; v < V; ++v)
        mx = std::max(mx, static_cast<double>(row[v]));
      double se = 0;
      for (std::int64_t v = 0; v < V; ++v)
        se += std::exp(static_cast<double>(row[v]) - mx);
      sum += std::log(se) - (static_cast<double>(row[label]) - mx);
      ++count;
    }
  }
  if (count == 0) throw data_error("mlm_loss: no masked positions in batch");
  return sum / static_cast<double>(count);
}

template <class T>
ParametersT<T> backward(const ParametersT<T>& p,
                        const std::vector<TokenTriple>& batch) {
  std::vector<const TokenTriple*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& t : batch) ptrs.push_back(&t);
  std::vector<std::vector<std::int32_t>> positions(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t i = 0; i < batch[b].labels.size(); ++i)
      if (batch[b].labels[i] >= 0)
        positions[b].push_back(static_cast<std::int32_t>(i));
  ParametersT<T> grads = zeros_like(p);
  BatchRunner<T> runner;
  runner.impl_->run(p, ptrs, /*full_seq=*/true, &positions, &grads, 0.0,
                    nullptr);
  return grads;
}

template ParametersT<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ParametersT<double> init_params<double>(const ModelConfig&, std::uint64_t);
template ParametersT<float> make_zero_params<float>(const ModelConfig&);
template ParametersT<double> make_zero_params<double>(const ModelConfig&);
template ParametersT<float> zeros_like<float>(const ParametersT<float>&);
template ParametersT<double> zeros_like<double>(const ParametersT<double>&);
template ForwardOutput<float> forward<float>(const ParametersT<float>&,
                                             const std::vector<TokenTriple>&);
template ForwardOutput<double> forward<double>(const ParametersT<double>&,
                                               const std::vector<TokenTriple>&);
template double mlm_loss<float>(const ForwardOutput<float>&,
                                const std::vector<TokenTriple>&);
template double mlm_loss<double>(const ForwardOutput<double>&,
                                 const std::vector<TokenTriple>&);
template ParametersT<float> backward<float>(const ParametersT<float>&,
                                            const std::vector<TokenTriple>&);
template ParametersT<double> backward<double>(const ParametersT<double>&,
                                              const std::vector<TokenTriple>&);
template class BatchRunner<float>;
template class BatchRunner<double>;

}  // namespace tabmlm
