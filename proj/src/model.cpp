#include "styletag/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "styletag/kernels.hpp"

namespace styletag {

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model needs at least one layer");
  if (heads < 1 || dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (ff_dim < 1) throw ConfigError("ff_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (vocab_size < 4) throw ConfigError("vocab_size too small");
}

ModelConfig paper_preset() {
  ModelConfig cfg;
  cfg.layers = 4;
  cfg.heads = 4;
  cfg.dim = 512;
  cfg.ff_dim = 2048;
  cfg.dropout = 0.3;
  return cfg;
}

ModelConfig desk_preset() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.dim = 64;
  cfg.ff_dim = 256;
  cfg.dropout = 0.1;
  return cfg;
}

namespace {

struct AttnOffsets {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncLayerOffsets {
  std::size_t ln1g, ln1b;
  AttnOffsets attn;
  std::size_t ln2g, ln2b;
  std::size_t w1, b1, w2, b2;
};

struct DecLayerOffsets {
  std::size_t ln1g, ln1b;
  AttnOffsets self_attn;
  std::size_t ln2g, ln2b;
  AttnOffsets cross_attn;
  std::size_t ln3g, ln3b;
  std::size_t w1, b1, w2, b2;
};

// Single source of truth for the flat parameter vector layout.
struct Layout {
  std::size_t enc_embed = 0, dec_embed = 0;
  std::vector<EncLayerOffsets> enc;
  std::size_t enc_fin_g = 0, enc_fin_b = 0;
  std::vector<DecLayerOffsets> dec;
  std::size_t dec_fin_g = 0, dec_fin_b = 0;
  std::size_t out_w = 0, out_b = 0;
  std::size_t total = 0;
  std::vector<ParamBlock> blocks;

  explicit Layout(const ModelConfig& cfg) {
    std::size_t V = cfg.vocab_size, D = cfg.dim, F = cfg.ff_dim;
    std::size_t cur = 0;
    auto block = [&](const std::string& name, std::size_t size) {
      blocks.push_back({name, cur, size});
      std::size_t off = cur;
      cur += size;
      return off;
    };
    auto attn = [&](const std::string& prefix) {
      AttnOffsets a;
      a.wq = block(prefix + ".wq", D * D);
      a.bq = block(prefix + ".bq", D);
      a.wk = block(prefix + ".wk", D * D);
      a.bk = block(prefix + ".bk", D);
      a.wv = block(prefix + ".wv", D * D);
      a.bv = block(prefix + ".bv", D);
      a.wo = block(prefix + ".wo", D * D);
      a.bo = block(prefix + ".bo", D);
      return a;
    };
    enc_embed = block("enc_embed", V * D);
    dec_embed = block("dec_embed", V * D);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "enc" + std::to_string(l);
      EncLayerOffsets e;
      e.ln1g = block(p + ".ln1.g", D);
      e.ln1b = block(p + ".ln1.b", D);
      e.attn = attn(p + ".attn");
      e.ln2g = block(p + ".ln2.g", D);
      e.ln2b = block(p + ".ln2.b", D);
      e.w1 = block(p + ".ffn.w1", D * F);
      e.b1 = block(p + ".ffn.b1", F);
      e.w2 = block(p + ".ffn.w2", F * D);
      e.b2 = block(p + ".ffn.b2", D);
      enc.push_back(e);
    }
    enc_fin_g = block("enc_final.g", D);
    enc_fin_b = block("enc_final.b", D);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "dec" + std::to_string(l);
      DecLayerOffsets d;
      d.ln1g = block(p + ".ln1.g", D);
      d.ln1b = block(p + ".ln1.b", D);
      d.self_attn = attn(p + ".self");
      d.ln2g = block(p + ".ln2.g", D);
      d.ln2b = block(p + ".ln2.b", D);
      d.cross_attn = attn(p + ".cross");
      d.ln3g = block(p + ".ln3.g", D);
      d.ln3b = block(p + ".ln3.b", D);
      d.w1 = block(p + ".ffn.w1", D * F);
      d.b1 = block(p + ".ffn.b1", F);
      d.w2 = block(p + ".ffn.w2", F * D);
      d.b2 = block(p + ".ffn.b2", D);
      dec.push_back(d);
    }
    dec_fin_g = block("dec_final.g", D);
    dec_fin_b = block("dec_final.b", D);
    out_w = block("out_w", D * V);
    out_b = block("out_b", V);
    total = cur;
  }
};

template <typename T>
struct AttnBuf {
  std::vector<T> xhat, istd;  // query-side layernorm stats
  std::vector<T> xn;          // layernormed query input
  std::vector<T> qh, kh, vh;  // head-major [B*H*L, dh]
  std::vector<T> p;           // attention probabilities
  std::vector<T> ctx;         // concatenated context [Rq, D]
  std::vector<T> drop;
};

template <typename T>
struct FfnBuf {
  std::vector<T> xhat, istd, xn;
  std::vector<T> h1, hr;  // pre/post activation [R, F]
  std::vector<T> drop;
};

template <typename T>
struct Workspace {
  std::vector<T> enc_x, dec_x;
  std::vector<T> enc_drop0, dec_drop0;
  std::vector<AttnBuf<T>> enc_attn, dec_self, dec_cross;
  std::vector<FfnBuf<T>> enc_ffn, dec_ffn;
  std::vector<T> enc_fin_xhat, enc_fin_istd;
  std::vector<T> memory;
  std::vector<T> dec_fin_xhat, dec_fin_istd, dec_fin_out;
  std::vector<T> logits;  // holds probabilities after the softmax
};

constexpr double kMaskValue = -1e30;

template <typename T>
void layernorm_fwd(const T* x, int rows, int dim, const T* g, const T* b, T* out, T* xhat,
                   T* istd) {
  const T eps = T(1e-5);
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + std::size_t(r) * dim;
    T* xh = xhat + std::size_t(r) * dim;
    T* o = out + std::size_t(r) * dim;
    T mean = T(0);
    for (int j = 0; j < dim; ++j) mean += xr[j];
    mean /= T(dim);
    T var = T(0);
    for (int j = 0; j < dim; ++j) {
      T d = xr[j] - mean;
      var += d * d;
    }
    var /= T(dim);
    T is = T(1) / std::sqrt(var + eps);
    istd[r] = is;
    for (int j = 0; j < dim; ++j) {
      xh[j] = (xr[j] - mean) * is;
      o[j] = g[j] * xh[j] + b[j];
    }
  }
}

template <typename T>
void layernorm_bwd(const T* dout, const T* xhat, const T* istd, const T* g, int rows, int dim,
                   T* dg, T* db, T* dx_accum) {
  for (int r = 0; r < rows; ++r) {
    const T* dy = dout + std::size_t(r) * dim;
    const T* xh = xhat + std::size_t(r) * dim;
    T* dx = dx_accum + std::size_t(r) * dim;
    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
    for (int j = 0; j < dim; ++j) {
      T dxh = dy[j] * g[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh[j];
      dg[j] += dy[j] * xh[j];
      db[j] += dy[j];
    }
    T m1 = sum_dxhat / T(dim);
    T m2 = sum_dxhat_xhat / T(dim);
    T is = istd[r];
    for (int j = 0; j < dim; ++j) {
      T dxh = dy[j] * g[j];
      dx[j] += is * (dxh - m1 - xh[j] * m2);
    }
  }
}

template <typename T>
void dropout_fwd(T* x, std::size_t n, double p, Rng* rng, std::vector<T>& mask) {
  if (!rng || p <= 0.0) {
    mask.clear();
    return;
  }
  mask.resize(n);
  T scale = T(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) {
    T m = rng->uniform() >= p ? scale : T(0);
    mask[i] = m;
    x[i] *= m;
  }
}

template <typename T>
void dropout_bwd(T* dx, const std::vector<T>& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) dx[i] *= mask[i];
}

// Scatter Q[R,D] into per-(item,head) blocks of L rows x dh columns.
template <typename T>
void pack_heads(const T* x, int B, int L, int H, int dh, T* xh) {
  int D = H * dh;
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h) {
      T* dst = xh + (std::size_t(b) * H + h) * L * dh;
      const T* src = x + std::size_t(b) * L * D + std::size_t(h) * dh;
      for (int i = 0; i < L; ++i)
        std::memcpy(dst + std::size_t(i) * dh, src + std::size_t(i) * D, sizeof(T) * dh);
    }
}

template <typename T>
void unpack_heads(const T* xh, int B, int L, int H, int dh, T* x) {
  int D = H * dh;
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h) {
      const T* src = xh + (std::size_t(b) * H + h) * L * dh;
      T* dst = x + std::size_t(b) * L * D + std::size_t(h) * dh;
      for (int i = 0; i < L; ++i)
        std::memcpy(dst + std::size_t(i) * D, src + std::size_t(i) * dh, sizeof(T) * dh);
    }
}

// out[Rq,D] = MultiHeadAttention(xq_n, xkv, xkv); fills buf for backward.
template <typename T>
void attention_fwd(const ModelConfig& cfg, const T* P, const AttnOffsets& off, const T* xq_n,
                   const T* xkv, int B, int Lq, int Lk, const int* k_valid, bool causal,
                   AttnBuf<T>& buf, T* out) {
  int D = cfg.dim, H = cfg.heads, dh = cfg.head_dim();
  std::size_t Rq = std::size_t(B) * Lq, Rk = std::size_t(B) * Lk;
  std::vector<T> Q(Rq * D), K(Rk * D), V(Rk * D);
  kernels::gemm_nn(Q.data(), xq_n, P + off.wq, int(Rq), D, D, T(0));
  kernels::add_bias_rows(Q.data(), P + off.bq, int(Rq), D);
  kernels::gemm_nn(K.data(), xkv, P + off.wk, int(Rk), D, D, T(0));
  kernels::add_bias_rows(K.data(), P + off.bk, int(Rk), D);
  kernels::gemm_nn(V.data(), xkv, P + off.wv, int(Rk), D, D, T(0));
  kernels::add_bias_rows(V.data(), P + off.bv, int(Rk), D);

  buf.qh.resize(Rq * D);
  buf.kh.resize(Rk * D);
  buf.vh.resize(Rk * D);
  pack_heads(Q.data(), B, Lq, H, dh, buf.qh.data());
  pack_heads(K.data(), B, Lk, H, dh, buf.kh.data());
  pack_heads(V.data(), B, Lk, H, dh, buf.vh.data());

  buf.p.resize(std::size_t(B) * H * Lq * Lk);
  std::vector<T> ctx_h(Rq * D);
  T isc = T(1) / std::sqrt(T(dh));
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      std::size_t blk = std::size_t(b) * H + h;
      const T* q = buf.qh.data() + blk * Lq * dh;
      const T* k = buf.kh.data() + blk * Lk * dh;
      const T* v = buf.vh.data() + blk * Lk * dh;
      T* s = buf.p.data() + blk * Lq * Lk;
      kernels::gemm_nt(s, q, k, Lq, dh, Lk, T(0));
      int kv = k_valid[b];
      for (int i = 0; i < Lq; ++i) {
        T* row = s + std::size_t(i) * Lk;
        int limit = causal ? std::min(kv, i + 1) : kv;
        for (int j = 0; j < limit; ++j) row[j] *= isc;
        for (int j = limit; j < Lk; ++j) row[j] = T(kMaskValue);
      }
      kernels::softmax_rows(s, Lq, Lk);
      kernels::gemm_nn(ctx_h.data() + blk * Lq * dh, s, v, Lq, Lk, dh, T(0));
    }
  }
  buf.ctx.resize(Rq * D);
  unpack_heads(ctx_h.data(), B, Lq, H, dh, buf.ctx.data());
  kernels::gemm_nn(out, buf.ctx.data(), P + off.wo, int(Rq), D, D, T(0));
  kernels::add_bias_rows(out, P + off.bo, int(Rq), D);
}

// Accumulates dxq_n, dxkv, and the weight gradients from dout.
template <typename T>
void attention_bwd(const ModelConfig& cfg, const T* P, const AttnOffsets& off, const T* xq_n,
                   const T* xkv, int B, int Lq, int Lk, const AttnBuf<T>& buf, const T* dout,
                   T* dxq_n, T* dxkv, T* G) {
  int D = cfg.dim, H = cfg.heads, dh = cfg.head_dim();
  std::size_t Rq = std::size_t(B) * Lq, Rk = std::size_t(B) * Lk;

  // output projection
  kernels::gemm_tn(G + off.wo, buf.ctx.data(), dout, int(Rq), D, D, T(1));
  kernels::colsum(G + off.bo, dout, int(Rq), D);
  std::vector<T> dctx(Rq * D);
  kernels::gemm_nt(dctx.data(), dout, P + off.wo, int(Rq), D, D, T(0));

  std::vector<T> dctx_h(Rq * D);
  pack_heads(dctx.data(), B, Lq, H, dh, dctx_h.data());

  std::vector<T> dqh(Rq * D, T(0)), dkh(Rk * D, T(0)), dvh(Rk * D, T(0));
  std::vector<T> dp(std::size_t(Lq) * Lk), ds(std::size_t(Lq) * Lk);
  T isc = T(1) / std::sqrt(T(dh));
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      std::size_t blk = std::size_t(b) * H + h;
      const T* q = buf.qh.data() + blk * Lq * dh;
      const T* k = buf.kh.data() + blk * Lk * dh;
      const T* v = buf.vh.data() + blk * Lk * dh;
      const T* p = buf.p.data() + blk * Lq * Lk;
      const T* dc = dctx_h.data() + blk * Lq * dh;

      kernels::gemm_nt(dp.data(), dc, v, Lq, dh, Lk, T(0));
      kernels::gemm_tn(dvh.data() + blk * Lk * dh, p, dc, Lq, Lk, dh, T(0));
      // softmax backward then score scale
      for (int i = 0; i < Lq; ++i) {
        const T* pr = p + std::size_t(i) * Lk;
        const T* dpr = dp.data() + std::size_t(i) * Lk;
        T* dsr = ds.data() + std::size_t(i) * Lk;
        T dot = T(0);
        for (int j = 0; j < Lk; ++j) dot += pr[j] * dpr[j];
        for (int j = 0; j < Lk; ++j) dsr[j] = pr[j] * (dpr[j] - dot) * isc;
      }
      kernels::gemm_nn(dqh.data() + blk * Lq * dh, ds.data(), k, Lq, Lk, dh, T(0));
      kernels::gemm_tn(dkh.data() + blk * Lk * dh, ds.data(), q, Lq, Lk, dh, T(0));
    }
  }

  std::vector<T> dQ(Rq * D), dK(Rk * D), dV(Rk * D);
  unpack_heads(dqh.data(), B, Lq, H, dh, dQ.data());
  unpack_heads(dkh.data(), B, Lk, H, dh, dK.data());
  unpack_heads(dvh.data(), B, Lk, H, dh, dV.data());

  kernels::gemm_tn(G + off.wq, xq_n, dQ.data(), int(Rq), D, D, T(1));
  kernels::colsum(G + off.bq, dQ.data(), int(Rq), D);
  kernels::gemm_nt(dxq_n, dQ.data(), P + off.wq, int(Rq), D, D, T(1));

  kernels::gemm_tn(G + off.wk, xkv, dK.data(), int(Rk), D, D, T(1));
  kernels::colsum(G + off.bk, dK.data(), int(Rk), D);
  kernels::gemm_nt(dxkv, dK.data(), P + off.wk, int(Rk), D, D, T(1));

  kernels::gemm_tn(G + off.wv, xkv, dV.data(), int(Rk), D, D, T(1));
  kernels::colsum(G + off.bv, dV.data(), int(Rk), D);
  kernels::gemm_nt(dxkv, dV.data(), P + off.wv, int(Rk), D, D, T(1));
}

template <typename T>
void ffn_fwd(const ModelConfig& cfg, const T* P, std::size_t w1, std::size_t b1, std::size_t w2,
             std::size_t b2, const T* xn, int rows, FfnBuf<T>& buf, T* out) {
  int D = cfg.dim, F = cfg.ff_dim;
  buf.h1.resize(std::size_t(rows) * F);
  buf.hr.resize(std::size_t(rows) * F);
  kernels::gemm_nn(buf.h1.data(), xn, P + w1, rows, D, F, T(0));
  kernels::add_bias_rows(buf.h1.data(), P + b1, rows, F);
  kernels::gelu_fwd(buf.hr.data(), buf.h1.data(), buf.h1.size());
  kernels::gemm_nn(out, buf.hr.data(), P + w2, rows, F, D, T(0));
  kernels::add_bias_rows(out, P + b2, rows, D);
}

template <typename T>
void ffn_bwd(const ModelConfig& cfg, const T* P, std::size_t w1, std::size_t b1, std::size_t w2,
             std::size_t b2, const T* xn, int rows, const FfnBuf<T>& buf, const T* dout, T* dxn,
             T* G) {
  int D = cfg.dim, F = cfg.ff_dim;
  kernels::gemm_tn(G + w2, buf.hr.data(), dout, rows, F, D, T(1));
  kernels::colsum(G + b2, dout, rows, D);
  std::vector<T> dhr(std::size_t(rows) * F);
  kernels::gemm_nt(dhr.data(), dout, P + w2, rows, D, F, T(0));
  std::vector<T> dh1(std::size_t(rows) * F);
  kernels::gelu_bwd(dh1.data(), buf.h1.data(), dhr.data(), dh1.size());
  kernels::gemm_tn(G + w1, xn, dh1.data(), rows, D, F, T(1));
  kernels::colsum(G + b1, dh1.data(), rows, F);
  kernels::gemm_nt(dxn, dh1.data(), P + w1, rows, F, D, T(1));
}

template <typename T>
void embed_fwd(const T* E, const T* posenc, const std::vector<TokenId>& ids, int B, int L, int D,
               T* out) {
  T scale = std::sqrt(T(D));
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < L; ++t) {
      std::size_t r = std::size_t(b) * L + t;
      const T* e = E + std::size_t(ids[r]) * D;
      const T* pe = posenc + std::size_t(t) * D;
      T* o = out + r * D;
      for (int j = 0; j < D; ++j) o[j] = e[j] * scale + pe[j];
    }
  }
}

template <typename T>
void embed_bwd(T* dE, const std::vector<TokenId>& ids, int B, int L, int D, const T* dx) {
  T scale = std::sqrt(T(D));
  for (std::size_t r = 0; r < std::size_t(B) * L; ++r) {
    T* e = dE + std::size_t(ids[r]) * D;
    const T* d = dx + r * D;
    for (int j = 0; j < D; ++j) e[j] += d[j] * scale;
  }
}

}  // namespace

template <typename T>
Transformer<T>::Transformer(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build_layout();
  // fixed sinusoidal positional encodings
  posenc_.assign(std::size_t(cfg_.max_len) * cfg_.dim, T(0));
  for (int t = 0; t < cfg_.max_len; ++t) {
    for (int j = 0; j < cfg_.dim; j += 2) {
      double angle = t / std::pow(10000.0, double(j) / cfg_.dim);
      posenc_[std::size_t(t) * cfg_.dim + j] = T(std::sin(angle));
      if (j + 1 < cfg_.dim) posenc_[std::size_t(t) * cfg_.dim + j + 1] = T(std::cos(angle));
    }
  }
  init_parameters(cfg_.seed);
}

template <typename T>
void Transformer<T>::build_layout() {
  Layout layout(cfg_);
  blocks_ = layout.blocks;
  params_.assign(layout.total, T(0));
}

template <typename T>
void Transformer<T>::init_parameters(uint64_t seed) {
  Layout L(cfg_);
  Rng rng(seed ^ 0x5a17ab1edecafe11ULL);
  std::size_t D = cfg_.dim;
  auto fill_normal = [&](std::size_t off, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = T(rng.normal() * stddev);
  };
  auto fill_xavier = [&](std::size_t off, std::size_t fan_in, std::size_t fan_out) {
    double a = std::sqrt(6.0 / double(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i)
      params_[off + i] = T((rng.uniform() * 2.0 - 1.0) * a);
  };
  auto ones = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = T(1);
  };
  auto zeros = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = T(0);
  };

  std::size_t V = cfg_.vocab_size;
  fill_normal(L.enc_embed, V * D, 0.02);
  fill_normal(L.dec_embed, V * D, 0.02);
  auto init_attn = [&](const AttnOffsets& a) {
    fill_xavier(a.wq, D, D);
    zeros(a.bq, D);
    fill_xavier(a.wk, D, D);
    zeros(a.bk, D);
    fill_xavier(a.wv, D, D);
    zeros(a.bv, D);
    fill_xavier(a.wo, D, D);
    zeros(a.bo, D);
  };
  for (const auto& e : L.enc) {
    ones(e.ln1g, D);
    zeros(e.ln1b, D);
    init_attn(e.attn);
    ones(e.ln2g, D);
    zeros(e.ln2b, D);
    fill_xavier(e.w1, D, cfg_.ff_dim);
    zeros(e.b1, cfg_.ff_dim);
    fill_xavier(e.w2, cfg_.ff_dim, D);
    zeros(e.b2, D);
  }
  ones(L.enc_fin_g, D);
  zeros(L.enc_fin_b, D);
  for (const auto& d : L.dec) {
    ones(d.ln1g, D);
    zeros(d.ln1b, D);
    init_attn(d.self_attn);
    ones(d.ln2g, D);
    zeros(d.ln2b, D);
    init_attn(d.cross_attn);
    ones(d.ln3g, D);
    zeros(d.ln3b, D);
    fill_xavier(d.w1, D, cfg_.ff_dim);
    zeros(d.b1, cfg_.ff_dim);
    fill_xavier(d.w2, cfg_.ff_dim, D);
    zeros(d.b2, D);
  }
  ones(L.dec_fin_g, D);
  zeros(L.dec_fin_b, D);
  fill_xavier(L.out_w, D, V);
  zeros(L.out_b, V);
}

template <typename T>
bool Transformer<T>::finite() const {
  for (T v : params_)
    if (!std::isfinite(double(v))) return false;
  return true;
}

namespace {

// Shared encoder forward: fills ws encoder buffers, leaves the final
// memory in ws.memory.
template <typename T>
void encoder_forward(const ModelConfig& cfg, const Layout& L, const T* P, const T* posenc,
                     const std::vector<TokenId>& src, int B, int Ls, const std::vector<int>& sval,
                     Rng* drop_rng, Workspace<T>& ws) {
  int D = cfg.dim;
  std::size_t Re = std::size_t(B) * Ls;
  ws.enc_x.resize(Re * D);
  embed_fwd(P + L.enc_embed, posenc, src, B, Ls, D, ws.enc_x.data());
  dropout_fwd(ws.enc_x.data(), Re * D, cfg.dropout, drop_rng, ws.enc_drop0);

  ws.enc_attn.resize(cfg.layers);
  ws.enc_ffn.resize(cfg.layers);
  std::vector<T> sublayer(Re * D);
  for (int l = 0; l < cfg.layers; ++l) {
    auto& ab = ws.enc_attn[l];
    ab.xhat.resize(Re * D);
    ab.istd.resize(Re);
    ab.xn.resize(Re * D);
    layernorm_fwd(ws.enc_x.data(), int(Re), D, P + L.enc[l].ln1g, P + L.enc[l].ln1b,
                  ab.xn.data(), ab.xhat.data(), ab.istd.data());
    attention_fwd(cfg, P, L.enc[l].attn, ab.xn.data(), ab.xn.data(), B, Ls, Ls, sval.data(),
                  false, ab, sublayer.data());
    dropout_fwd(sublayer.data(), Re * D, cfg.dropout, drop_rng, ab.drop);
    kernels::axpy(ws.enc_x.data(), sublayer.data(), T(1), Re * D);

    auto& fb = ws.enc_ffn[l];
    fb.xhat.resize(Re * D);
    fb.istd.resize(Re);
    fb.xn.resize(Re * D);
    layernorm_fwd(ws.enc_x.data(), int(Re), D, P + L.enc[l].ln2g, P + L.enc[l].ln2b,
                  fb.xn.data(), fb.xhat.data(), fb.istd.data());
    ffn_fwd(cfg, P, L.enc[l].w1, L.enc[l].b1, L.enc[l].w2, L.enc[l].b2, fb.xn.data(), int(Re), fb,
            sublayer.data());
    dropout_fwd(sublayer.data(), Re * D, cfg.dropout, drop_rng, fb.drop);
    kernels::axpy(ws.enc_x.data(), sublayer.data(), T(1), Re * D);
  }
  ws.enc_fin_xhat.resize(Re * D);
  ws.enc_fin_istd.resize(Re);
  ws.memory.resize(Re * D);
  layernorm_fwd(ws.enc_x.data(), int(Re), D, P + L.enc_fin_g, P + L.enc_fin_b, ws.memory.data(),
                ws.enc_fin_xhat.data(), ws.enc_fin_istd.data());
}

// Decoder forward over ws.memory; fills ws decoder buffers and logits.
// When logits_last_only is set, logits hold one row per batch item (the
// last valid position), not softmaxed.
template <typename T>
void decoder_forward(const ModelConfig& cfg, const Layout& L, const T* P, const T* posenc,
                     const std::vector<TokenId>& dec_in, int B, int Ls, int Lt,
                     const std::vector<int>& sval, const std::vector<int>& tval, Rng* drop_rng,
                     bool logits_last_only, Workspace<T>& ws) {
  int D = cfg.dim, V = cfg.vocab_size;
  std::size_t Rd = std::size_t(B) * Lt;
  ws.dec_x.resize(Rd * D);
  embed_fwd(P + L.dec_embed, posenc, dec_in, B, Lt, D, ws.dec_x.data());
  dropout_fwd(ws.dec_x.data(), Rd * D, cfg.dropout, drop_rng, ws.dec_drop0);

  ws.dec_self.resize(cfg.layers);
  ws.dec_cross.resize(cfg.layers);
  ws.dec_ffn.resize(cfg.layers);
  std::vector<T> sublayer(Rd * D);
  for (int l = 0; l < cfg.layers; ++l) {
    auto& sb = ws.dec_self[l];
    sb.xhat.resize(Rd * D);
    sb.istd.resize(Rd);
    sb.xn.resize(Rd * D);
    layernorm_fwd(ws.dec_x.data(), int(Rd), D, P + L.dec[l].ln1g, P + L.dec[l].ln1b, sb.xn.data(),
                  sb.xhat.data(), sb.istd.data());
    attention_fwd(cfg, P, L.dec[l].self_attn, sb.xn.data(), sb.xn.data(), B, Lt, Lt, tval.data(),
                  true, sb, sublayer.data());
    dropout_fwd(sublayer.data(), Rd * D, cfg.dropout, drop_rng, sb.drop);
    kernels::axpy(ws.dec_x.data(), sublayer.data(), T(1), Rd * D);

    auto& cb = ws.dec_cross[l];
    cb.xhat.resize(Rd * D);
    cb.istd.resize(Rd);
    cb.xn.resize(Rd * D);
    layernorm_fwd(ws.dec_x.data(), int(Rd), D, P + L.dec[l].ln2g, P + L.dec[l].ln2b, cb.xn.data(),
                  cb.xhat.data(), cb.istd.data());
    attention_fwd(cfg, P, L.dec[l].cross_attn, cb.xn.data(), ws.memory.data(), B, Lt, Ls,
                  sval.data(), false, cb, sublayer.data());
    dropout_fwd(sublayer.data(), Rd * D, cfg.dropout, drop_rng, cb.drop);
    kernels::axpy(ws.dec_x.data(), sublayer.data(), T(1), Rd * D);

    auto& fb = ws.dec_ffn[l];
    fb.xhat.resize(Rd * D);
    fb.istd.resize(Rd);
    fb.xn.resize(Rd * D);
    layernorm_fwd(ws.dec_x.data(), int(Rd), D, P + L.dec[l].ln3g, P + L.dec[l].ln3b, fb.xn.data(),
                  fb.xhat.data(), fb.istd.data());
    ffn_fwd(cfg, P, L.dec[l].w1, L.dec[l].b1, L.dec[l].w2, L.dec[l].b2, fb.xn.data(), int(Rd), fb,
            sublayer.data());
    dropout_fwd(sublayer.data(), Rd * D, cfg.dropout, drop_rng, fb.drop);
    kernels::axpy(ws.dec_x.data(), sublayer.data(), T(1), Rd * D);
  }

  ws.dec_fin_xhat.resize(Rd * D);
  ws.dec_fin_istd.resize(Rd);
  ws.dec_fin_out.resize(Rd * D);
  layernorm_fwd(ws.dec_x.data(), int(Rd), D, P + L.dec_fin_g, P + L.dec_fin_b,
                ws.dec_fin_out.data(), ws.dec_fin_xhat.data(), ws.dec_fin_istd.data());

  if (logits_last_only) {
    std::vector<T> last(std::size_t(B) * D);
    for (int b = 0; b < B; ++b) {
      int pos = std::max(0, tval[b] - 1);
      std::memcpy(last.data() + std::size_t(b) * D,
                  ws.dec_fin_out.data() + (std::size_t(b) * Lt + pos) * D, sizeof(T) * D);
    }
    ws.logits.resize(std::size_t(B) * V);
    kernels::gemm_nn(ws.logits.data(), last.data(), P + L.out_w, B, D, V, T(0));
    kernels::add_bias_rows(ws.logits.data(), P + L.out_b, B, V);
  } else {
    ws.logits.resize(Rd * V);
    kernels::gemm_nn(ws.logits.data(), ws.dec_fin_out.data(), P + L.out_w, int(Rd), D, V, T(0));
    kernels::add_bias_rows(ws.logits.data(), P + L.out_b, int(Rd), V);
  }
}

}  // namespace

template <typename T>
T Transformer<T>::forward_loss(const EncodedBatch& batch, Rng* dropout_rng,
                               std::vector<T>* grads) const {
  const Layout L(cfg_);
  const T* P = params_.data();
  int B = batch.batch, Ls = batch.src_len, Lt = batch.tgt_len;
  int D = cfg_.dim, V = cfg_.vocab_size;
  if (Ls > cfg_.max_len || Lt > cfg_.max_len)
    throw ContractViolation("batch exceeds configured max_len");
  std::size_t Re = std::size_t(B) * Ls, Rd = std::size_t(B) * Lt;

  Workspace<T> ws;
  encoder_forward(cfg_, L, P, posenc_.data(), batch.src, B, Ls, batch.src_valid, dropout_rng, ws);
  decoder_forward(cfg_, L, P, posenc_.data(), batch.dec_in, B, Ls, Lt, batch.src_valid,
                  batch.tgt_valid, dropout_rng, false, ws);

  // softmax over logits, then token-mean NLL over the counted positions
  kernels::softmax_rows(ws.logits.data(), int(Rd), V);
  std::size_t count = 0;
  double nll = 0.0;
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < batch.tgt_valid[b]; ++t) {
      std::size_t r = std::size_t(b) * Lt + t;
      T p = ws.logits[r * V + batch.dec_tgt[r]];
      nll += -std::log(std::max(double(p), 1e-30));
      ++count;
    }
  }
  if (count == 0) throw ContractViolation("batch has no target tokens");
  T loss = T(nll / double(count));
  if (!std::isfinite(double(loss))) throw NumericError("non-finite loss in forward pass");
  if (!grads) return loss;

  // ---- backward ----
  std::vector<T>& G = *grads;
  if (G.size() != params_.size()) G.assign(params_.size(), T(0));
  else std::fill(G.begin(), G.end(), T(0));

  // dlogits: probs with 1 subtracted at the target, scaled by 1/count
  std::vector<T>& dlogits = ws.logits;
  T inv = T(1) / T(count);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Lt; ++t) {
      std::size_t r = std::size_t(b) * Lt + t;
      T* row = dlogits.data() + r * V;
      if (t < batch.tgt_valid[b]) {
        row[batch.dec_tgt[r]] -= T(1);
        for (int j = 0; j < V; ++j) row[j] *= inv;
      } else {
        std::fill(row, row + V, T(0));
      }
    }
  }

  kernels::gemm_tn(G.data() + L.out_w, ws.dec_fin_out.data(), dlogits.data(), int(Rd), D, V, T(1));
  kernels::colsum(G.data() + L.out_b, dlogits.data(), int(Rd), V);
  std::vector<T> d_hd(Rd * D);
  kernels::gemm_nt(d_hd.data(), dlogits.data(), P + L.out_w, int(Rd), V, D, T(0));

  std::vector<T> d_dec(Rd * D, T(0));
  layernorm_bwd(d_hd.data(), ws.dec_fin_xhat.data(), ws.dec_fin_istd.data(), P + L.dec_fin_g,
                int(Rd), D, G.data() + L.dec_fin_g, G.data() + L.dec_fin_b, d_dec.data());

  std::vector<T> d_mem(Re * D, T(0));
  std::vector<T> d_sub(Rd * D);
  std::vector<T> d_xn(Rd * D);
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    // FFN sublayer
    {
      auto& fb = ws.dec_ffn[l];
      std::memcpy(d_sub.data(), d_dec.data(), sizeof(T) * Rd * D);
      dropout_bwd(d_sub.data(), fb.drop);
      std::fill(d_xn.begin(), d_xn.end(), T(0));
      ffn_bwd(cfg_, P, L.dec[l].w1, L.dec[l].b1, L.dec[l].w2, L.dec[l].b2, fb.xn.data(), int(Rd),
              fb, d_sub.data(), d_xn.data(), G.data());
      layernorm_bwd(d_xn.data(), fb.xhat.data(), fb.istd.data(), P + L.dec[l].ln3g, int(Rd), D,
                    G.data() + L.dec[l].ln3g, G.data() + L.dec[l].ln3b, d_dec.data());
    }
    // cross-attention sublayer
    {
      auto& cb = ws.dec_cross[l];
      std::memcpy(d_sub.data(), d_dec.data(), sizeof(T) * Rd * D);
      dropout_bwd(d_sub.data(), cb.drop);
      std::fill(d_xn.begin(), d_xn.end(), T(0));
      attention_bwd(cfg_, P, L.dec[l].cross_attn, cb.xn.data(), ws.memory.data(), B, Lt, Ls, cb,
                    d_sub.data(), d_xn.data(), d_mem.data(), G.data());
      layernorm_bwd(d_xn.data(), cb.xhat.data(), cb.istd.data(), P + L.dec[l].ln2g, int(Rd), D,
                    G.data() + L.dec[l].ln2g, G.data() + L.dec[l].ln2b, d_dec.data());
    }
    // self-attention sublayer
    {
      auto& sb = ws.dec_self[l];
      std::memcpy(d_sub.data(), d_dec.data(), sizeof(T) * Rd * D);
      dropout_bwd(d_sub.data(), sb.drop);
      std::fill(d_xn.begin(), d_xn.end(), T(0));
      attention_bwd(cfg_, P, L.dec[l].self_attn, sb.xn.data(), sb.xn.data(), B, Lt, Lt, sb,
                    d_sub.data(), d_xn.data(), d_xn.data(), G.data());
      layernorm_bwd(d_xn.data(), sb.xhat.data(), sb.istd.data(), P + L.dec[l].ln1g, int(Rd), D,
                    G.data() + L.dec[l].ln1g, G.data() + L.dec[l].ln1b, d_dec.data());
    }
  }
  dropout_bwd(d_dec.data(), ws.dec_drop0);
  embed_bwd(G.data() + L.dec_embed, batch.dec_in, B, Lt, D, d_dec.data());

  // encoder backward, seeded by the accumulated memory gradient
  std::vector<T> d_enc(Re * D, T(0));
  layernorm_bwd(d_mem.data(), ws.enc_fin_xhat.data(), ws.enc_fin_istd.data(), P + L.enc_fin_g,
                int(Re), D, G.data() + L.enc_fin_g, G.data() + L.enc_fin_b, d_enc.data());
  std::vector<T> d_sub_e(Re * D);
  std::vector<T> d_xn_e(Re * D);
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    {
      auto& fb = ws.enc_ffn[l];
      std::memcpy(d_sub_e.data(), d_enc.data(), sizeof(T) * Re * D);
      dropout_bwd(d_sub_e.data(), fb.drop);
      std::fill(d_xn_e.begin(), d_xn_e.end(), T(0));
      ffn_bwd(cfg_, P, L.enc[l].w1, L.enc[l].b1, L.enc[l].w2, L.enc[l].b2, fb.xn.data(), int(Re),
              fb, d_sub_e.data(), d_xn_e.data(), G.data());
      layernorm_bwd(d_xn_e.data(), fb.xhat.data(), fb.istd.data(), P + L.enc[l].ln2g, int(Re), D,
                    G.data() + L.enc[l].ln2g, G.data() + L.enc[l].ln2b, d_enc.data());
    }
    {
      auto& ab = ws.enc_attn[l];
      std::memcpy(d_sub_e.data(), d_enc.data(), sizeof(T) * Re * D);
      dropout_bwd(d_sub_e.data(), ab.drop);
      std::fill(d_xn_e.begin(), d_xn_e.end(), T(0));
      attention_bwd(cfg_, P, L.enc[l].attn, ab.xn.data(), ab.xn.data(), B, Ls, Ls, ab,
                    d_sub_e.data(), d_xn_e.data(), d_xn_e.data(), G.data());
      layernorm_bwd(d_xn_e.data(), ab.xhat.data(), ab.istd.data(), P + L.enc[l].ln1g, int(Re), D,
                    G.data() + L.enc[l].ln1g, G.data() + L.enc[l].ln1b, d_enc.data());
    }
  }
  dropout_bwd(d_enc.data(), ws.enc_drop0);
  embed_bwd(G.data() + L.enc_embed, batch.src, B, Ls, D, d_enc.data());

  return loss;
}

template <typename T>
EncodedMemory<T> Transformer<T>::encode_memory(const std::vector<TokenId>& src) const {
  const Layout L(cfg_);
  std::vector<TokenId> ids = src;
  if (ids.empty()) ids.push_back(BpeVocab::kEos);
  if (int(ids.size()) > cfg_.max_len) ids.resize(cfg_.max_len);
  std::vector<int> sval{int(ids.size())};
  Workspace<T> ws;
  encoder_forward(cfg_, L, params_.data(), posenc_.data(), ids, 1, int(ids.size()), sval, nullptr,
                  ws);
  EncodedMemory<T> mem;
  mem.src_len = int(ids.size());
  mem.valid = int(ids.size());
  mem.data = std::move(ws.memory);
  return mem;
}

template <typename T>
std::vector<std::vector<T>> Transformer<T>::next_token_logprobs(
    const EncodedMemory<T>& memory, const std::vector<std::vector<TokenId>>& prefixes) const {
  const Layout L(cfg_);
  int n = int(prefixes.size());
  if (n == 0) return {};
  int Lt = 0;
  for (const auto& p : prefixes) Lt = std::max(Lt, int(p.size()));
  if (Lt > cfg_.max_len) throw ContractViolation("decode prefix exceeds max_len");

  std::vector<TokenId> dec_in(std::size_t(n) * Lt, BpeVocab::kPad);
  std::vector<int> tval(n), sval(n, memory.valid);
  for (int i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < prefixes[i].size(); ++t)
      dec_in[std::size_t(i) * Lt + t] = prefixes[i][t];
    tval[i] = int(prefixes[i].size());
  }

  // replicate the shared memory per prefix row block
  Workspace<T> ws;
  std::size_t mrows = std::size_t(memory.src_len) * cfg_.dim;
  ws.memory.resize(std::size_t(n) * mrows);
  for (int i = 0; i < n; ++i)
    std::memcpy(ws.memory.data() + std::size_t(i) * mrows, memory.data.data(),
                sizeof(T) * mrows);

  decoder_forward(cfg_, L, params_.data(), posenc_.data(), dec_in, n, memory.src_len, Lt, sval,
                  tval, nullptr, true, ws);

  int V = cfg_.vocab_size;
  std::vector<std::vector<T>> out(n, std::vector<T>(V));
  for (int i = 0; i < n; ++i) {
    T* row = ws.logits.data() + std::size_t(i) * V;
    T mx = row[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < V; ++j) sum += std::exp(double(row[j] - mx));
    double lse = double(mx) + std::log(sum);
    for (int j = 0; j < V; ++j) out[i][j] = T(double(row[j]) - lse);
  }
  return out;
}

EncodedBatch make_batch(
    const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>& encoded_pairs,
    int max_len) {
  EncodedBatch b;
  b.batch = int(encoded_pairs.size());
  if (b.batch == 0) throw ContractViolation("empty batch");
  std::vector<std::vector<TokenId>> srcs, tgts;
  for (const auto& [src, tgt] : encoded_pairs) {
    std::vector<TokenId> s = src;
    if (int(s.size()) > max_len) s.resize(max_len);
    if (s.empty()) s.push_back(BpeVocab::kEos);
    std::vector<TokenId> t = tgt;
    if (int(t.size()) > max_len - 1) t.resize(max_len - 1);
    srcs.push_back(std::move(s));
    tgts.push_back(std::move(t));
  }
  for (const auto& s : srcs) b.src_len = std::max(b.src_len, int(s.size()));
  for (const auto& t : tgts) b.tgt_len = std::max(b.tgt_len, int(t.size()) + 1);
  b.src.assign(std::size_t(b.batch) * b.src_len, BpeVocab::kPad);
  b.dec_in.assign(std::size_t(b.batch) * b.tgt_len, BpeVocab::kPad);
  b.dec_tgt.assign(std::size_t(b.batch) * b.tgt_len, BpeVocab::kPad);
  b.src_valid.resize(b.batch);
  b.tgt_valid.resize(b.batch);
  for (int i = 0; i < b.batch; ++i) {
    const auto& s = srcs[i];
    const auto& t = tgts[i];
    for (std::size_t j = 0; j < s.size(); ++j) b.src[std::size_t(i) * b.src_len + j] = s[j];
    b.src_valid[i] = int(s.size());
    b.dec_in[std::size_t(i) * b.tgt_len] = BpeVocab::kBos;
    for (std::size_t j = 0; j < t.size(); ++j) {
      b.dec_in[std::size_t(i) * b.tgt_len + j + 1] = t[j];
      b.dec_tgt[std::size_t(i) * b.tgt_len + j] = t[j];
    }
    b.dec_tgt[std::size_t(i) * b.tgt_len + t.size()] = BpeVocab::kEos;
    b.tgt_valid[i] = int(t.size()) + 1;
  }
  return b;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace styletag
