#pragma once
// Layer zoo: convolutions, norms, Swish, multi-head self-attention and
// the pre-norm transformer layer (FFN width 2d, Swish activation).

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvt/tensor.hpp"

namespace mvt {

enum class Mode { train, eval };

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

// ======================================================================
//  Convolution
// ======================================================================

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int groups = 1;  // 1 = dense, in_channels = depthwise
  bool same_pad = true;
  bool bias = false;
};

// Cross-correlation with zero padding. With same_pad the padding is
// (k-1)/2 on each side, which gives H' = ceil(H/stride) exactly.
inline Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w,
                     const Tensor& b = {}) {
  check(x.rank() == 4, "conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
  check(x.dim(1) == spec.in_channels,
        "conv2d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
            std::to_string(spec.in_channels));
  check(spec.groups >= 1 && spec.in_channels % spec.groups == 0 &&
            spec.out_channels % spec.groups == 0,
        "conv2d: channels (" + std::to_string(spec.in_channels) + "->" +
            std::to_string(spec.out_channels) + ") not divisible by groups " +
            std::to_string(spec.groups));
  check(!spec.same_pad || spec.kernel % 2 == 1, "conv2d: same padding requires an odd kernel");
  const int cg = spec.in_channels / spec.groups;
  check(w.rank() == 4 && w.dim(0) == spec.out_channels && w.dim(1) == cg &&
            w.dim(2) == spec.kernel && w.dim(3) == spec.kernel,
        "conv2d: weight shape " + shape_str(w.shape()) + " does not match spec");
  if (spec.bias)
    check(b.defined() && b.rank() == 1 && b.dim(0) == spec.out_channels,
          "conv2d: bias shape mismatch");

  const int bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const int k = spec.kernel, s = spec.stride, pad = spec.same_pad ? (k - 1) / 2 : 0;
  const int oh = (h + 2 * pad - k) / s + 1;
  const int ow = (wd + 2 * pad - k) / s + 1;
  check(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");
  const int og = spec.out_channels / spec.groups;
  const int64_t in_plane = static_cast<int64_t>(h) * wd;
  const int64_t out_plane = static_cast<int64_t>(oh) * ow;

  Tensor out({bsz, spec.out_channels, oh, ow});

  if (k == 1 && s == 1 && spec.groups == 1) {
    // Pointwise: one GEMM per sample.
    for (int n = 0; n < bsz; ++n)
      detail::gemm_nn(w.data(), x.data() + n * spec.in_channels * in_plane,
                      out.data() + n * spec.out_channels * out_plane, spec.out_channels,
                      spec.in_channels, static_cast<int>(in_plane));
  } else {
    // General path: im2col per (sample, group) then GEMM.
    const int krows = cg * k * k;
    std::vector<float> col(static_cast<size_t>(krows) * out_plane);
    for (int n = 0; n < bsz; ++n) {
      for (int g = 0; g < spec.groups; ++g) {
        const float* xin = x.data() + (static_cast<int64_t>(n) * spec.in_channels + g * cg) * in_plane;
        for (int c = 0; c < cg; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              float* crow = col.data() + (static_cast<int64_t>((c * k + ky) * k + kx)) * out_plane;
              for (int oy = 0; oy < oh; ++oy) {
                int iy = oy * s - pad + ky;
                float* cptr = crow + static_cast<int64_t>(oy) * ow;
                if (iy < 0 || iy >= h) {
                  std::fill(cptr, cptr + ow, 0.0f);
                  continue;
                }
                const float* xrow = xin + c * in_plane + static_cast<int64_t>(iy) * wd;
                for (int ox = 0; ox < ow; ++ox) {
                  int ix = ox * s - pad + kx;
                  cptr[ox] = (ix >= 0 && ix < wd) ? xrow[ix] : 0.0f;
                }
              }
            }
          }
        }
        detail::gemm_nn(w.data() + static_cast<int64_t>(g) * og * krows, col.data(),
                        out.data() + (static_cast<int64_t>(n) * spec.out_channels + g * og) * out_plane,
                        og, krows, static_cast<int>(out_plane));
      }
    }
  }
  if (spec.bias) {
    for (int n = 0; n < bsz; ++n)
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        float bv = b[oc];
        float* optr = out.data() + (static_cast<int64_t>(n) * spec.out_channels + oc) * out_plane;
        for (int64_t i = 0; i < out_plane; ++i) optr[i] += bv;
      }
  }

  auto backward = [x, w, spec, bsz, h, wd, k, s, pad, oh, ow, cg, og, in_plane, out_plane](
                      const Tensor& gout, const std::vector<bool>& need) {
    std::vector<Tensor> parts(3);
    Tensor dx, dw, db;
    if (need[0]) dx = Tensor(x.shape());
    if (need[1]) dw = Tensor(w.shape());
    if (need.size() > 2 && need[2]) db = Tensor(Shape{spec.out_channels});
    const int64_t wplane = static_cast<int64_t>(k) * k;
    for (int n = 0; n < bsz; ++n) {
      for (int g = 0; g < spec.groups; ++g) {
        for (int oc = g * og; oc < (g + 1) * og; ++oc) {
          const float* gptr = gout.data() + (static_cast<int64_t>(n) * spec.out_channels + oc) * out_plane;
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              float gval = gptr[static_cast<int64_t>(oy) * ow + ox];
              if (gval == 0.0f) continue;
              if (db.defined()) db.data()[oc] += gval;
              for (int c = 0; c < cg; ++c) {
                int ic = g * cg + c;
                const float* wrow = w.data() + ((static_cast<int64_t>(oc) * cg) + c) * wplane;
                for (int ky = 0; ky < k; ++ky) {
                  int iy = oy * s - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < k; ++kx) {
                    int ix = ox * s - pad + kx;
                    if (ix < 0 || ix >= wd) continue;
                    int64_t xi = (static_cast<int64_t>(n) * spec.in_channels + ic) * in_plane +
                                 static_cast<int64_t>(iy) * wd + ix;
                    if (dx.defined()) dx.data()[xi] += gval * wrow[ky * k + kx];
                    if (dw.defined())
                      dw.data()[((static_cast<int64_t>(oc) * cg) + c) * wplane + ky * k + kx] +=
                          gval * x.data()[xi];
                  }
                }
              }
            }
          }
        }
      }
    }
    parts[0] = dx;
    parts[1] = dw;
    parts[2] = db;
    return parts;
  };

  if (spec.bias)
    detail::record_op(out, "conv2d", {&x, &w, &b}, backward);
  else
    detail::record_op(out, "conv2d", {&x, &w}, backward);
  return out;
}

struct Conv2d {
  ConvSpec spec;
  Tensor w, b;

  Conv2d() = default;
  explicit Conv2d(ConvSpec s) : spec(s) {
    w = Tensor({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel});
    if (spec.bias) b = Tensor(Shape{spec.out_channels});
  }

  Tensor forward(const Tensor& x) const { return conv2d(x, spec, w, spec.bias ? b : Tensor{}); }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    f(join_name(prefix, "weight"), w, /*decay=*/true);
    if (spec.bias) f(join_name(prefix, "bias"), b, /*decay=*/false);
  }
  template <class F>
  void visit_buffers(const std::string&, F&&) {}
};

// ======================================================================
//  Normalization
// ======================================================================

struct BatchNorm {
  int channels = 0;
  float momentum = 0.1f;
  float eps = 1e-5f;
  Tensor gamma, beta;
  Tensor running_mean, running_var;

  BatchNorm() = default;
  explicit BatchNorm(int c)
      : channels(c),
        gamma(Tensor::full({c}, 1.0f)),
        beta(Tensor(Shape{c})),
        running_mean(Tensor(Shape{c})),
        running_var(Tensor::full({c}, 1.0f)) {}

  // Train mode normalizes with batch statistics (population variance)
  // and updates running stats in place; eval mode uses running stats.
  Tensor forward(const Tensor& x, Mode mode) {
    check(x.rank() == 4 && x.dim(1) == channels,
          "batchnorm: expected [B," + std::to_string(channels) + ",H,W], got " +
              shape_str(x.shape()));
    const int bsz = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    const int64_t m = static_cast<int64_t>(bsz) * plane;

    std::vector<float> mean(static_cast<size_t>(channels));
    std::vector<float> invstd(static_cast<size_t>(channels));
    if (mode == Mode::train) {
      std::vector<float> var(static_cast<size_t>(channels));
      for (int c = 0; c < channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int n = 0; n < bsz; ++n) {
          const float* p = x.data() + (static_cast<int64_t>(n) * channels + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
          }
        }
        double mu = sum / static_cast<double>(m);
        double v = sq / static_cast<double>(m) - mu * mu;
        if (v < 0.0) v = 0.0;
        mean[c] = static_cast<float>(mu);
        var[c] = static_cast<float>(v);
        invstd[c] = static_cast<float>(1.0 / std::sqrt(v + eps));
      }
      Tensor rm(Shape{channels}), rv(Shape{channels});
      for (int c = 0; c < channels; ++c) {
        rm.data()[c] = (1.0f - momentum) * running_mean[c] + momentum * mean[c];
        rv.data()[c] = (1.0f - momentum) * running_var[c] + momentum * var[c];
      }
      running_mean = rm;
      running_var = rv;
    } else {
      for (int c = 0; c < channels; ++c) {
        mean[c] = running_mean[c];
        invstd[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
      }
    }

    Tensor out(x.shape());
    for (int n = 0; n < bsz; ++n)
      for (int c = 0; c < channels; ++c) {
        const float* p = x.data() + (static_cast<int64_t>(n) * channels + c) * plane;
        float* o = out.data() + (static_cast<int64_t>(n) * channels + c) * plane;
        float sc = gamma[c] * invstd[c];
        float sh = beta[c] - mean[c] * sc;
        for (int64_t i = 0; i < plane; ++i) o[i] = p[i] * sc + sh;
      }

    bool train_stats = mode == Mode::train;
    auto bw = [x, g = gamma, mean, invstd, train_stats, bsz, channels = channels, plane, m](
                  const Tensor& gout, const std::vector<bool>& need) {
      std::vector<Tensor> parts(3);
      Tensor dgamma(Shape{channels}), dbeta(Shape{channels});
      std::vector<double> sum_g(static_cast<size_t>(channels), 0.0);
      std::vector<double> sum_gx(static_cast<size_t>(channels), 0.0);
      for (int n = 0; n < bsz; ++n)
        for (int c = 0; c < channels; ++c) {
          const float* gp = gout.data() + (static_cast<int64_t>(n) * channels + c) * plane;
          const float* xp = x.data() + (static_cast<int64_t>(n) * channels + c) * plane;
          double sg = 0.0, sgx = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            sg += gp[i];
            sgx += static_cast<double>(gp[i]) * (xp[i] - mean[c]) * invstd[c];
          }
          sum_g[c] += sg;
          sum_gx[c] += sgx;
        }
      for (int c = 0; c < channels; ++c) {
        dgamma.data()[c] = static_cast<float>(sum_gx[c]);
        dbeta.data()[c] = static_cast<float>(sum_g[c]);
      }
      if (need[0]) {
        Tensor dx(x.shape());
        for (int n = 0; n < bsz; ++n)
          for (int c = 0; c < channels; ++c) {
            const float* gp = gout.data() + (static_cast<int64_t>(n) * channels + c) * plane;
            const float* xp = x.data() + (static_cast<int64_t>(n) * channels + c) * plane;
            float* dp = dx.data() + (static_cast<int64_t>(n) * channels + c) * plane;
            float sc = g[c] * invstd[c];
            if (train_stats) {
              float mg = static_cast<float>(sum_g[c] / static_cast<double>(m));
              float mgx = static_cast<float>(sum_gx[c] / static_cast<double>(m));
              for (int64_t i = 0; i < plane; ++i) {
                float xhat = (xp[i] - mean[c]) * invstd[c];
                dp[i] = sc * (gp[i] - mg - xhat * mgx);
              }
            } else {
              for (int64_t i = 0; i < plane; ++i) dp[i] = sc * gp[i];
            }
          }
        parts[0] = dx;
      }
      parts[1] = dgamma;
      parts[2] = dbeta;
      return parts;
    };
    detail::record_op(out, "batchnorm", {&x, &gamma, &beta}, bw);
    return out;
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    f(join_name(prefix, "gamma"), gamma, /*decay=*/false);
    f(join_name(prefix, "beta"), beta, /*decay=*/false);
  }
  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    f(join_name(prefix, "running_mean"), running_mean);
    f(join_name(prefix, "running_var"), running_var);
  }
};

struct LayerNorm {
  int dim = 0;
  float eps = 1e-5f;
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int d) : dim(d), gamma(Tensor::full({d}, 1.0f)), beta(Tensor(Shape{d})) {}

  // Normalizes over the last axis of any rank-1..4 tensor.
  Tensor forward(const Tensor& x) const {
    check(x.dim(x.rank() - 1) == dim, "layernorm: last extent " +
                                          std::to_string(x.dim(x.rank() - 1)) +
                                          " does not match dim " + std::to_string(dim));
    const int64_t rows = x.size() / dim;
    std::vector<float> mean(static_cast<size_t>(rows));
    std::vector<float> invstd(static_cast<size_t>(rows));
    Tensor out(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
      const float* p = x.data() + r * dim;
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < dim; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
      double mu = sum / dim;
      double v = sq / dim - mu * mu;
      if (v < 0.0) v = 0.0;
      mean[static_cast<size_t>(r)] = static_cast<float>(mu);
      invstd[static_cast<size_t>(r)] = static_cast<float>(1.0 / std::sqrt(v + eps));
      float* o = out.data() + r * dim;
      for (int i = 0; i < dim; ++i)
        o[i] = (p[i] - mean[static_cast<size_t>(r)]) * invstd[static_cast<size_t>(r)] * gamma[i] +
               beta[i];
    }
    auto bw = [x, g = gamma, mean, invstd, rows, dim = dim](const Tensor& gout,
                                                            const std::vector<bool>& need) {
      std::vector<Tensor> parts(3);
      Tensor dgamma(Shape{dim}), dbeta(Shape{dim});
      Tensor dx;
      if (need[0]) dx = Tensor(x.shape());
      for (int64_t r = 0; r < rows; ++r) {
        const float* gp = gout.data() + r * dim;
        const float* xp = x.data() + r * dim;
        float mu = mean[static_cast<size_t>(r)];
        float is = invstd[static_cast<size_t>(r)];
        double sum_dh = 0.0, sum_dhx = 0.0;
        for (int i = 0; i < dim; ++i) {
          float xhat = (xp[i] - mu) * is;
          float dh = gp[i] * g[i];
          dgamma.data()[i] += gp[i] * xhat;
          dbeta.data()[i] += gp[i];
          sum_dh += dh;
          sum_dhx += static_cast<double>(dh) * xhat;
        }
        if (dx.defined()) {
          float mdh = static_cast<float>(sum_dh / dim);
          float mdhx = static_cast<float>(sum_dhx / dim);
          float* dp = dx.data() + r * dim;
          for (int i = 0; i < dim; ++i) {
            float xhat = (xp[i] - mu) * is;
            dp[i] = is * (gp[i] * g[i] - mdh - xhat * mdhx);
          }
        }
      }
      parts[0] = dx;
      parts[1] = dgamma;
      parts[2] = dbeta;
      return parts;
    };
    detail::record_op(out, "layernorm", {&x, &gamma, &beta}, bw);
    return out;
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    f(join_name(prefix, "gamma"), gamma, /*decay=*/false);
    f(join_name(prefix, "beta"), beta, /*decay=*/false);
  }
  template <class F>
  void visit_buffers(const std::string&, F&&) {}
};

// ======================================================================
//  Activations
// ======================================================================

inline float sigmoid_stable(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  float e = std::exp(v);
  return e / (1.0f + e);
}

inline Tensor swish(const Tensor& x) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = x[i] * sigmoid_stable(x[i]);
  detail::record_op(out, "swish", {&x},
                    [x](const Tensor& g, const std::vector<bool>&) {
                      Tensor dx(x.shape());
                      for (int64_t i = 0; i < x.size(); ++i) {
                        float s = sigmoid_stable(x[i]);
                        dx.data()[i] = g[i] * (s + x[i] * s * (1.0f - s));
                      }
                      return std::vector<Tensor>{dx};
                    });
  return out;
}

// ======================================================================
//  Linear / pooling
// ======================================================================

struct Linear {
  int in = 0, out = 0;
  Tensor w, b;  // w is [in,out]

  Linear() = default;
  Linear(int in_dim, int out_dim)
      : in(in_dim), out(out_dim), w(Tensor({in_dim, out_dim})), b(Tensor(Shape{out_dim})) {}

  Tensor forward(const Tensor& x2d) const { return add_rowvec(matmul(x2d, w), b); }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    f(join_name(prefix, "weight"), w, /*decay=*/true);
    f(join_name(prefix, "bias"), b, /*decay=*/false);
  }
  template <class F>
  void visit_buffers(const std::string&, F&&) {}
};

inline Tensor global_avg_pool(const Tensor& x) {
  check(x.rank() == 4, "global_avg_pool: expects [B,C,H,W]");
  const int bsz = x.dim(0), c = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out({bsz, c});
  for (int n = 0; n < bsz; ++n)
    for (int ch = 0; ch < c; ++ch) {
      const float* p = x.data() + (static_cast<int64_t>(n) * c + ch) * plane;
      double sum = 0.0;
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
      out.data()[static_cast<int64_t>(n) * c + ch] = static_cast<float>(sum / static_cast<double>(plane));
    }
  detail::record_op(out, "gap", {&x},
                    [shape = x.shape(), bsz, c, plane](const Tensor& g, const std::vector<bool>&) {
                      Tensor dx(shape);
                      float inv = 1.0f / static_cast<float>(plane);
                      for (int n = 0; n < bsz; ++n)
                        for (int ch = 0; ch < c; ++ch) {
                          float gv = g[static_cast<int64_t>(n) * c + ch] * inv;
                          float* dp = dx.data() + (static_cast<int64_t>(n) * c + ch) * plane;
                          for (int64_t i = 0; i < plane; ++i) dp[i] = gv;
                        }
                      return std::vector<Tensor>{dx};
                    });
  return out;
}

// ======================================================================
//  Multi-head self-attention / transformer layer
// ======================================================================

struct AttentionSpec {
  int dim = 0;
  int heads = 4;

  AttentionSpec() = default;
  AttentionSpec(int d, int h) : dim(d), heads(h) {
    check(h >= 1 && d % h == 0, "attention: dim " + std::to_string(d) +
                                    " not divisible by head count " + std::to_string(h));
  }
  int head_dim() const { return dim / heads; }
};

// Self-attention over [S,N,d]: each of the S sequences is attended
// independently; no positional embedding anywhere.
struct MultiHeadAttention {
  AttentionSpec spec;
  Linear wq, wk, wv, wo;

  MultiHeadAttention() = default;
  explicit MultiHeadAttention(AttentionSpec s)
      : spec(s), wq(s.dim, s.dim), wk(s.dim, s.dim), wv(s.dim, s.dim), wo(s.dim, s.dim) {}

  Tensor forward(const Tensor& x) const {
    check(x.rank() == 3 && x.dim(2) == spec.dim,
          "attention: expected [S,N," + std::to_string(spec.dim) + "], got " +
              shape_str(x.shape()));
    const int s = x.dim(0), n = x.dim(1), d = spec.dim;
    const int h = spec.heads, dh = spec.head_dim();
    Tensor x2 = reshape(x, {s * n, d});
    auto heads_of = [&](const Tensor& proj) {
      // [S*N,d] -> [S,N,h,dh] -> [S,h,N,dh] -> [S*h,N,dh]
      return reshape(permute(reshape(proj, {s, n, h, dh}), {0, 2, 1, 3}), {s * h, n, dh});
    };
    Tensor q = heads_of(wq.forward(x2));
    Tensor kk = heads_of(wk.forward(x2));
    Tensor v = heads_of(wv.forward(x2));
    Tensor scores = bmm(scale(q, 1.0f / std::sqrt(static_cast<float>(dh))), kk,
                        /*transpose_b=*/true);           // [S*h,N,N]
    Tensor attn = softmax(scores, 2);
    Tensor ctx = bmm(attn, v);                            // [S*h,N,dh]
    Tensor merged = reshape(permute(reshape(ctx, {s, h, n, dh}), {0, 2, 1, 3}), {s * n, d});
    return reshape(wo.forward(merged), {s, n, d});
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    wq.visit_params(join_name(prefix, "wq"), f);
    wk.visit_params(join_name(prefix, "wk"), f);
    wv.visit_params(join_name(prefix, "wv"), f);
    wo.visit_params(join_name(prefix, "wo"), f);
  }
  template <class F>
  void visit_buffers(const std::string&, F&&) {}
};

// Pre-norm residual transformer layer: x + MHA(LN(x)), then
// + FFN(LN(.)) with FFN = linear(d->2d) -> Swish -> linear(2d->d).
struct TransformerLayer {
  int dim = 0;
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ffn1, ffn2;

  TransformerLayer() = default;
  TransformerLayer(int d, int heads)
      : dim(d), ln1(d), ln2(d), attn(AttentionSpec(d, heads)), ffn1(d, 2 * d), ffn2(2 * d, d) {}

  Tensor forward(const Tensor& x) const {
    const int s = x.dim(0), n = x.dim(1);
    Tensor h = add(x, attn.forward(ln1.forward(x)));
    Tensor f2 = reshape(ln2.forward(h), {s * n, dim});
    Tensor f = ffn2.forward(swish(ffn1.forward(f2)));
    return add(h, reshape(f, {s, n, dim}));
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    ln1.visit_params(join_name(prefix, "ln1"), f);
    attn.visit_params(join_name(prefix, "attn"), f);
    ln2.visit_params(join_name(prefix, "ln2"), f);
    ffn1.visit_params(join_name(prefix, "ffn1"), f);
    ffn2.visit_params(join_name(prefix, "ffn2"), f);
  }
  template <class F>
  void visit_buffers(const std::string&, F&&) {}
};

// ======================================================================
//  Initialization
// ======================================================================

// Truncated normal, std = sqrt(2 / fan_in), keyed by parameter name so
// init order never matters. Rank-1 parameters keep their constructed
// defaults (norm scales 1, shifts/biases 0).
template <class M>
void init_params(M& m, const Rng& base) {
  m.visit_params("", [&](const std::string& name, Tensor& t, bool) {
    if (t.rank() < 2) return;
    int64_t fan_in = t.rank() == 4
                         ? static_cast<int64_t>(t.dim(1)) * t.dim(2) * t.dim(3)
                         : t.dim(0);
    float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
    Rng rng = base.split(name);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.truncated_normal(stddev);
  });
}

struct ParamSlot {
  std::string name;
  Tensor* value = nullptr;
  bool decay = true;
};

template <class M>
std::vector<ParamSlot> collect_params(M& m) {
  std::vector<ParamSlot> slots;
  m.visit_params("", [&](const std::string& name, Tensor& t, bool decay) {
    slots.push_back(ParamSlot{name, &t, decay});
  });
  return slots;
}

}  // namespace mvt
