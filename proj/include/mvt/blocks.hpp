#pragma once
// Composite blocks: the MobileNetv2 inverted residual (MV2) and the
// MobileViT block with its exact unfold/fold patch bijection.

#include <cmath>
#include <string>
#include <vector>

#include "mvt/nn.hpp"
#include "mvt/tensor.hpp"

namespace mvt {

// ======================================================================
//  PatchGrid: pixel (y,x) <-> (patch n, intra-patch position p)
// ======================================================================

struct PatchGrid {
  int patch_h = 0, patch_w = 0;
  int height = 0, width = 0;

  PatchGrid(int ph, int pw, int h, int w) : patch_h(ph), patch_w(pw), height(h), width(w) {
    check(ph >= 1 && pw >= 1 && h >= 1 && w >= 1, "patch grid: extents must be positive");
    check(h % ph == 0 && w % pw == 0,
          "patch grid: " + std::to_string(h) + "x" + std::to_string(w) +
              " not divisible by patch " + std::to_string(ph) + "x" + std::to_string(pw) +
              " (resize first)");
  }

  int pixels_per_patch() const { return patch_h * patch_w; }                    // P
  int patch_count() const { return (height / patch_h) * (width / patch_w); }    // N
  int patches_x() const { return width / patch_w; }

  // n = floor(y/h) * (W/w) + floor(x/w); p = (y mod h) * w + (x mod w)
  std::pair<int, int> patch_of(int y, int x) const {
    int n = (y / patch_h) * patches_x() + (x / patch_w);
    int p = (y % patch_h) * patch_w + (x % patch_w);
    return {n, p};
  }
  std::pair<int, int> pixel_of(int n, int p) const {
    int y = (n / patches_x()) * patch_h + p / patch_w;
    int x = (n % patches_x()) * patch_w + p % patch_w;
    return {y, x};
  }
};

namespace detail {

// out[(b*P+p), n, c] = x[b, c, y, x]; pure data movement.
inline void unfold_raw(const float* x, float* out, const PatchGrid& g, int bsz, int ch) {
  const int p_cnt = g.pixels_per_patch(), n_cnt = g.patch_count();
  const int64_t plane = static_cast<int64_t>(g.height) * g.width;
  for (int b = 0; b < bsz; ++b)
    for (int c = 0; c < ch; ++c) {
      const float* xp = x + (static_cast<int64_t>(b) * ch + c) * plane;
      for (int y = 0; y < g.height; ++y)
        for (int xx = 0; xx < g.width; ++xx) {
          auto [n, p] = g.patch_of(y, xx);
          out[(static_cast<int64_t>(b * p_cnt + p) * n_cnt + n) * ch + c] =
              xp[static_cast<int64_t>(y) * g.width + xx];
        }
    }
}

inline void fold_raw(const float* t, float* out, const PatchGrid& g, int bsz, int ch) {
  const int p_cnt = g.pixels_per_patch(), n_cnt = g.patch_count();
  const int64_t plane = static_cast<int64_t>(g.height) * g.width;
  for (int b = 0; b < bsz; ++b)
    for (int c = 0; c < ch; ++c) {
      float* op = out + (static_cast<int64_t>(b) * ch + c) * plane;
      for (int y = 0; y < g.height; ++y)
        for (int xx = 0; xx < g.width; ++xx) {
          auto [n, p] = g.patch_of(y, xx);
          op[static_cast<int64_t>(y) * g.width + xx] =
              t[(static_cast<int64_t>(b * p_cnt + p) * n_cnt + n) * ch + c];
        }
    }
}

}  // namespace detail

// [B,d,H,W] -> [(B*P), N, d]; differentiable as a permutation.
inline Tensor unfold(const Tensor& x, const PatchGrid& grid) {
  check(x.rank() == 4, "unfold: expects [B,d,H,W], got " + shape_str(x.shape()));
  check(x.dim(2) == grid.height && x.dim(3) == grid.width,
        "unfold: input " + shape_str(x.shape()) + " does not match grid " +
            std::to_string(grid.height) + "x" + std::to_string(grid.width));
  const int bsz = x.dim(0), ch = x.dim(1);
  Tensor out({bsz * grid.pixels_per_patch(), grid.patch_count(), ch});
  detail::unfold_raw(x.data(), out.data(), grid, bsz, ch);
  detail::record_op(out, "unfold", {&x},
                    [grid, bsz, ch, shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                      Tensor dx(shape);
                      detail::fold_raw(g.data(), dx.data(), grid, bsz, ch);
                      return std::vector<Tensor>{dx};
                    });
  return out;
}

// Exact inverse of unfold: [(B*P), N, d] -> [B,d,H,W].
inline Tensor fold(const Tensor& t, const PatchGrid& grid) {
  check(t.rank() == 3, "fold: expects [(B*P),N,d], got " + shape_str(t.shape()));
  const int p_cnt = grid.pixels_per_patch();
  check(t.dim(0) % p_cnt == 0 && t.dim(1) == grid.patch_count(),
        "fold: token shape " + shape_str(t.shape()) + " inconsistent with grid (P=" +
            std::to_string(p_cnt) + ", N=" + std::to_string(grid.patch_count()) + ")");
  const int bsz = t.dim(0) / p_cnt, ch = t.dim(2);
  Tensor out({bsz, ch, grid.height, grid.width});
  detail::fold_raw(t.data(), out.data(), grid, bsz, ch);
  detail::record_op(out, "fold", {&t},
                    [grid, bsz, ch, shape = t.shape()](const Tensor& g, const std::vector<bool>&) {
                      Tensor dt(shape);
                      detail::unfold_raw(g.data(), dt.data(), grid, bsz, ch);
                      return std::vector<Tensor>{dt};
                    });
  return out;
}

// ======================================================================
//  Bilinear resize (align_corners = false)
// ======================================================================

namespace detail {

struct ResizeTap {
  int lo = 0, hi = 0;
  float w_hi = 0.0f;  // weight of hi; lo gets 1 - w_hi
};

inline std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(static_cast<size_t>(out));
  double s = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * s - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in - 1) src = in - 1;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    int hi = lo + 1 < in ? lo + 1 : lo;
    taps[static_cast<size_t>(i)] = {lo, hi, static_cast<float>(src - lo)};
  }
  return taps;
}

}  // namespace detail

inline Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  check(x.rank() == 4, "resize_bilinear: expects [B,C,H,W]");
  check(out_h >= 1 && out_w >= 1, "resize_bilinear: target extents must be positive");
  const int bsz = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h == h && out_w == w) {
    // Identity, bit-exact.
    Tensor out = x.clone();
    detail::record_op(out, "resize_id", {&x},
                      [](const Tensor& g, const std::vector<bool>&) {
                        return std::vector<Tensor>{g};
                      });
    return out;
  }
  auto ty = detail::resize_taps(h, out_h);
  auto tx = detail::resize_taps(w, out_w);
  Tensor out({bsz, ch, out_h, out_w});
  for (int b = 0; b < bsz; ++b)
    for (int c = 0; c < ch; ++c) {
      const float* xp = x.data() + (static_cast<int64_t>(b) * ch + c) * h * w;
      float* op = out.data() + (static_cast<int64_t>(b) * ch + c) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& rty = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& rtx = tx[static_cast<size_t>(ox)];
          float top = xp[rty.lo * w + rtx.lo] * (1.0f - rtx.w_hi) + xp[rty.lo * w + rtx.hi] * rtx.w_hi;
          float bot = xp[rty.hi * w + rtx.lo] * (1.0f - rtx.w_hi) + xp[rty.hi * w + rtx.hi] * rtx.w_hi;
          op[static_cast<int64_t>(oy) * out_w + ox] = top * (1.0f - rty.w_hi) + bot * rty.w_hi;
        }
      }
    }
  detail::record_op(
      out, "resize_bilinear", {&x},
      [shape = x.shape(), ty, tx, bsz, ch, h, w, out_h, out_w](const Tensor& g,
                                                               const std::vector<bool>&) {
        Tensor dx(shape);
        for (int b = 0; b < bsz; ++b)
          for (int c = 0; c < ch; ++c) {
            float* dp = dx.data() + (static_cast<int64_t>(b) * ch + c) * h * w;
            const float* gp = g.data() + (static_cast<int64_t>(b) * ch + c) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
              const auto& rty = ty[static_cast<size_t>(oy)];
              for (int ox = 0; ox < out_w; ++ox) {
                const auto& rtx = tx[static_cast<size_t>(ox)];
                float gv = gp[static_cast<int64_t>(oy) * out_w + ox];
                dp[rty.lo * w + rtx.lo] += gv * (1.0f - rty.w_hi) * (1.0f - rtx.w_hi);
                dp[rty.lo * w + rtx.hi] += gv * (1.0f - rty.w_hi) * rtx.w_hi;
                dp[rty.hi * w + rtx.lo] += gv * rty.w_hi * (1.0f - rtx.w_hi);
                dp[rty.hi * w + rtx.hi] += gv * rty.w_hi * rtx.w_hi;
              }
            }
          }
        return std::vector<Tensor>{dx};
      });
  return out;
}

// ======================================================================
//  MV2 inverted residual
// ======================================================================

struct MV2Spec {
  int in = 0, out = 0;
  int stride = 1;     // 1 or 2
  int expansion = 4;  // 2 for the XXS variant

  bool residual() const { return stride == 1 && in == out; }
  int hidden() const { return in * expansion; }
};

// 1x1 expand (BN, Swish) -> 3x3 depthwise (BN, Swish) -> 1x1 project
// (BN, no activation); input residual when stride 1 and in == out.
struct MV2Block {
  MV2Spec spec;
  Conv2d expand;
  BatchNorm bn1;
  Conv2d dw;
  BatchNorm bn2;
  Conv2d project;
  BatchNorm bn3;

  MV2Block() = default;
  explicit MV2Block(MV2Spec s)
      : spec(s),
        expand(ConvSpec{s.in, s.hidden(), 1, 1, 1, true, false}),
        bn1(s.hidden()),
        dw(ConvSpec{s.hidden(), s.hidden(), 3, s.stride, s.hidden(), true, false}),
        bn2(s.hidden()),
        project(ConvSpec{s.hidden(), s.out, 1, 1, 1, true, false}),
        bn3(s.out) {
    check(s.stride == 1 || s.stride == 2, "mv2: stride must be 1 or 2");
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = swish(bn1.forward(expand.forward(x), mode));
    h = swish(bn2.forward(dw.forward(h), mode));
    h = bn3.forward(project.forward(h), mode);
    return spec.residual() ? add(x, h) : h;
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    expand.visit_params(join_name(prefix, "expand"), f);
    bn1.visit_params(join_name(prefix, "expand_bn"), f);
    dw.visit_params(join_name(prefix, "dw"), f);
    bn2.visit_params(join_name(prefix, "dw_bn"), f);
    project.visit_params(join_name(prefix, "project"), f);
    bn3.visit_params(join_name(prefix, "project_bn"), f);
  }
  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    bn1.visit_buffers(join_name(prefix, "expand_bn"), f);
    bn2.visit_buffers(join_name(prefix, "dw_bn"), f);
    bn3.visit_buffers(join_name(prefix, "project_bn"), f);
  }
};

// ======================================================================
//  MobileViT block
// ======================================================================

struct MobileViTBlockSpec {
  int channels = 0;  // C in and out
  int dim = 0;       // transformer width d
  int depth = 2;     // L
  int kernel = 3;    // n
  int patch_h = 2, patch_w = 2;
  int heads = 4;
  bool skip = true;  // concatenate the block input before fusion
};

// Local conv encoding, linear projection to d, unfold, L transformer
// layers over the patch axis, fold, projection back to C, optional
// concat skip, and an n x n fusion conv. Output shape == input shape;
// non-divisible spatial dims take a bilinear round-up resize around the
// unfold/fold pair.
struct MobileViTBlock {
  MobileViTBlockSpec spec;
  Conv2d local_conv;  // n x n, C -> C
  BatchNorm local_bn;
  Conv2d local_proj;  // 1 x 1, C -> d (no norm, no activation)
  std::vector<TransformerLayer> layers;
  LayerNorm out_norm;
  Conv2d proj_back;  // 1 x 1, d -> C
  BatchNorm proj_bn;
  Conv2d fuse;  // n x n, (2C or C) -> C
  BatchNorm fuse_bn;

  MobileViTBlock() = default;
  explicit MobileViTBlock(MobileViTBlockSpec s)
      : spec(s),
        local_conv(ConvSpec{s.channels, s.channels, s.kernel, 1, 1, true, false}),
        local_bn(s.channels),
        local_proj(ConvSpec{s.channels, s.dim, 1, 1, 1, true, false}),
        out_norm(s.dim),
        proj_back(ConvSpec{s.dim, s.channels, 1, 1, 1, true, false}),
        proj_bn(s.channels),
        fuse(ConvSpec{s.skip ? 2 * s.channels : s.channels, s.channels, s.kernel, 1, 1, true,
                      false}),
        fuse_bn(s.channels) {
    layers.reserve(static_cast<size_t>(s.depth));
    for (int i = 0; i < s.depth; ++i) layers.emplace_back(s.dim, s.heads);
  }

  Tensor forward(const Tensor& x, Mode mode) {
    check(x.rank() == 4 && x.dim(1) == spec.channels,
          "mobilevit block: expected [B," + std::to_string(spec.channels) + ",H,W], got " +
              shape_str(x.shape()));
    const int h = x.dim(2), w = x.dim(3);

    Tensor y = swish(local_bn.forward(local_conv.forward(x), mode));
    y = local_proj.forward(y);  // [B,d,H,W]

    // Round spatial dims up to the next patch multiple.
    const int gh = ((h + spec.patch_h - 1) / spec.patch_h) * spec.patch_h;
    const int gw = ((w + spec.patch_w - 1) / spec.patch_w) * spec.patch_w;
    const bool resized = gh != h || gw != w;
    if (resized) y = resize_bilinear(y, gh, gw);

    PatchGrid grid(spec.patch_h, spec.patch_w, gh, gw);
    Tensor tokens = unfold(y, grid);  // [(B*P), N, d]
    for (auto& layer : layers) tokens = layer.forward(tokens);
    tokens = out_norm.forward(tokens);
    y = fold(tokens, grid);
    if (resized) y = resize_bilinear(y, h, w);

    y = swish(proj_bn.forward(proj_back.forward(y), mode));  // [B,C,H,W]
    if (spec.skip) y = concat_channels(x, y);
    return swish(fuse_bn.forward(fuse.forward(y), mode));
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    local_conv.visit_params(join_name(prefix, "local_conv"), f);
    local_bn.visit_params(join_name(prefix, "local_bn"), f);
    local_proj.visit_params(join_name(prefix, "local_proj"), f);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].visit_params(join_name(prefix, "tx" + std::to_string(i)), f);
    out_norm.visit_params(join_name(prefix, "out_norm"), f);
    proj_back.visit_params(join_name(prefix, "proj_back"), f);
    proj_bn.visit_params(join_name(prefix, "proj_bn"), f);
    fuse.visit_params(join_name(prefix, "fuse"), f);
    fuse_bn.visit_params(join_name(prefix, "fuse_bn"), f);
  }
  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    local_bn.visit_buffers(join_name(prefix, "local_bn"), f);
    proj_bn.visit_buffers(join_name(prefix, "proj_bn"), f);
    fuse_bn.visit_buffers(join_name(prefix, "fuse_bn"), f);
  }
};

}  // namespace mvt
