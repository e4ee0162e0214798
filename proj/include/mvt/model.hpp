#pragma once
// Full MobileViT classifiers (XXS / XS / S plus a desk-scale micro
// variant): table-driven assembly, parameter accounting, the analytic
// attention-cost model, and the binary weights format.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mvt/blocks.hpp"
#include "mvt/nn.hpp"

namespace mvt {

// ======================================================================
//  Configuration
// ======================================================================

struct ModelConfig {
  std::string variant;  // "XXS", "XS", "S", "micro"
  int expansion = 4;    // MV2 expansion factor
  int stem = 16;
  int c1 = 0;                    // MV2 width after the stem (stride 2)
  int c2 = 0;                    // stride-4 MV2 group width
  int c3 = 0, d3 = 0, L3 = 2;    // stride-8 stage (MV2 down + MobileViT)
  int c4 = 0, d4 = 0, L4 = 4;    // stride-16 stage
  int c5 = 0, d5 = 0, L5 = 3;    // stride-32 stage
  int head_channels = 0;         // 1x1 conv before global pool
  int classes = 1000;
  int kernel = 3;
  int heads = 4;
  bool skip = true;
  std::array<int, 3> patches{2, 2, 2};  // patch height (=width) at strides 8/16/32

  static ModelConfig xxs() {
    ModelConfig c;
    c.variant = "XXS";
    c.expansion = 2;
    c.c1 = 16;
    c.c2 = 24;
    c.c3 = 48; c.d3 = 64;
    c.c4 = 64; c.d4 = 80;
    c.c5 = 80; c.d5 = 96;
    c.head_channels = 320;
    return c;
  }
  static ModelConfig xs() {
    ModelConfig c;
    c.variant = "XS";
    c.c1 = 32;
    c.c2 = 48;
    c.c3 = 64; c.d3 = 96;
    c.c4 = 80; c.d4 = 120;
    c.c5 = 96; c.d5 = 144;
    c.head_channels = 384;
    return c;
  }
  static ModelConfig s() {
    ModelConfig c;
    c.variant = "S";
    c.c1 = 32;
    c.c2 = 64;
    c.c3 = 96; c.d3 = 144;
    c.c4 = 128; c.d4 = 192;
    c.c5 = 160; c.d5 = 240;
    c.head_channels = 640;
    return c;
  }
  // Desk-scale variant with the same topology for training smoke tests.
  static ModelConfig micro(int classes = 4) {
    ModelConfig c;
    c.variant = "micro";
    c.expansion = 2;
    c.stem = 4;
    c.c1 = 4;
    c.c2 = 8;
    c.c3 = 8;  c.d3 = 8;  c.L3 = 1;
    c.c4 = 12; c.d4 = 12; c.L4 = 1;
    c.c5 = 16; c.d5 = 16; c.L5 = 1;
    c.head_channels = 32;
    c.heads = 2;
    c.classes = classes;
    return c;
  }
};

inline ModelConfig variant_config(const std::string& name) {
  if (name == "XXS" || name == "xxs") return ModelConfig::xxs();
  if (name == "XS" || name == "xs") return ModelConfig::xs();
  if (name == "S" || name == "s") return ModelConfig::s();
  if (name == "micro") return ModelConfig::micro();
  throw std::invalid_argument("unknown variant '" + name + "' (expected XXS, XS, S or micro)");
}

// "A" -> 2,2,2; "B" -> 8,4,2; or an explicit "h1,h2,h3" triple.
inline std::array<int, 3> parse_patch_config(const std::string& text) {
  if (text == "A" || text == "a") return {2, 2, 2};
  if (text == "B" || text == "b") return {8, 4, 2};
  std::array<int, 3> out{};
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    size_t next = text.find(',', pos);
    std::string tok = text.substr(pos, next == std::string::npos ? next : next - pos);
    try {
      out[static_cast<size_t>(i)] = std::stoi(tok);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad patch config '" + text + "' (expected A, B or h1,h2,h3)");
    }
    check(out[static_cast<size_t>(i)] >= 1, "patch sizes must be positive: " + text);
    if (i < 2) {
      check(next != std::string::npos, "bad patch config '" + text + "'");
      pos = next + 1;
    } else {
      check(next == std::string::npos, "bad patch config '" + text + "'");
    }
  }
  return out;
}

// ======================================================================
//  Model
// ======================================================================

struct Model {
  ModelConfig config;
  Mode mode = Mode::eval;

  Conv2d stem_conv;
  BatchNorm stem_bn;
  MV2Block s1;
  MV2Block s2_down, s2_r1, s2_r2;
  MV2Block s3_down;
  MobileViTBlock s3_vit;
  MV2Block s4_down;
  MobileViTBlock s4_vit;
  MV2Block s5_down;
  MobileViTBlock s5_vit;
  Conv2d head_conv;
  BatchNorm head_bn;
  Linear fc;

  explicit Model(const ModelConfig& cfg)
      : config(cfg),
        stem_conv(ConvSpec{3, cfg.stem, 3, 2, 1, true, false}),
        stem_bn(cfg.stem),
        s1(MV2Spec{cfg.stem, cfg.c1, 1, cfg.expansion}),
        s2_down(MV2Spec{cfg.c1, cfg.c2, 2, cfg.expansion}),
        s2_r1(MV2Spec{cfg.c2, cfg.c2, 1, cfg.expansion}),
        s2_r2(MV2Spec{cfg.c2, cfg.c2, 1, cfg.expansion}),
        s3_down(MV2Spec{cfg.c2, cfg.c3, 2, cfg.expansion}),
        s3_vit(MobileViTBlockSpec{cfg.c3, cfg.d3, cfg.L3, cfg.kernel, cfg.patches[0],
                                  cfg.patches[0], cfg.heads, cfg.skip}),
        s4_down(MV2Spec{cfg.c3, cfg.c4, 2, cfg.expansion}),
        s4_vit(MobileViTBlockSpec{cfg.c4, cfg.d4, cfg.L4, cfg.kernel, cfg.patches[1],
                                  cfg.patches[1], cfg.heads, cfg.skip}),
        s5_down(MV2Spec{cfg.c4, cfg.c5, 2, cfg.expansion}),
        s5_vit(MobileViTBlockSpec{cfg.c5, cfg.d5, cfg.L5, cfg.kernel, cfg.patches[2],
                                  cfg.patches[2], cfg.heads, cfg.skip}),
        head_conv(ConvSpec{cfg.c5, cfg.head_channels, 1, 1, 1, true, false}),
        head_bn(cfg.head_channels),
        fc(cfg.head_channels, cfg.classes) {}

  Tensor forward(const Tensor& batch) {
    check(batch.rank() == 4, "forward: expected [B,3,H,W], got " + shape_str(batch.shape()));
    check(batch.dim(1) == 3, "forward: expected 3 input channels, got " +
                                 std::to_string(batch.dim(1)));
    Tensor t = swish(stem_bn.forward(stem_conv.forward(batch), mode));
    t = s1.forward(t, mode);
    t = s2_down.forward(t, mode);
    t = s2_r1.forward(t, mode);
    t = s2_r2.forward(t, mode);
    t = s3_down.forward(t, mode);
    t = s3_vit.forward(t, mode);
    t = s4_down.forward(t, mode);
    t = s4_vit.forward(t, mode);
    t = s5_down.forward(t, mode);
    t = s5_vit.forward(t, mode);
    t = swish(head_bn.forward(head_conv.forward(t), mode));
    Tensor pooled = global_avg_pool(t);  // [B, head_channels] at any resolution
    return fc.forward(pooled);
  }

  template <class F>
  void visit_params(const std::string& prefix, F&& f) {
    stem_conv.visit_params(join_name(prefix, "stem.conv"), f);
    stem_bn.visit_params(join_name(prefix, "stem.bn"), f);
    s1.visit_params(join_name(prefix, "s1.mv2"), f);
    s2_down.visit_params(join_name(prefix, "s2.mv2_0"), f);
    s2_r1.visit_params(join_name(prefix, "s2.mv2_1"), f);
    s2_r2.visit_params(join_name(prefix, "s2.mv2_2"), f);
    s3_down.visit_params(join_name(prefix, "s3.mv2"), f);
    s3_vit.visit_params(join_name(prefix, "s3.vit"), f);
    s4_down.visit_params(join_name(prefix, "s4.mv2"), f);
    s4_vit.visit_params(join_name(prefix, "s4.vit"), f);
    s5_down.visit_params(join_name(prefix, "s5.mv2"), f);
    s5_vit.visit_params(join_name(prefix, "s5.vit"), f);
    head_conv.visit_params(join_name(prefix, "head.conv"), f);
    head_bn.visit_params(join_name(prefix, "head.bn"), f);
    fc.visit_params(join_name(prefix, "head.fc"), f);
  }
  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    stem_bn.visit_buffers(join_name(prefix, "stem.bn"), f);
    s1.visit_buffers(join_name(prefix, "s1.mv2"), f);
    s2_down.visit_buffers(join_name(prefix, "s2.mv2_0"), f);
    s2_r1.visit_buffers(join_name(prefix, "s2.mv2_1"), f);
    s2_r2.visit_buffers(join_name(prefix, "s2.mv2_2"), f);
    s3_down.visit_buffers(join_name(prefix, "s3.mv2"), f);
    s3_vit.visit_buffers(join_name(prefix, "s3.vit"), f);
    s4_down.visit_buffers(join_name(prefix, "s4.mv2"), f);
    s4_vit.visit_buffers(join_name(prefix, "s4.vit"), f);
    s5_down.visit_buffers(join_name(prefix, "s5.mv2"), f);
    s5_vit.visit_buffers(join_name(prefix, "s5.vit"), f);
    head_bn.visit_buffers(join_name(prefix, "head.bn"), f);
  }
};

inline Model build(const ModelConfig& config, uint64_t seed) {
  Model m(config);
  init_params(m, Rng(seed));
  return m;
}

// Trainable parameter count; BN running stats excluded.
inline int64_t count_params(Model& m) {
  int64_t total = 0;
  m.visit_params("", [&](const std::string&, Tensor& t, bool) { total += t.size(); });
  return total;
}

// Per-stage parameter breakdown, keyed by the name prefix up to the
// second dot ("s3.vit", "head.fc", ...).
inline std::vector<std::pair<std::string, int64_t>> stage_param_counts(Model& m) {
  std::vector<std::pair<std::string, int64_t>> out;
  std::map<std::string, int64_t> acc;
  std::vector<std::string> order;
  m.visit_params("", [&](const std::string& name, Tensor& t, bool) {
    size_t first = name.find('.');
    size_t second = first == std::string::npos ? first : name.find('.', first + 1);
    std::string key = name.substr(0, second);
    if (!acc.count(key)) order.push_back(key);
    acc[key] += t.size();
  });
  for (const auto& key : order) out.emplace_back(key, acc[key]);
  return out;
}

// ======================================================================
//  Attention cost model
// ======================================================================

struct StageCost {
  int stride = 0;
  int dim = 0;
  int depth = 0;
  int patch = 0;
  int feat_h = 0, feat_w = 0;  // feature extents at this stride
  int grid_h = 0, grid_w = 0;  // after round-up to patch multiples
  int64_t pixels_per_patch = 0;  // P
  int64_t patch_count = 0;       // N
  int64_t attention_macs = 0;    // N^2 * P * d, the O(N^2 P d) model
  int64_t projection_macs = 0;   // QKVO + FFN linear MACs, L * 8 d^2 tokens
};

struct CostReport {
  std::vector<StageCost> stages;
  int64_t total_attention_macs = 0;
  int64_t total_projection_macs = 0;
};

inline CostReport attention_cost(const ModelConfig& config, int input_h, int input_w) {
  CostReport report;
  const int strides[3] = {8, 16, 32};
  const int dims[3] = {config.d3, config.d4, config.d5};
  const int depths[3] = {config.L3, config.L4, config.L5};
  for (int i = 0; i < 3; ++i) {
    StageCost sc;
    sc.stride = strides[i];
    sc.dim = dims[i];
    sc.depth = depths[i];
    sc.patch = config.patches[static_cast<size_t>(i)];
    sc.feat_h = (input_h + sc.stride - 1) / sc.stride;
    sc.feat_w = (input_w + sc.stride - 1) / sc.stride;
    sc.grid_h = ((sc.feat_h + sc.patch - 1) / sc.patch) * sc.patch;
    sc.grid_w = ((sc.feat_w + sc.patch - 1) / sc.patch) * sc.patch;
    sc.pixels_per_patch = static_cast<int64_t>(sc.patch) * sc.patch;
    sc.patch_count = static_cast<int64_t>(sc.grid_h / sc.patch) * (sc.grid_w / sc.patch);
    sc.attention_macs = sc.patch_count * sc.patch_count * sc.pixels_per_patch * sc.dim;
    sc.projection_macs = static_cast<int64_t>(sc.depth) * 8 * sc.dim * sc.dim *
                         sc.patch_count * sc.pixels_per_patch;
    report.total_attention_macs += sc.attention_macs;
    report.total_projection_macs += sc.projection_macs;
    report.stages.push_back(sc);
  }
  return report;
}

// ======================================================================
//  Weights file: magic "MVTW", little-endian
// ======================================================================

namespace detail {

inline void write_u16(std::FILE* f, uint16_t v) { std::fwrite(&v, 2, 1, f); }
inline void write_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }

inline uint16_t read_u16(std::FILE* f) {
  uint16_t v = 0;
  check(std::fread(&v, 2, 1, f) == 1, "weights file truncated");
  return v;
}
inline uint32_t read_u32(std::FILE* f) {
  uint32_t v = 0;
  check(std::fread(&v, 4, 1, f) == 1, "weights file truncated");
  return v;
}

struct NamedTensorRef {
  std::string name;
  Tensor* value;
};

inline std::vector<NamedTensorRef> all_entries(Model& m) {
  std::vector<NamedTensorRef> refs;
  m.visit_params("", [&](const std::string& name, Tensor& t, bool) {
    refs.push_back({name, &t});
  });
  m.visit_buffers("", [&](const std::string& name, Tensor& t) { refs.push_back({name, &t}); });
  return refs;
}

}  // namespace detail

constexpr uint32_t kWeightsFormatVersion = 1;

inline void save_weights(Model& m, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  check(f != nullptr, "cannot open '" + path + "' for writing");
  auto entries = detail::all_entries(m);
  std::fwrite("MVTW", 1, 4, f);
  detail::write_u32(f, kWeightsFormatVersion);
  detail::write_u32(f, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    detail::write_u16(f, static_cast<uint16_t>(e.name.size()));
    std::fwrite(e.name.data(), 1, e.name.size(), f);
    uint8_t rank = static_cast<uint8_t>(e.value->rank());
    std::fwrite(&rank, 1, 1, f);
    for (int i = 0; i < e.value->rank(); ++i)
      detail::write_u32(f, static_cast<uint32_t>(e.value->dim(i)));
    std::fwrite(e.value->data(), 4, static_cast<size_t>(e.value->size()), f);
  }
  std::fclose(f);
}

inline void load_weights(Model& m, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check(f != nullptr, "cannot open '" + path + "' for reading");
  struct Closer {
    std::FILE* f;
    ~Closer() { std::fclose(f); }
  } closer{f};

  char magic[4];
  check(std::fread(magic, 1, 4, f) == 4 && std::memcmp(magic, "MVTW", 4) == 0,
        "'" + path + "' is not a weights file (bad magic)");
  uint32_t version = detail::read_u32(f);
  check(version == kWeightsFormatVersion,
        "unsupported weights format version " + std::to_string(version));
  uint32_t count = detail::read_u32(f);

  std::map<std::string, Tensor> loaded;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = detail::read_u16(f);
    std::string name(len, '\0');
    check(std::fread(name.data(), 1, len, f) == len, "weights file truncated");
    uint8_t rank = 0;
    check(std::fread(&rank, 1, 1, f) == 1, "weights file truncated");
    check(rank >= 1 && rank <= 4, "weights entry '" + name + "' has invalid rank");
    Shape shape;
    for (int r = 0; r < rank; ++r) shape.push_back(static_cast<int>(detail::read_u32(f)));
    Tensor t(shape);
    check(std::fread(t.data(), 4, static_cast<size_t>(t.size()), f) ==
              static_cast<size_t>(t.size()),
          "weights file truncated");
    loaded.emplace(name, std::move(t));
  }

  auto entries = detail::all_entries(m);
  check(entries.size() == loaded.size(),
        "weights file has " + std::to_string(loaded.size()) + " entries, model expects " +
            std::to_string(entries.size()));
  for (auto& e : entries) {
    auto it = loaded.find(e.name);
    check(it != loaded.end(), "weights file is missing entry '" + e.name + "'");
    check(it->second.shape() == e.value->shape(),
          "weights entry '" + e.name + "' has shape " + shape_str(it->second.shape()) +
              ", model expects " + shape_str(e.value->shape()));
    *e.value = it->second;
  }
}

}  // namespace mvt
