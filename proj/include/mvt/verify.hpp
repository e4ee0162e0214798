#pragma once
// Structural-claims harness: receptive-field probes, the named
// property-test suites, and the patch-size study.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvt/model.hpp"
#include "mvt/sampler.hpp"
#include "mvt/train.hpp"

namespace mvt {

// ======================================================================
//  Receptive-field probe
// ======================================================================

struct FieldProbeReport {
  int probe_y = 0, probe_x = 0;
  int height = 0, width = 0;
  std::vector<uint8_t> mask;  // H*W support cells
  double coverage = 0.0;      // nonzero cells / (H*W)
  std::string config;

  bool full() const { return coverage == 1.0; }
};

// Backpropagates from the channel-summed output pixel at (y,x) and
// marks every input cell with |gradient| > 1e-12 in any channel or
// trial. Weights are re-randomized per trial and the supports unioned,
// because a single init can have measure-zero cancellations.
template <class ForwardFactory>
FieldProbeReport receptive_field_probe(ForwardFactory&& factory, int channels, int height,
                                       int width, int probe_y, int probe_x, int trials,
                                       uint64_t seed, std::string config_desc = {}) {
  check(probe_y >= 0 && probe_y < height && probe_x >= 0 && probe_x < width,
        "probe coordinate (" + std::to_string(probe_y) + "," + std::to_string(probe_x) +
            ") outside " + std::to_string(height) + "x" + std::to_string(width));
  check(trials >= 1, "probe: need at least one trial");

  FieldProbeReport report;
  report.probe_y = probe_y;
  report.probe_x = probe_x;
  report.height = height;
  report.width = width;
  report.config = std::move(config_desc);
  report.mask.assign(static_cast<size_t>(height) * width, 0);

  for (int trial = 0; trial < trials; ++trial) {
    uint64_t trial_seed = seed + static_cast<uint64_t>(trial) * 7919u;
    auto forward = factory(trial_seed);
    Rng rng = Rng(trial_seed).split("probe-input");
    Tensor x = random_uniform({1, channels, height, width}, rng);

    Tape tape;
    TapeScope scope(tape);
    tape.watch(x);
    Tensor out = forward(x);
    check(out.rank() == 4 && out.dim(2) == height && out.dim(3) == width,
          "probe: forward changed the spatial extents");
    // Channel-summed output pixel via a one-hot mask.
    Tensor mask(out.shape());
    const int out_c = out.dim(1);
    const int64_t plane = static_cast<int64_t>(height) * width;
    for (int c = 0; c < out_c; ++c)
      mask.data()[c * plane + static_cast<int64_t>(probe_y) * width + probe_x] = 1.0f;
    Tensor root = sum_all(mul(out, mask));
    auto grads = tape.backward(root);
    const Tensor& gx = grads.at(x.node);
    for (int c = 0; c < channels; ++c)
      for (int64_t i = 0; i < plane; ++i)
        if (std::fabs(static_cast<double>(gx[c * plane + i])) > 1e-12)
          report.mask[static_cast<size_t>(i)] = 1;
  }

  int64_t covered = 0;
  for (uint8_t cell : report.mask) covered += cell;
  report.coverage =
      static_cast<double>(covered) / static_cast<double>(report.mask.size());
  return report;
}

// MobileViT block probe; input channels come from the spec.
inline FieldProbeReport probe_mobilevit_block(const MobileViTBlockSpec& spec, int height,
                                              int width, int probe_y, int probe_x,
                                              int trials = 3, uint64_t seed = 0x9e1dULL) {
  std::ostringstream desc;
  desc << "mobilevit(C=" << spec.channels << ",d=" << spec.dim << ",L=" << spec.depth
       << ",n=" << spec.kernel << ",h=" << spec.patch_h << ",w=" << spec.patch_w << ")";
  auto factory = [spec](uint64_t s) {
    auto block = std::make_shared<MobileViTBlock>(spec);
    init_params(*block, Rng(s));
    return [block](const Tensor& x) { return block->forward(x, Mode::eval); };
  };
  return receptive_field_probe(factory, spec.channels, height, width, probe_y, probe_x, trials,
                               seed, desc.str());
}

// Plain n x n conv control (same padding, C -> C).
inline FieldProbeReport probe_plain_conv(int channels, int kernel, int height, int width,
                                         int probe_y, int probe_x, int trials = 3,
                                         uint64_t seed = 0xc0deULL) {
  ConvSpec spec{channels, channels, kernel, 1, 1, true, false};
  auto factory = [spec](uint64_t s) {
    auto conv = std::make_shared<Conv2d>(spec);
    init_params(*conv, Rng(s));
    return [conv](const Tensor& x) { return conv->forward(x); };
  };
  std::ostringstream desc;
  desc << "conv" << kernel << "x" << kernel << "(C=" << channels << ")";
  return receptive_field_probe(factory, channels, height, width, probe_y, probe_x, trials, seed,
                               desc.str());
}

// ======================================================================
//  Suites
// ======================================================================

struct SuiteCase {
  std::string id;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string name;
  std::vector<SuiteCase> cases;

  bool pass() const {
    for (const auto& c : cases)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline void add_case(SuiteReport& r, const std::string& id, bool pass,
                     const std::string& detail) {
  r.cases.push_back(SuiteCase{id, pass, detail});
}

template <class Fn>
void add_checked(SuiteReport& r, const std::string& id, Fn&& fn) {
  try {
    auto [pass, detail] = fn();
    add_case(r, id, pass, detail);
  } catch (const std::exception& e) {
    add_case(r, id, false, std::string("exception: ") + e.what());
  }
}

inline std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline SuiteReport suite_roundtrip() {
  SuiteReport r{"roundtrip", {}};
  Rng rng(2024);
  int exact = 0, total = 50;
  std::string first_failure;
  for (int trial = 0; trial < total; ++trial) {
    int ph = 1 << rng.index(3), pw = 1 << rng.index(3);
    int gh = ph * (1 + static_cast<int>(rng.index(5)));
    int gw = pw * (1 + static_cast<int>(rng.index(5)));
    int bsz = 1 + static_cast<int>(rng.index(2));
    int ch = 1 + static_cast<int>(rng.index(6));
    PatchGrid g(ph, pw, gh, gw);
    Tensor x = random_uniform({bsz, ch, gh, gw}, rng);
    Tensor back = fold(unfold(x, g), g);
    bool ok = true;
    for (int64_t i = 0; i < x.size() && ok; ++i) ok = back[i] == x[i];
    // Reverse direction.
    Tensor tokens = random_uniform({bsz * g.pixels_per_patch(), g.patch_count(), ch}, rng);
    Tensor back2 = unfold(fold(tokens, g), g);
    for (int64_t i = 0; i < tokens.size() && ok; ++i) ok = back2[i] == tokens[i];
    if (ok)
      ++exact;
    else if (first_failure.empty())
      first_failure = "trial " + std::to_string(trial) + " grid " + std::to_string(ph) + "x" +
                      std::to_string(pw) + " on " + std::to_string(gh) + "x" + std::to_string(gw);
  }
  detail::add_case(r, "fold_unfold_exact_50", exact == total,
                   std::to_string(exact) + "/" + std::to_string(total) + " bit-exact" +
                       (first_failure.empty() ? "" : "; first failure: " + first_failure));

  detail::add_checked(r, "unfold_norm_preserving", [&] {
    Tensor x = random_uniform({2, 4, 8, 12}, rng);
    PatchGrid g(2, 4, 8, 12);
    Tensor t = unfold(x, g);
    std::vector<float> a(x.data(), x.data() + x.size());
    std::vector<float> b(t.data(), t.data() + t.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = 0.0, nb = 0.0;
    for (float v : a) na += static_cast<double>(v) * v;
    for (float v : b) nb += static_cast<double>(v) * v;
    bool ok = a == b && na == nb;
    return std::make_pair(ok, "|x|^2 = " + detail::fmt_double(na) + ", |unfold(x)|^2 = " +
                                  detail::fmt_double(nb) + " (sorted multisets equal: " +
                                  (a == b ? "yes" : "no") + ")");
  });

  detail::add_checked(r, "grid_bijection", [&] {
    for (int trial = 0; trial < 20; ++trial) {
      int ph = 1 + static_cast<int>(rng.index(4));
      int pw = 1 + static_cast<int>(rng.index(4));
      int gh = ph * (1 + static_cast<int>(rng.index(4)));
      int gw = pw * (1 + static_cast<int>(rng.index(4)));
      PatchGrid g(ph, pw, gh, gw);
      for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
          auto [n, p] = g.patch_of(y, x);
          auto [yy, xx] = g.pixel_of(n, p);
          if (yy != y || xx != x) return std::make_pair(false, "mismatch at " +
                                                                  std::to_string(y) + "," +
                                                                  std::to_string(x));
        }
    }
    return std::make_pair(true, std::string("20 grids, every pixel round-trips"));
  });

  detail::add_checked(r, "resize_identity", [&] {
    Tensor x = random_uniform({1, 3, 6, 9}, rng);
    Tensor y = resize_bilinear(x, 6, 9);
    for (int64_t i = 0; i < x.size(); ++i)
      if (y[i] != x[i]) return std::make_pair(false, std::string("same-size resize not exact"));
    return std::make_pair(true, std::string("same-size resize is bit-exact"));
  });
  return r;
}

inline SuiteReport suite_gradcheck(int cases_per_target = 20) {
  SuiteReport r{"gradcheck", {}};
  auto probe = [](const Tensor& y, uint64_t seed) {
    Rng rng(seed);
    Tensor c = random_uniform(y.shape(), rng);
    return sum_all(mul(y, c));
  };
  auto run_target = [&](const std::string& id,
                        const std::function<Tensor(const Tensor&, uint64_t)>& f,
                        const std::function<Tensor(Rng&)>& make_input) {
    double worst = 0.0;
    bool finite = true;
    for (int i = 0; i < cases_per_target && finite; ++i) {
      Rng rng(static_cast<uint64_t>(i) * 977u + 31u);
      Tensor x = make_input(rng);
      uint64_t s = static_cast<uint64_t>(i);
      auto res = grad_check([&](const Tensor& t) { return f(t, s); }, x, 1e-3f, 48,
                            1000u + static_cast<uint64_t>(i));
      finite = res.finite;
      worst = std::max(worst, res.max_rel_error);
    }
    bool pass = finite && worst < 1e-2;
    detail::add_case(r, id, pass,
                     std::string(finite ? "" : "non-finite value seen; ") + "max rel err " +
                         detail::fmt_double(worst) + " over " +
                         std::to_string(cases_per_target) + " cases");
  };

  run_target("matmul",
             [&](const Tensor& t, uint64_t s) { return probe(matmul(t, t), s); },
             [](Rng& rng) { return random_uniform({4, 4}, rng); });
  run_target("softmax",
             [&](const Tensor& t, uint64_t s) { return probe(softmax(t, 1), s); },
             [](Rng& rng) { return random_uniform({3, 5}, rng, -3.0f, 3.0f); });
  run_target("swish", [&](const Tensor& t, uint64_t s) { return probe(swish(t), s); },
             [](Rng& rng) { return random_uniform({2, 3, 3}, rng, -4.0f, 4.0f); });
  run_target("layernorm",
             [&](const Tensor& t, uint64_t s) {
               LayerNorm ln(6);
               return probe(ln.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({4, 6}, rng); });
  run_target("batchnorm_train",
             [&](const Tensor& t, uint64_t s) {
               BatchNorm bn(2);
               return probe(bn.forward(t, Mode::train), s);
             },
             [](Rng& rng) { return random_uniform({2, 2, 3, 3}, rng); });
  run_target("batchnorm_eval",
             [&](const Tensor& t, uint64_t s) {
               BatchNorm bn(2);
               return probe(bn.forward(t, Mode::eval), s);
             },
             [](Rng& rng) { return random_uniform({2, 2, 3, 3}, rng); });
  run_target("conv_dense",
             [&](const Tensor& t, uint64_t s) {
               ConvSpec spec{2, 3, 3, 1, 1, true, false};
               Conv2d conv(spec);
               init_params(conv, Rng(s + 555));
               return probe(conv.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({1, 2, 4, 4}, rng); });
  run_target("conv_depthwise",
             [&](const Tensor& t, uint64_t s) {
               ConvSpec spec{3, 3, 3, 1, 3, true, false};
               Conv2d conv(spec);
               init_params(conv, Rng(s + 556));
               return probe(conv.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({1, 3, 4, 4}, rng); });
  run_target("conv_strided",
             [&](const Tensor& t, uint64_t s) {
               ConvSpec spec{2, 2, 3, 2, 1, true, false};
               Conv2d conv(spec);
               init_params(conv, Rng(s + 557));
               return probe(conv.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({1, 2, 5, 5}, rng); });
  run_target("attention",
             [&](const Tensor& t, uint64_t s) {
               MultiHeadAttention mha(AttentionSpec(8, 2));
               init_params(mha, Rng(s + 558));
               return probe(mha.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({2, 3, 8}, rng); });
  run_target("transformer_layer",
             [&](const Tensor& t, uint64_t s) {
               TransformerLayer layer(16, 2);
               init_params(layer, Rng(s + 559));
               return probe(layer.forward(t), s);
             },
             [](Rng& rng) { return random_uniform({2, 4, 16}, rng); });
  run_target("resize_bilinear",
             [&](const Tensor& t, uint64_t s) { return probe(resize_bilinear(t, 6, 5), s); },
             [](Rng& rng) { return random_uniform({1, 2, 4, 4}, rng); });
  run_target("unfold_fold",
             [&](const Tensor& t, uint64_t s) {
               PatchGrid g(2, 2, 4, 4);
               return probe(fold(unfold(t, g), g), s);
             },
             [](Rng& rng) { return random_uniform({1, 2, 4, 4}, rng); });
  run_target("label_smoothing_ce",
             [&](const Tensor& t, uint64_t) { return label_smoothing_ce(t, {1, 0}, 0.1f); },
             [](Rng& rng) { return random_uniform({2, 4}, rng, -2.0f, 2.0f); });
  run_target("mv2_block",
             [&](const Tensor& t, uint64_t s) {
               MV2Block block(MV2Spec{3, 3, 1, 2});
               init_params(block, Rng(s + 560));
               return probe(block.forward(t, Mode::train), s);
             },
             [](Rng& rng) { return random_uniform({1, 3, 4, 4}, rng); });
  run_target("mobilevit_block",
             [&](const Tensor& t, uint64_t s) {
               MobileViTBlockSpec spec;
               spec.channels = 4;
               spec.dim = 8;
               spec.depth = 1;
               spec.heads = 2;
               MobileViTBlock block(spec);
               init_params(block, Rng(s + 561));
               return probe(block.forward(t, Mode::train), s);
             },
             [](Rng& rng) { return random_uniform({1, 4, 4, 4}, rng); });
  return r;
}

inline SuiteReport suite_params() {
  SuiteReport r{"params", {}};
  Model xxs(ModelConfig::xxs());
  Model xs(ModelConfig::xs());
  Model s(ModelConfig::s());
  const int64_t n_xxs = count_params(xxs), n_xs = count_params(xs), n_s = count_params(s);
  auto within = [](int64_t got, double target) {
    return std::fabs(static_cast<double>(got) - target) / target < 0.03;
  };
  detail::add_case(r, "xxs_1.3M", within(n_xxs, 1.3e6),
                   std::to_string(n_xxs) + " vs 1.3M target");
  detail::add_case(r, "xs_2.3M", within(n_xs, 2.3e6), std::to_string(n_xs) + " vs 2.3M target");
  detail::add_case(r, "s_5.6M", within(n_s, 5.6e6), std::to_string(n_s) + " vs 5.6M target");
  detail::add_case(r, "monotone", n_xxs < n_xs && n_xs < n_s,
                   std::to_string(n_xxs) + " < " + std::to_string(n_xs) + " < " +
                       std::to_string(n_s));

  int64_t vit_share = 0;
  s.visit_params("", [&](const std::string& name, Tensor& t, bool) {
    if (name.find(".vit.") != std::string::npos || name.rfind("head.conv", 0) == 0 ||
        name.rfind("head.bn", 0) == 0)
      vit_share += t.size();
  });
  detail::add_case(r, "vit_share_majority", vit_share * 2 > n_s,
                   "MobileViT blocks + final conv hold " + std::to_string(vit_share) + " of " +
                       std::to_string(n_s));

  ModelConfig cb = ModelConfig::s();
  cb.patches = {8, 4, 2};
  Model sb(cb);
  detail::add_case(r, "patch_invariant", count_params(sb) == n_s,
                   "Config-B count " + std::to_string(count_params(sb)));
  return r;
}

inline SuiteReport suite_sampler() {
  SuiteReport r{"sampler", {}};
  ResolutionSet set = ResolutionSet::default_set(1024);
  const int64_t expect_bt[5] = {4096, 2844, 1600, 1264, 1024};
  bool bt_ok = true;
  std::string bts;
  for (size_t i = 0; i < set.entries.size(); ++i) {
    int64_t bt = batch_size_at(set, set.entries[i]);
    bt_ok = bt_ok && bt == expect_bt[i];
    bts += (i ? "," : "") + std::to_string(bt);
  }
  detail::add_case(r, "bt_values", bt_ok, "{" + bts + "} vs {4096,2844,1600,1264,1024}");

  int64_t standard = count_updates(SamplerMode::standard, set, 1281167, 300, 42);
  detail::add_case(r, "standard_375600", standard == 375600, std::to_string(standard));
  int64_t multi = count_updates(SamplerMode::multiscale, set, 1281167, 300, 42);
  detail::add_case(r, "multiscale_fewer", multi < standard,
                   std::to_string(multi) + " < " + std::to_string(standard));

  detail::add_checked(r, "partition", [&] {
    ResolutionSet small = ResolutionSet::default_set(16);
    for (uint64_t seed : {3ULL, 17ULL}) {
      EpochPlan plan = plan_epoch(small, 1777, seed);
      std::vector<uint8_t> seen(1777, 0);
      int64_t covered = 0;
      for (const auto& step : plan.steps) {
        covered += step.batch_size;
        for (int64_t i = 0; i < step.batch_size; ++i)
          seen[static_cast<size_t>(plan.order[static_cast<size_t>(step.first_index + i)])]++;
      }
      if (covered != 1777) return std::make_pair(false, std::string("batch sizes do not sum"));
      for (uint8_t v : seen)
        if (v != 1) return std::make_pair(false, std::string("index not covered exactly once"));
    }
    return std::make_pair(true, std::string("plans partition the dataset (2 seeds)"));
  });

  detail::add_checked(r, "antitone", [&] {
    int64_t prev = INT64_MAX;
    for (const auto& res : set.entries) {
      int64_t bt = batch_size_at(set, res);
      if (bt > prev) return std::make_pair(false, std::string("batch size not antitone"));
      prev = bt;
    }
    return std::make_pair(prev == 1024, std::string("b_t antitone, b at max resolution"));
  });

  detail::add_checked(r, "concentration", [&] {
    ResolutionSet small = ResolutionSet::default_set(32);
    double sum = 0.0, sq = 0.0;
    const int seeds = 50;
    for (int i = 0; i < seeds; ++i) {
      double u = static_cast<double>(count_updates(SamplerMode::multiscale, small, 200000, 5,
                                                   1000 + static_cast<uint64_t>(i)));
      sum += u;
      sq += u * u;
    }
    double mean = sum / seeds;
    double ratio = std::sqrt(sq / seeds - mean * mean) / mean;
    return std::make_pair(ratio < 0.01, "stdev/mean = " + detail::fmt_double(ratio));
  });
  return r;
}

inline SuiteReport suite_schedule() {
  SuiteReport r{"schedule", {}};
  Schedule s;
  s.total_steps = 90000;
  detail::add_case(r, "lr0", std::fabs(lr_at(s, 0) - 0.0002) < 1e-9,
                   detail::fmt_double(lr_at(s, 0)));
  detail::add_case(r, "lr_warmup_peak", std::fabs(lr_at(s, 3000) - 0.002) < 1e-9,
                   detail::fmt_double(lr_at(s, 3000)));
  detail::add_case(r, "lr_final", std::fabs(lr_at(s, s.total_steps) - 0.0002) < 1e-9,
                   detail::fmt_double(lr_at(s, s.total_steps)));
  double left = lr_at(s, 2999), right = lr_at(s, 3001);
  detail::add_case(r, "continuity", std::fabs(left - 0.002) < 1e-5 && std::fabs(right - 0.002) < 1e-5,
                   "lr(2999)=" + detail::fmt_double(left) + ", lr(3001)=" + detail::fmt_double(right));
  detail::add_case(r, "clamp", std::fabs(lr_at(s, s.total_steps + 12345) - 0.0002) < 1e-12,
                   detail::fmt_double(lr_at(s, s.total_steps + 12345)));
  return r;
}

inline std::vector<std::string> suite_names() {
  return {"roundtrip", "gradcheck", "params", "sampler", "schedule"};
}

inline SuiteReport run_suite(const std::string& name) {
  if (name == "roundtrip") return suite_roundtrip();
  if (name == "gradcheck") return suite_gradcheck();
  if (name == "params") return suite_params();
  if (name == "sampler") return suite_sampler();
  if (name == "schedule") return suite_schedule();
  throw std::invalid_argument("unknown suite '" + name +
                              "' (expected roundtrip, gradcheck, params, sampler or schedule)");
}

// ======================================================================
//  Patch-size study
// ======================================================================

struct PatchStudyRow {
  std::array<int, 3> patches{};
  int64_t params = 0;
  int64_t attention_macs = 0;
  double coverage[3] = {0, 0, 0};   // per MobileViT stage
  bool resize_engaged[3] = {false, false, false};
};

// Structural quantities per patch setting at a fixed input size:
// receptive-field coverage per stage (corner probe), attention-MAC
// totals, and the parameter count. Accuracy claims are out of scope.
inline std::vector<PatchStudyRow> patch_size_study(
    const ModelConfig& base, const std::vector<std::array<int, 3>>& settings, int input_size,
    int trials = 2, uint64_t seed = 0xabcdULL) {
  std::vector<PatchStudyRow> rows;
  for (const auto& setting : settings) {
    ModelConfig cfg = base;
    cfg.patches = setting;
    PatchStudyRow row;
    row.patches = setting;
    Model m(cfg);
    row.params = count_params(m);
    row.attention_macs = attention_cost(cfg, input_size, input_size).total_attention_macs;

    const int strides[3] = {8, 16, 32};
    const int chans[3] = {cfg.c3, cfg.c4, cfg.c5};
    const int dims[3] = {cfg.d3, cfg.d4, cfg.d5};
    const int depths[3] = {cfg.L3, cfg.L4, cfg.L5};
    for (int i = 0; i < 3; ++i) {
      int feat = (input_size + strides[i] - 1) / strides[i];
      MobileViTBlockSpec spec;
      spec.channels = chans[i];
      spec.dim = dims[i];
      spec.depth = depths[i];
      spec.kernel = cfg.kernel;
      spec.patch_h = spec.patch_w = setting[static_cast<size_t>(i)];
      spec.heads = cfg.heads;
      spec.skip = cfg.skip;
      row.resize_engaged[i] = feat % spec.patch_h != 0;
      row.coverage[i] =
          probe_mobilevit_block(spec, feat, feat, 0, 0, trials, seed + static_cast<uint64_t>(i))
              .coverage;
    }
    rows.push_back(row);
  }
  return rows;
}

// ======================================================================
//  Reports
// ======================================================================

inline nlohmann::json suite_to_json(const SuiteReport& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases)
    cases.push_back({{"id", c.id}, {"pass", c.pass}, {"detail", c.detail}});
  return {{"suite", r.name}, {"pass", r.pass()}, {"cases", cases}};
}

inline void print_suite(std::ostream& os, const SuiteReport& r) {
  os << "suite " << r.name << ": " << (r.pass() ? "PASS" : "FAIL") << "\n";
  for (const auto& c : r.cases)
    os << "  [" << (c.pass ? "ok" : "FAIL") << "] " << c.id << " — " << c.detail << "\n";
}

inline nlohmann::json study_to_json(const std::vector<PatchStudyRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"patches", {r.patches[0], r.patches[1], r.patches[2]}},
                   {"params", r.params},
                   {"attention_macs", r.attention_macs},
                   {"coverage", {r.coverage[0], r.coverage[1], r.coverage[2]}},
                   {"resize_engaged", {r.resize_engaged[0], r.resize_engaged[1], r.resize_engaged[2]}}});
  }
  return out;
}

}  // namespace mvt
