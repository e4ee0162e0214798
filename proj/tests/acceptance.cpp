// Acceptance suite: runs every structural claim end to end and prints
// one PASS/FAIL line per criterion. Exit code = number of failures.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvt/verify.hpp"

using namespace mvt;

namespace {

int g_failures = 0;

void report(int id, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] C%d: %s — %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --- C1: parameter counts ------------------------------------------------
void criterion_params() {
  Model xxs(ModelConfig::xxs());
  Model xs(ModelConfig::xs());
  Model s(ModelConfig::s());
  int64_t n_xxs = count_params(xxs), n_xs = count_params(xs), n_s = count_params(s);
  auto rel = [](int64_t got, double target) {
    return std::fabs(static_cast<double>(got) - target) / target;
  };
  double r1 = rel(n_xxs, 1.3e6), r2 = rel(n_xs, 2.3e6), r3 = rel(n_s, 5.6e6);
  bool pass = r1 < 0.03 && r2 < 0.03 && r3 < 0.03;
  report(1, "parameter counts 1.3M/2.3M/5.6M within 3%", pass,
         "XXS=" + std::to_string(n_xxs) + " (" + fmt(100 * r1) + "%), XS=" +
             std::to_string(n_xs) + " (" + fmt(100 * r2) + "%), S=" + std::to_string(n_s) +
             " (" + fmt(100 * r3) + "%)");
}

// --- C2: fold/unfold bijection -------------------------------------------
void criterion_roundtrip() {
  Rng rng(7);
  int exact = 0;
  bool norms_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    int ph = 1 << rng.index(3), pw = 1 << rng.index(3);
    int gh = ph * (1 + static_cast<int>(rng.index(5)));
    int gw = pw * (1 + static_cast<int>(rng.index(5)));
    int bsz = 1 + static_cast<int>(rng.index(2));
    int ch = 1 + static_cast<int>(rng.index(5));
    PatchGrid g(ph, pw, gh, gw);
    Tensor x = random_uniform({bsz, ch, gh, gw}, rng);
    Tensor t = unfold(x, g);
    Tensor back = fold(t, g);
    bool ok = true;
    for (int64_t i = 0; i < x.size() && ok; ++i) ok = back[i] == x[i];
    if (ok) ++exact;
    // Norm preservation: permutations keep the value multiset.
    std::vector<float> a(x.data(), x.data() + x.size());
    std::vector<float> b(t.data(), t.data() + t.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = 0.0, nb = 0.0;
    for (float v : a) na += static_cast<double>(v) * v;
    for (float v : b) nb += static_cast<double>(v) * v;
    norms_ok = norms_ok && a == b && na == nb;
  }
  report(2, "fold/unfold round-trips bit-exactly, unfold preserves the L2 norm",
         exact == 50 && norms_ok,
         std::to_string(exact) + "/50 exact round-trips; norms " +
             (norms_ok ? "exactly preserved" : "NOT preserved"));
}

// --- C3: receptive field --------------------------------------------------
void criterion_receptive_field() {
  MobileViTBlockSpec spec;
  spec.channels = 8;
  spec.dim = 16;
  spec.depth = 1;
  spec.heads = 2;

  spec.patch_h = spec.patch_w = 2;
  double c8 = probe_mobilevit_block(spec, 8, 8, 0, 0).coverage;
  double c16 = probe_mobilevit_block(spec, 16, 16, 0, 0).coverage;
  spec.patch_h = spec.patch_w = 4;
  double c4 = probe_mobilevit_block(spec, 8, 8, 0, 0).coverage;
  double conv = probe_plain_conv(8, 3, 8, 8, 4, 4).coverage;

  bool pass = c8 == 1.0 && c16 == 1.0 && c4 < 1.0 && conv == 9.0 / 64.0;
  report(3, "receptive field: full for h=w=2, partial for h=w=4, conv control 9/64", pass,
         "h2@8x8=" + fmt(c8) + ", h2@16x16=" + fmt(c16) + ", h4@8x8=" + fmt(c4) +
             " (corner probe), conv3x3 center=" + fmt(conv));
}

// --- C4: gradient correctness ----------------------------------------------
void criterion_gradients() {
  SuiteReport r = suite_gradcheck(20);
  double worst = 0.0;
  std::string failing;
  for (const auto& c : r.cases) {
    size_t pos = c.detail.find("max rel err ");
    if (pos != std::string::npos) worst = std::max(worst, std::atof(c.detail.c_str() + pos + 12));
    if (!c.pass) failing += (failing.empty() ? "" : ", ") + c.id;
  }
  report(4, "every layer and both blocks pass central differences (<1e-2, 20 cases each)",
         r.pass(),
         std::to_string(r.cases.size()) + " targets, worst rel err " + fmt(worst) +
             (failing.empty() ? "" : "; failing: " + failing));
}

// --- C5: sampler arithmetic -------------------------------------------------
void criterion_sampler() {
  ResolutionSet set = ResolutionSet::default_set(1024);
  int64_t standard = count_updates(SamplerMode::standard, set, 1281167, 300, 42);
  int64_t multi = count_updates(SamplerMode::multiscale, set, 1281167, 300, 42);
  const int64_t expect_bt[5] = {4096, 2844, 1600, 1264, 1024};
  bool bt_ok = true;
  std::string bts;
  for (size_t i = 0; i < set.entries.size(); ++i) {
    int64_t bt = batch_size_at(set, set.entries[i]);
    bt_ok = bt_ok && bt == expect_bt[i];
    bts += (i ? "," : "") + std::to_string(bt);
  }
  bool pass = standard == 375600 && multi < standard && bt_ok;
  report(5, "sampler arithmetic: 375,600 standard updates, fewer multi-scale, exact b_t set",
         pass,
         "standard=" + std::to_string(standard) + ", multiscale(seed 42)=" +
             std::to_string(multi) + ", b_t={" + bts + "}");
}

// --- C6: learning-rate schedule ----------------------------------------------
void criterion_schedule() {
  Schedule s;
  s.total_steps = 120000;
  double e0 = std::fabs(lr_at(s, 0) - 0.0002);
  double ew = std::fabs(lr_at(s, 3000) - 0.002);
  double ef = std::fabs(lr_at(s, s.total_steps) - 0.0002);
  double jump = std::fabs(lr_at(s, 2999) - lr_at(s, 3001));
  bool pass = e0 < 1e-9 && ew < 1e-9 && ef < 1e-9 && jump < 1e-5;
  report(6, "schedule anchors exact to 1e-9 and continuous at the warmup boundary", pass,
         "|lr(0)-2e-4|=" + fmt(e0) + ", |lr(3000)-2e-3|=" + fmt(ew) + ", |lr(T)-2e-4|=" +
             fmt(ef) + ", boundary jump=" + fmt(jump));
}

// --- C7: multi-scale forward ---------------------------------------------------
void criterion_multiscale_forward() {
  Model m = build(ModelConfig::xxs(), 11);
  Rng rng(71);
  bool pass = true;
  std::string detail;
  for (int res : {160, 192, 256, 288, 320}) {
    Tensor x = random_uniform({1, 3, res, res}, rng, 0.0f, 1.0f);
    Tensor logits = m.forward(x);
    bool finite = logits.shape() == Shape{1, 1000};
    for (int64_t i = 0; i < logits.size() && finite; ++i) finite = std::isfinite(logits[i]);
    pass = pass && finite;
    detail += std::to_string(res) + (finite ? ":ok " : ":BAD ");
  }
  report(7, "one XXS weight set yields finite logits at 160..320 squared", pass, detail);
}

// --- C8: toy training -------------------------------------------------------------
void criterion_training() {
  Dataset train = make_synthetic_blobs(4, 32, 32, 11);
  Dataset eval = make_synthetic_blobs(4, 8, 32, 12);

  // Separability oracle: one-vs-rest perceptron must reach zero errors.
  bool separable = false;
  {
    const int64_t dim = train.images[0].size();
    std::vector<std::vector<double>> w(4, std::vector<double>(static_cast<size_t>(dim) + 1, 0.0));
    for (int pass_i = 0; pass_i < 100 && !separable; ++pass_i) {
      int mistakes = 0;
      for (size_t i = 0; i < train.size(); ++i) {
        int best = 0;
        double best_score = -1e300;
        for (int k = 0; k < 4; ++k) {
          double sc = w[static_cast<size_t>(k)][static_cast<size_t>(dim)];
          for (int64_t j = 0; j < dim; ++j)
            sc += w[static_cast<size_t>(k)][static_cast<size_t>(j)] * train.images[i][j];
          if (sc > best_score) {
            best_score = sc;
            best = k;
          }
        }
        int truth = train.labels[i];
        if (best != truth) {
          ++mistakes;
          for (int64_t j = 0; j < dim; ++j) {
            w[static_cast<size_t>(truth)][static_cast<size_t>(j)] += train.images[i][j];
            w[static_cast<size_t>(best)][static_cast<size_t>(j)] -= train.images[i][j];
          }
          w[static_cast<size_t>(truth)][static_cast<size_t>(dim)] += 1.0;
          w[static_cast<size_t>(best)][static_cast<size_t>(dim)] -= 1.0;
        }
      }
      separable = mistakes == 0;
    }
  }

  TrainOptions opts;
  opts.epochs = 50;
  opts.batch = 16;
  opts.train_size = 32;
  opts.seed = 42;
  Model m = build(ModelConfig::micro(), 7);
  TrainResult r = train_toy(m, train, eval, opts);

  // Reached 95% within 50 epochs, and the epoch it first happened.
  int reached_at = -1;
  for (const auto& row : r.rows)
    if (row.split == "train" && row.top1 >= 0.95 && reached_at < 0) reached_at = row.epoch;

  // Monotone trend: the best-so-far loss keeps improving overall.
  double first_loss = 0.0, best_final = 1e300;
  bool saw_first = false;
  int improvements = 0;
  double running = 1e300;
  for (const auto& row : r.rows) {
    if (row.split != "train") continue;
    if (!saw_first) {
      first_loss = row.loss;
      saw_first = true;
    }
    if (row.loss < running) {
      running = row.loss;
      ++improvements;
    }
  }
  best_final = running;
  bool trend = best_final < first_loss && improvements >= 5;

  // Determinism: identical seeds give identical CSVs (short runs).
  TrainOptions short_opts = opts;
  short_opts.epochs = 5;
  Model d1 = build(ModelConfig::micro(), 7);
  Model d2 = build(ModelConfig::micro(), 7);
  std::ostringstream csv1, csv2;
  write_metrics_csv(csv1, train_toy(d1, train, eval, short_opts).rows);
  write_metrics_csv(csv2, train_toy(d2, train, eval, short_opts).rows);
  bool deterministic = csv1.str() == csv2.str();

  bool pass = separable && reached_at >= 0 && reached_at < 50 && trend && deterministic;
  report(8, "toy training: separable 4-class task hits 95% within 50 epochs", pass,
         std::string("separable=") + (separable ? "yes" : "NO") + ", 95% at epoch " +
             std::to_string(reached_at) + ", best top1 " + fmt(r.best_train_top1) +
             ", best-so-far loss " + fmt(first_loss) + " -> " + fmt(best_final) + " (" +
             std::to_string(improvements) + " improvements), identical CSVs: " +
             (deterministic ? "yes" : "NO"));
}

// --- C9: patch-size study ------------------------------------------------------------
void criterion_patch_study() {
  std::vector<std::array<int, 3>> settings{{2, 2, 2}, {3, 3, 3}, {4, 4, 4}, {8, 4, 2}};
  std::vector<int64_t> params;
  for (const auto& p : settings) {
    ModelConfig cfg = ModelConfig::s();
    cfg.patches = p;
    Model m(cfg);
    params.push_back(count_params(m));
  }
  bool equal = params[0] == params[1] && params[1] == params[2] && params[2] == params[3];

  ModelConfig ca = ModelConfig::s();
  ModelConfig cb = ModelConfig::s();
  cb.patches = {8, 4, 2};
  int64_t macs_a = attention_cost(ca, 256, 256).total_attention_macs;
  int64_t macs_b = attention_cost(cb, 256, 256).total_attention_macs;

  bool pass = equal && macs_b < macs_a;
  report(9, "patch settings keep parameters constant; Config-B attends cheaper than Config-A",
         pass,
         "params={" + std::to_string(params[0]) + "," + std::to_string(params[1]) + "," +
             std::to_string(params[2]) + "," + std::to_string(params[3]) + "}, attention MACs " +
             std::to_string(macs_b) + " (B) < " + std::to_string(macs_a) + " (A)");
}

// --- C10: persistence + closed forms ---------------------------------------------------
void criterion_persistence_closed_forms() {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "mvt_acceptance";
  fs::create_directories(dir);
  std::string p1 = (dir / "a.mvtw").string();
  std::string p2 = (dir / "b.mvtw").string();

  Model m = build(ModelConfig::micro(), 3);
  save_weights(m, p1);
  Model loaded(ModelConfig::micro());
  load_weights(loaded, p1);
  save_weights(loaded, p2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  bool roundtrip = slurp(p1) == slurp(p2) && !slurp(p1).empty();
  fs::remove_all(dir);

  // EMA two-step recurrence: shadow=0, weights=1, decay 0.9 -> 0.19.
  Tensor w(Shape{1});
  std::vector<ParamSlot> slots{{"w", &w, true}};
  Ema ema(0.9);
  ema.init(slots);
  w = Tensor({1}, {1.0f});
  ema.update(slots);
  ema.update(slots);
  double ema_err = std::fabs(ema.shadow(0)[0] - 0.19);

  // Smoothed CE closed form: K=2, logits [ln3, 0], target 0, eps 0.1.
  Tensor logits({1, 2}, {std::log(3.0f), 0.0f});
  double expect = -(0.95 * std::log(0.75) + 0.05 * std::log(0.25));
  double ce_err = std::fabs(label_smoothing_ce(logits, {0}, 0.1f)[0] - expect);

  bool pass = roundtrip && ema_err < 1e-6 && ce_err < 1e-6;
  report(10, "weights round-trip bit-exactly; EMA and smoothed-CE closed forms to 1e-6", pass,
         std::string("bytes identical: ") + (roundtrip ? "yes" : "NO") + ", |ema-0.19|=" +
             fmt(ema_err) + ", |ce-" + fmt(expect) + "|=" + fmt(ce_err));
}

}  // namespace

int main() {
  std::printf("MobileViT acceptance suite\n");
  criterion_params();
  criterion_roundtrip();
  criterion_receptive_field();
  criterion_gradients();
  criterion_sampler();
  criterion_schedule();
  criterion_multiscale_forward();
  criterion_training();
  criterion_patch_study();
  criterion_persistence_closed_forms();
  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures;
}
