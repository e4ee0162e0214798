#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "mvt/train.hpp"

using namespace mvt;

namespace {

// Plain double-precision cross-entropy oracle.
double ce_ref(const std::vector<double>& logits, int target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return -(logits[static_cast<size_t>(target)] - mx - std::log(sum));
}

std::pair<std::vector<ParamSlot>, std::unordered_map<int, Tensor>> one_param_step_inputs(
    Tensor& w, Tape& tape, const Tensor& grad, bool decay) {
  std::vector<ParamSlot> slots{{"w", &w, decay}};
  tape.watch(w);
  std::unordered_map<int, Tensor> grads;
  grads.emplace(w.node, grad);
  return {slots, grads};
}

}  // namespace

TEST_CASE("learning-rate schedule hits the documented anchors", "[train]") {
  Schedule s;
  s.total_steps = 100000;
  REQUIRE(std::fabs(lr_at(s, 0) - 0.0002) < 1e-9);
  REQUIRE(std::fabs(lr_at(s, 3000) - 0.002) < 1e-9);
  REQUIRE(std::fabs(lr_at(s, 100000) - 0.0002) < 1e-9);
  // Clamped past the end.
  REQUIRE(std::fabs(lr_at(s, 100001) - 0.0002) < 1e-12);
  REQUIRE(std::fabs(lr_at(s, 10 * s.total_steps) - 0.0002) < 1e-12);
}

TEST_CASE("schedule is continuous at the warmup boundary", "[train]") {
  Schedule s;
  s.total_steps = 50000;
  double left = lr_at(s, 2999);
  double at = lr_at(s, 3000);
  double right = lr_at(s, 3001);
  REQUIRE(std::fabs(at - 0.002) < 1e-9);
  REQUIRE(std::fabs(left - at) < 1e-5);
  REQUIRE(std::fabs(right - at) < 1e-5);
  // Linear ramp in between.
  REQUIRE(std::fabs(lr_at(s, 1500) - 0.0011) < 1e-9);
}

TEST_CASE("uniform logits give loss ln K for any smoothing", "[train]") {
  for (float eps : {0.0f, 0.1f, 0.5f}) {
    Tensor logits({2, 5});
    Tensor loss = label_smoothing_ce(logits, {0, 3}, eps);
    REQUIRE(loss[0] == Catch::Approx(std::log(5.0)).margin(1e-6));
  }
}

TEST_CASE("zero smoothing reduces to standard cross-entropy", "[train]") {
  Rng rng(80);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(6));
    Tensor logits = random_uniform({1, k}, rng, -3.0f, 3.0f);
    int target = static_cast<int>(rng.index(k));
    Tensor loss = label_smoothing_ce(logits, {target}, 0.0f);
    std::vector<double> row(logits.data(), logits.data() + k);
    REQUIRE(loss[0] == Catch::Approx(ce_ref(row, target)).margin(1e-5));
  }
}

TEST_CASE("two-class closed form: logits [ln3, 0], target 0, eps 0.1", "[train]") {
  Tensor logits({1, 2}, {std::log(3.0f), 0.0f});
  Tensor loss = label_smoothing_ce(logits, {0}, 0.1f);
  // Scalar oracle: softmax = (3/4, 1/4), q = (0.95, 0.05).
  double expect = -(0.95 * std::log(0.75) + 0.05 * std::log(0.25));
  REQUIRE(expect == Catch::Approx(0.342613).margin(5e-7));
  REQUIRE(loss[0] == Catch::Approx(expect).margin(1e-6));
}

TEST_CASE("out-of-range targets are rejected", "[train]") {
  Tensor logits({2, 3});
  REQUIRE_THROWS_WITH(label_smoothing_ce(logits, {0, 3}, 0.1f),
                      Catch::Matchers::ContainsSubstring("target 3"));
  REQUIRE_THROWS_AS(label_smoothing_ce(logits, {-1, 0}, 0.1f), std::invalid_argument);
}

TEST_CASE("smoothed CE is minimized at softmax == q with value H(q)", "[train]") {
  const float eps = 0.1f;
  const int k = 3;
  // Descend on a single logit row with our own gradients.
  Tensor logits({1, k}, {1.0f, -0.5f, 0.3f});
  for (int iter = 0; iter < 800; ++iter) {
    Tape tape;
    TapeScope scope(tape);
    tape.watch(logits);
    Tensor loss = label_smoothing_ce(logits, {1}, eps);
    auto grads = tape.backward(loss);
    const Tensor& g = grads.at(logits.node);
    Tensor next({1, k});
    for (int j = 0; j < k; ++j) next.data()[j] = logits[j] - 2.0f * g[j];
    logits = next;
  }
  double q[3] = {eps / k, 1.0 - eps + eps / k, eps / k};
  double entropy = 0.0;
  for (double v : q) entropy -= v * std::log(v);
  Tensor final_loss = label_smoothing_ce(logits, {1}, eps);
  REQUIRE(final_loss[0] == Catch::Approx(entropy).margin(1e-4));
  Tensor probs = softmax(logits, 1);
  for (int j = 0; j < k; ++j) REQUIRE(probs[j] == Catch::Approx(q[j]).margin(1e-3));
}

TEST_CASE("label-smoothing gradients pass central differences", "[train][gradcheck]") {
  Rng rng(81);
  Tensor logits = random_uniform({3, 4}, rng, -2.0f, 2.0f);
  auto f = [](const Tensor& t) { return label_smoothing_ce(t, {1, 0, 3}, 0.1f); };
  auto res = grad_check(f, logits, 1e-3f, 32, 82);
  REQUIRE(res.finite);
  REQUIRE(res.max_rel_error < 1e-2);
}

TEST_CASE("adamw: zero gradient and zero decay leave weights alone", "[train]") {
  Tensor w({3}, {0.5f, -1.0f, 2.0f});
  Tensor w0 = w.clone();
  Tape tape;
  TapeScope scope(tape);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  auto [slots, grads] = one_param_step_inputs(w, tape, Tensor(Shape{3}), true);
  opt.init(slots);
  opt.step(slots, grads, 0.1);
  for (int i = 0; i < 3; ++i) REQUIRE(w[i] == w0[i]);
}

TEST_CASE("adamw: zero gradient with decay scales weights by 1 - lr*wd", "[train]") {
  Tensor w({2}, {1.0f, -4.0f});
  Tape tape;
  TapeScope scope(tape);
  AdamW opt(AdamWConfig{});  // wd = 0.01
  auto [slots, grads] = one_param_step_inputs(w, tape, Tensor(Shape{2}), true);
  opt.init(slots);
  opt.step(slots, grads, 0.1);
  REQUIRE(w[0] == 1.0f * static_cast<float>(1.0 - 0.1 * 0.01));
  REQUIRE(w[0] == Catch::Approx(0.999).margin(1e-7));
  REQUIRE(w[1] == Catch::Approx(-3.996).margin(1e-6));
}

TEST_CASE("adamw: hand-iterated first step on a scalar", "[train]") {
  // w=0, g=1, lr=0.001: bias-corrected m^=1, v^=1 -> w = -0.001.
  Tensor w(Shape{1});
  Tape tape;
  TapeScope scope(tape);
  AdamW opt(AdamWConfig{});
  auto [slots, grads] = one_param_step_inputs(w, tape, Tensor({1}, {1.0f}), true);
  opt.init(slots);
  opt.step(slots, grads, 0.001);
  REQUIRE(w[0] == Catch::Approx(-0.001).margin(1e-8));
}

TEST_CASE("adamw: decay excludes parameters registered without decay", "[train]") {
  Tensor w({1}, {2.0f});
  Tape tape;
  TapeScope scope(tape);
  AdamW opt(AdamWConfig{});
  auto [slots, grads] = one_param_step_inputs(w, tape, Tensor(Shape{1}), /*decay=*/false);
  opt.init(slots);
  opt.step(slots, grads, 0.1);
  REQUIRE(w[0] == 2.0f);  // untouched: zero grad and no decay
}

TEST_CASE("adamw: non-finite gradients reject the step with a diagnostic", "[train]") {
  Tensor w({2}, {1.0f, 1.0f});
  Tensor w0 = w.clone();
  Tape tape;
  TapeScope scope(tape);
  AdamW opt(AdamWConfig{});
  Tensor bad({2}, {0.0f, std::nanf("")});
  auto [slots, grads] = one_param_step_inputs(w, tape, bad, true);
  opt.init(slots);
  REQUIRE_THROWS_WITH(opt.step(slots, grads, 0.01),
                      Catch::Matchers::ContainsSubstring("non-finite gradient") &&
                          Catch::Matchers::ContainsSubstring("'w'"));
  for (int i = 0; i < 2; ++i) REQUIRE(w[i] == w0[i]);  // nothing applied
}

TEST_CASE("adamw: N zero-gradient steps shrink by exactly (1-lr*wd)^N", "[train]") {
  const double lr = 0.01, wd = 0.1;
  Tensor w({1}, {3.0f});
  AdamWConfig cfg;
  cfg.weight_decay = wd;
  AdamW opt(cfg);
  float expect = 3.0f;
  const float mult = static_cast<float>(1.0 - lr * wd);
  for (int n = 0; n < 5; ++n) {
    Tape tape;
    TapeScope scope(tape);
    auto [slots, grads] = one_param_step_inputs(w, tape, Tensor(Shape{1}), true);
    if (n == 0) opt.init(slots);
    opt.step(slots, grads, lr);
    expect *= mult;  // same float op sequence
    REQUIRE(w[0] == expect);
  }
}

TEST_CASE("ema boundary decays and the two-step recurrence", "[train]") {
  Tensor w({2}, {1.0f, -2.0f});
  std::vector<ParamSlot> slots{{"w", &w, true}};

  Ema copy_all(0.0);  // shadow = weights
  copy_all.init(slots);
  w = Tensor({2}, {5.0f, 6.0f});
  copy_all.update(slots);
  REQUIRE(copy_all.shadow(0)[0] == 5.0f);
  REQUIRE(copy_all.shadow(0)[1] == 6.0f);

  Ema frozen(1.0);  // shadow never moves
  w = Tensor({2}, {1.0f, -2.0f});
  frozen.init(slots);
  w = Tensor({2}, {9.0f, 9.0f});
  frozen.update(slots);
  REQUIRE(frozen.shadow(0)[0] == 1.0f);
  REQUIRE(frozen.shadow(0)[1] == -2.0f);

  // shadow=0, weights=1, decay 0.9, two updates -> 0.19.
  Tensor w2(Shape{1});
  std::vector<ParamSlot> slots2{{"w", &w2, true}};
  Ema ema(0.9);
  ema.init(slots2);
  w2 = Tensor({1}, {1.0f});
  ema.update(slots2);
  ema.update(slots2);
  REQUIRE(ema.shadow(0)[0] == Catch::Approx(0.19).margin(1e-6));
}

TEST_CASE("augmentation is deterministic per (seed, sample) and shapes out", "[train]") {
  Rng rng(83);
  Tensor img = random_uniform({3, 40, 40}, rng, 0.0f, 1.0f);
  AugmentConfig cfg;
  Rng key = Rng(7).split("augment", 3).split("sample", 11);
  Tensor a = augment_to(img, 32, 32, key, cfg);
  Tensor b = augment_to(img, 32, 32, key, cfg);
  REQUIRE(a.shape() == Shape{3, 32, 32});
  for (int64_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  AugmentConfig off;
  off.enabled = false;
  Tensor c = augment_to(img, 24, 24, key, off);
  Tensor d = resize_bilinear(img.view({1, 3, 40, 40}), 24, 24);
  for (int64_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == d[i]);
}

TEST_CASE("synthetic blob dataset is deterministic and balanced", "[train]") {
  Dataset a = make_synthetic_blobs(4, 8, 32, 5);
  Dataset b = make_synthetic_blobs(4, 8, 32, 5);
  REQUIRE(a.size() == 32);
  REQUIRE(a.classes() == 4);
  int counts[4] = {0, 0, 0, 0};
  for (int label : a.labels) ++counts[label];
  for (int c : counts) REQUIRE(c == 8);
  for (size_t i = 0; i < a.size(); ++i)
    for (int64_t j = 0; j < a.images[i].size(); ++j)
      REQUIRE(a.images[i][j] == b.images[i][j]);
}

TEST_CASE("synthetic task is linearly separable (perceptron oracle)", "[train]") {
  Dataset ds = make_synthetic_blobs(4, 16, 32, 9);
  const int64_t dim = ds.images[0].size();
  std::vector<std::vector<double>> w(4, std::vector<double>(static_cast<size_t>(dim) + 1, 0.0));
  auto score = [&](int k, const Tensor& img) {
    double s = w[static_cast<size_t>(k)][static_cast<size_t>(dim)];
    for (int64_t i = 0; i < dim; ++i) s += w[static_cast<size_t>(k)][static_cast<size_t>(i)] * img[i];
    return s;
  };
  bool separated = false;
  for (int pass = 0; pass < 100 && !separated; ++pass) {
    int mistakes = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
      int best = 0;
      for (int k = 1; k < 4; ++k)
        if (score(k, ds.images[i]) > score(best, ds.images[i])) best = k;
      int truth = ds.labels[i];
      if (best != truth) {
        ++mistakes;
        for (int64_t j = 0; j < dim; ++j) {
          w[static_cast<size_t>(truth)][static_cast<size_t>(j)] += ds.images[i][j];
          w[static_cast<size_t>(best)][static_cast<size_t>(j)] -= ds.images[i][j];
        }
        w[static_cast<size_t>(truth)][static_cast<size_t>(dim)] += 1.0;
        w[static_cast<size_t>(best)][static_cast<size_t>(dim)] -= 1.0;
      }
    }
    separated = mistakes == 0;
  }
  REQUIRE(separated);
}

TEST_CASE("toy training reduces the loss and is seed-deterministic", "[train][slow]") {
  Dataset train = make_synthetic_blobs(4, 8, 32, 11);
  Dataset eval = make_synthetic_blobs(4, 4, 32, 12);
  TrainOptions opts;
  opts.epochs = 4;
  opts.batch = 8;
  opts.train_size = 32;
  opts.seed = 21;

  Model m1 = build(ModelConfig::micro(), 101);
  TrainResult r1 = train_toy(m1, train, eval, opts);
  REQUIRE(r1.rows.size() == static_cast<size_t>(opts.epochs) * 3);
  double first_loss = r1.rows.front().loss;
  REQUIRE(r1.final_train_loss < first_loss);

  Model m2 = build(ModelConfig::micro(), 101);
  TrainResult r2 = train_toy(m2, train, eval, opts);
  std::ostringstream csv1, csv2;
  write_metrics_csv(csv1, r1.rows);
  write_metrics_csv(csv2, r2.rows);
  REQUIRE(csv1.str() == csv2.str());

  Model m3 = build(ModelConfig::micro(), 101);
  TrainOptions other = opts;
  other.seed = 22;
  TrainResult r3 = train_toy(m3, train, eval, other);
  std::ostringstream csv3;
  write_metrics_csv(csv3, r3.rows);
  REQUIRE(csv1.str() != csv3.str());
}

TEST_CASE("multi-scale training touches every resolution and saves updates", "[train][slow]") {
  Dataset train = make_synthetic_blobs(4, 24, 32, 13);
  Dataset eval = make_synthetic_blobs(4, 4, 32, 14);
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch = 8;
  opts.train_size = 48;
  opts.sampler = SamplerMode::multiscale;
  opts.resolutions = {{24, 24}, {32, 32}, {48, 48}};
  opts.seed = 31;  // chosen so the 2-epoch plan draws all three resolutions

  Model m = build(ModelConfig::micro(), 103);
  TrainResult r = train_toy(m, train, eval, opts);
  REQUIRE(r.resolutions_seen.size() == 3);

  ResolutionSet set({{24, 24}, {32, 32}, {48, 48}}, opts.batch);
  int64_t standard =
      count_updates(SamplerMode::standard, set, static_cast<int64_t>(train.size()), opts.epochs, opts.seed);
  REQUIRE(r.total_updates < standard);
}

TEST_CASE("image folder datasets load both PPM and PNG", "[train]") {
  namespace fs = std::filesystem;
  fs::path root = fs::temp_directory_path() / "mvt_folder_ds";
  fs::remove_all(root);
  fs::create_directories(root / "cats");
  fs::create_directories(root / "dogs");

  Rng rng(85);
  auto make_image = [&](float base) {
    Image img;
    img.width = 20;
    img.height = 16;
    img.rgb.resize(20 * 16 * 3);
    for (size_t i = 0; i < img.rgb.size(); ++i)
      img.rgb[i] = static_cast<uint8_t>(
          std::clamp(base * 255.0f + 40.0f * static_cast<float>(rng.uniform()), 0.0f, 255.0f));
    return img;
  };
  write_ppm((root / "cats" / "a.ppm").string(), make_image(0.2f));
  write_png((root / "cats" / "b.png").string(), make_image(0.25f));
  write_png((root / "dogs" / "a.png").string(), make_image(0.7f));
  write_ppm((root / "dogs" / "b.ppm").string(), make_image(0.75f));

  Dataset ds = load_image_folder(root.string());
  REQUIRE(ds.size() == 4);
  REQUIRE(ds.class_names == std::vector<std::string>{"cats", "dogs"});
  REQUIRE(ds.labels == std::vector<int>{0, 0, 1, 1});
  REQUIRE(ds.images[0].shape() == Shape{3, 16, 20});

  REQUIRE_THROWS_WITH(load_image_folder((root / "missing").string()),
                      Catch::Matchers::ContainsSubstring("does not exist"));
  fs::remove_all(root);
}

TEST_CASE("PPM and PNG round-trip bytes", "[train]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "mvt_img_io";
  fs::create_directories(dir);
  Image img;
  img.width = 7;
  img.height = 5;
  img.rgb.resize(7 * 5 * 3);
  Rng rng(86);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.index(256));

  write_ppm((dir / "x.ppm").string(), img);
  Image ppm = read_ppm((dir / "x.ppm").string());
  REQUIRE(ppm.width == 7);
  REQUIRE(ppm.height == 5);
  REQUIRE(ppm.rgb == img.rgb);

  write_png((dir / "x.png").string(), img);
  Image png = read_png((dir / "x.png").string());
  REQUIRE(png.rgb == img.rgb);
  fs::remove_all(dir);
}

TEST_CASE("empty datasets are rejected", "[train]") {
  Model m = build(ModelConfig::micro(), 1);
  Dataset empty;
  empty.class_names = {"a", "b", "c", "d"};
  Dataset ok = make_synthetic_blobs(4, 2, 32, 1);
  TrainOptions opts;
  REQUIRE_THROWS_WITH(train_toy(m, empty, ok, opts),
                      Catch::Matchers::ContainsSubstring("empty"));
}
