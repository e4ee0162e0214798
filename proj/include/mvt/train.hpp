#pragma once
// Toy-scale training: AdamW with decoupled decay, warmup + cosine
// learning-rate schedule, label-smoothing cross-entropy, weight EMA,
// basic augmentation (random resized crop + horizontal flip), and the
// end-to-end loop over synthetic or image-folder datasets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvt/image_io.hpp"
#include "mvt/model.hpp"
#include "mvt/sampler.hpp"

namespace mvt {

// ======================================================================
//  Learning-rate schedule: linear warmup then cosine anneal
// ======================================================================

struct Schedule {
  double warmup_start = 2e-4;
  double peak = 2e-3;
  double final_lr = 2e-4;
  int64_t warmup_steps = 3000;
  int64_t total_steps = 0;
};

inline double lr_at(const Schedule& s, int64_t t) {
  check(t >= 0, "lr_at: negative step");
  if (t > s.total_steps) return s.final_lr;  // clamped past the end
  if (t < s.warmup_steps)
    return s.warmup_start +
           (s.peak - s.warmup_start) * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
  int64_t span = s.total_steps - s.warmup_steps;
  if (span <= 0) return s.peak;
  double phase = static_cast<double>(t - s.warmup_steps) / static_cast<double>(span);
  return s.final_lr + 0.5 * (s.peak - s.final_lr) * (1.0 + std::cos(M_PI * phase));
}

// ======================================================================
//  Label-smoothing cross-entropy
// ======================================================================

// Mean over the batch of -sum_k q_k log softmax(logits)_k with
// q = (1-eps) * onehot + eps / K.
inline Tensor label_smoothing_ce(const Tensor& logits, const std::vector<int>& targets,
                                 float eps = 0.1f) {
  check(logits.rank() == 2, "label_smoothing_ce: logits must be [B,K]");
  const int bsz = logits.dim(0), k = logits.dim(1);
  check(static_cast<int>(targets.size()) == bsz,
        "label_smoothing_ce: " + std::to_string(targets.size()) + " targets for batch " +
            std::to_string(bsz));
  for (int t : targets)
    check(t >= 0 && t < k, "label_smoothing_ce: target " + std::to_string(t) +
                               " outside [0," + std::to_string(k) + ")");

  // Stable log-softmax rows; probabilities saved for the backward rule.
  Tensor probs({bsz, k});
  double loss = 0.0;
  for (int b = 0; b < bsz; ++b) {
    const float* row = logits.data() + static_cast<int64_t>(b) * k;
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    double logz = std::log(sum) + mx;
    for (int j = 0; j < k; ++j) {
      double logp = row[j] - logz;
      probs.data()[static_cast<int64_t>(b) * k + j] = static_cast<float>(std::exp(logp));
      double q = eps / k + (j == targets[static_cast<size_t>(b)] ? 1.0 - eps : 0.0);
      loss -= q * logp;
    }
  }
  Tensor out = Tensor::scalar(static_cast<float>(loss / bsz));
  detail::record_op(out, "label_smoothing_ce", {&logits},
                    [probs, targets, eps, bsz, k](const Tensor& g, const std::vector<bool>&) {
                      Tensor dx({bsz, k});
                      float gscale = g[0] / static_cast<float>(bsz);
                      for (int b = 0; b < bsz; ++b)
                        for (int j = 0; j < k; ++j) {
                          float q = eps / k +
                                    (j == targets[static_cast<size_t>(b)] ? 1.0f - eps : 0.0f);
                          dx.data()[static_cast<int64_t>(b) * k + j] =
                              gscale * (probs[static_cast<int64_t>(b) * k + j] - q);
                        }
                      return std::vector<Tensor>{dx};
                    });
  return out;
}

// ======================================================================
//  AdamW and EMA
// ======================================================================

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled decay applied before the bias-corrected update; parameters
// registered with decay=false (norm scales/shifts, biases) are skipped.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void init(const std::vector<ParamSlot>& slots) {
    m_.clear();
    v_.clear();
    for (const auto& s : slots) {
      m_.emplace_back(s.value->shape());
      v_.emplace_back(s.value->shape());
    }
    steps_ = 0;
  }

  int64_t steps() const { return steps_; }

  void step(std::vector<ParamSlot>& slots, const std::unordered_map<int, Tensor>& grads,
            double lr) {
    check(m_.size() == slots.size(), "adamw: not initialized for this parameter set");
    // Validate every gradient before touching any weight.
    std::vector<const Tensor*> gs(slots.size(), nullptr);
    for (size_t i = 0; i < slots.size(); ++i) {
      auto it = grads.find(slots[i].value->node);
      check(slots[i].value->node >= 0 && it != grads.end(),
            "adamw: no gradient recorded for '" + slots[i].name + "'");
      gs[i] = &it->second;
      for (int64_t j = 0; j < gs[i]->size(); ++j)
        if (!std::isfinite((*gs[i])[j]))
          throw std::runtime_error("adamw: non-finite gradient in '" + slots[i].name +
                                   "' at index " + std::to_string(j) + "; step rejected");
    }
    ++steps_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (size_t i = 0; i < slots.size(); ++i) {
      const Tensor& g = *gs[i];
      Tensor& w = *slots[i].value;
      Tensor next(w.shape());
      float decay_mult =
          slots[i].decay ? static_cast<float>(1.0 - lr * cfg_.weight_decay) : 1.0f;
      for (int64_t j = 0; j < w.size(); ++j) {
        float m = m_[i].data()[j] =
            static_cast<float>(cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j]);
        float v = v_[i].data()[j] = static_cast<float>(
            cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * static_cast<double>(g[j]) * g[j]);
        double mhat = m / bc1;
        double vhat = v / bc2;
        next.data()[j] = static_cast<float>(w[j] * decay_mult -
                                            lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
      w = next;  // replaces data; the old tape node is left behind
    }
  }

 private:
  AdamWConfig cfg_;
  int64_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

// shadow <- decay * shadow + (1 - decay) * weights
class Ema {
 public:
  explicit Ema(double decay = 0.9995) : decay_(decay) {}

  void init(const std::vector<ParamSlot>& slots) {
    shadow_.clear();
    for (const auto& s : slots) shadow_.push_back(s.value->clone());
  }

  void update(const std::vector<ParamSlot>& slots) {
    check(shadow_.size() == slots.size(), "ema: not initialized for this parameter set");
    float d = static_cast<float>(decay_);
    for (size_t i = 0; i < slots.size(); ++i) {
      const Tensor& w = *slots[i].value;
      Tensor next(w.shape());
      for (int64_t j = 0; j < w.size(); ++j)
        next.data()[j] = d * shadow_[i][j] + (1.0f - d) * w[j];
      shadow_[i] = next;
    }
  }

  // Exchanges the live weights with the shadow copies; call twice to
  // restore. BN running stats are not part of the average.
  void swap(std::vector<ParamSlot>& slots) {
    check(shadow_.size() == slots.size(), "ema: not initialized for this parameter set");
    for (size_t i = 0; i < slots.size(); ++i) std::swap(*slots[i].value, shadow_[i]);
  }

  const Tensor& shadow(size_t i) const { return shadow_.at(i); }
  double decay() const { return decay_; }

 private:
  double decay_;
  std::vector<Tensor> shadow_;
};

// ======================================================================
//  Datasets
// ======================================================================

struct Dataset {
  std::vector<Tensor> images;  // each [3,H,W] in [0,1]
  std::vector<int> labels;
  std::vector<std::string> class_names;

  size_t size() const { return images.size(); }
  int classes() const { return static_cast<int>(class_names.size()); }
};

// Labeled Gaussian-blob images: class k gets a distinctive global tint
// plus a class-positioned blob, with pixel noise. The tint survives
// cropping, which keeps the task linearly separable under augmentation.
inline Dataset make_synthetic_blobs(int classes, int per_class, int image_size, uint64_t seed) {
  check(classes >= 2 && classes <= 16, "synthetic dataset: classes must be in [2,16]");
  check(per_class >= 1 && image_size >= 8, "synthetic dataset: bad sizing");
  Dataset ds;
  Rng base(seed);
  const float two_pi = 6.2831853f;
  for (int k = 0; k < classes; ++k) ds.class_names.push_back("class" + std::to_string(k));
  for (int k = 0; k < classes; ++k) {
    // Tints on a color circle, amplitude well above the noise floor.
    float ang = two_pi * k / classes;
    float tint[3] = {0.5f + 0.35f * std::cos(ang), 0.5f + 0.35f * std::sin(ang),
                     0.5f + 0.35f * std::cos(ang + 2.0f)};
    float cy = image_size * (0.5f + 0.3f * std::sin(ang));
    float cx = image_size * (0.5f + 0.3f * std::cos(ang));
    float sigma = image_size / 6.0f;
    for (int i = 0; i < per_class; ++i) {
      Rng rng = base.split("image", static_cast<uint64_t>(k) * 100003u + i);
      Tensor img({3, image_size, image_size});
      const int64_t plane = static_cast<int64_t>(image_size) * image_size;
      for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
          float d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2.0f * sigma * sigma);
          float blob = 0.3f * std::exp(-d2);
          for (int c = 0; c < 3; ++c) {
            float v = tint[c] + (c == k % 3 ? blob : 0.0f) + 0.05f * rng.normal();
            img.data()[c * plane + y * image_size + x] = std::clamp(v, 0.0f, 1.0f);
          }
        }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

// root/<class-name>/*.png|ppm, 8-bit RGB. Classes are sorted by name.
inline Dataset load_image_folder(const std::string& root) {
  namespace fs = std::filesystem;
  check(fs::is_directory(root), "dataset directory '" + root + "' does not exist");
  Dataset ds;
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  check(!class_dirs.empty(), "dataset directory '" + root + "' has no class subdirectories");
  ds.class_names = class_dirs;
  for (size_t k = 0; k < class_dirs.size(); ++k) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / class_dirs[k])) {
      std::string p = entry.path().string();
      if (ends_with(p, ".png") || ends_with(p, ".PNG") || ends_with(p, ".ppm") ||
          ends_with(p, ".PPM"))
        files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ds.images.push_back(image_to_tensor(read_image(f)));
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  check(!ds.images.empty(), "dataset directory '" + root + "' contains no images");
  return ds;
}

// ======================================================================
//  Augmentation
// ======================================================================

struct AugmentConfig {
  bool enabled = true;
  float min_scale = 0.08f;  // area fraction
  float max_scale = 1.0f;
  float min_aspect = 3.0f / 4.0f;
  float max_aspect = 4.0f / 3.0f;
  float hflip_prob = 0.5f;
};

namespace detail {

inline Tensor crop_image(const Tensor& img, int top, int left, int ch, int cw) {
  const int h = img.dim(1), w = img.dim(2);
  Tensor out({3, ch, cw});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ch; ++y)
      std::copy_n(img.data() + (static_cast<int64_t>(c) * h + top + y) * w + left, cw,
                  out.data() + (static_cast<int64_t>(c) * ch + y) * cw);
  return out;
}

inline Tensor hflip_image(const Tensor& img) {
  const int h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.data()[(static_cast<int64_t>(c) * h + y) * w + x] =
            img[(static_cast<int64_t>(c) * h + y) * w + (w - 1 - x)];
  return out;
}

}  // namespace detail

// Random resized crop + horizontal flip, then resize to the target.
// Deterministic in the rng handed in (keyed by sample index upstream).
inline Tensor augment_to(const Tensor& img, int out_h, int out_w, Rng rng,
                         const AugmentConfig& cfg) {
  check(img.rank() == 3 && img.dim(0) == 3, "augment: expects [3,H,W]");
  const int h = img.dim(1), w = img.dim(2);
  Tensor cropped;
  if (!cfg.enabled) {
    cropped = img;
  } else {
    const float area = static_cast<float>(h) * w;
    for (int attempt = 0; attempt < 10 && !cropped.defined(); ++attempt) {
      float target = area * rng.uniform(cfg.min_scale, cfg.max_scale);
      float log_lo = std::log(cfg.min_aspect), log_hi = std::log(cfg.max_aspect);
      float aspect = std::exp(rng.uniform(log_lo, log_hi));
      int cw = static_cast<int>(std::lround(std::sqrt(target * aspect)));
      int ch = static_cast<int>(std::lround(std::sqrt(target / aspect)));
      if (cw < 1 || ch < 1 || cw > w || ch > h) continue;
      int top = static_cast<int>(rng.index(h - ch + 1));
      int left = static_cast<int>(rng.index(w - cw + 1));
      cropped = detail::crop_image(img, top, left, ch, cw);
    }
    if (!cropped.defined()) {  // fallback: centered square crop
      int side = std::min(h, w);
      cropped = detail::crop_image(img, (h - side) / 2, (w - side) / 2, side, side);
    }
    if (rng.uniform() < cfg.hflip_prob) cropped = detail::hflip_image(cropped);
  }
  Tensor batch = cropped.view({1, 3, cropped.dim(1), cropped.dim(2)});
  return resize_bilinear(batch, out_h, out_w).view({3, out_h, out_w});
}

// ======================================================================
//  Training loop
// ======================================================================

struct TrainOptions {
  int epochs = 10;
  int64_t batch = 32;  // base batch (applies at the largest resolution)
  SamplerMode sampler = SamplerMode::standard;
  std::vector<Resolution> resolutions;  // multi-scale set; defaults to {train x train}
  int train_size = 64;                  // standard-sampler and eval resolution
  Schedule schedule;                    // total_steps auto-filled when 0
  AdamWConfig adamw;
  double ema_decay = 0.9995;
  AugmentConfig augment;
  uint64_t seed = 42;
};

struct MetricsRow {
  int epoch = 0;
  std::string split;  // train | eval | eval_ema
  double loss = 0.0;
  double top1 = 0.0;
  double lr = 0.0;
  int64_t updates = 0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  int64_t total_updates = 0;
  std::vector<Resolution> resolutions_seen;
  double best_train_top1 = 0.0;
  double final_train_loss = 0.0;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "epoch,split,loss,top1,lr,updates\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.8g,%lld\n", r.epoch, r.split.c_str(),
                  r.loss, r.top1, r.lr, static_cast<long long>(r.updates));
    os << buf;
  }
}

namespace detail {

struct EvalStats {
  double loss = 0.0;
  double top1 = 0.0;
};

inline EvalStats evaluate(Model& model, const Dataset& ds, int resolution, float smoothing) {
  Mode saved = model.mode;
  model.mode = Mode::eval;
  EvalStats stats;
  const int64_t n = static_cast<int64_t>(ds.size());
  const int64_t bsz = 32;
  int64_t correct = 0;
  double loss = 0.0;
  for (int64_t start = 0; start < n; start += bsz) {
    int64_t take = std::min(bsz, n - start);
    Tensor batch({static_cast<int>(take), 3, resolution, resolution});
    std::vector<int> targets(static_cast<size_t>(take));
    for (int64_t i = 0; i < take; ++i) {
      const Tensor& img = ds.images[static_cast<size_t>(start + i)];
      Tensor resized =
          resize_bilinear(img.view({1, 3, img.dim(1), img.dim(2)}), resolution, resolution);
      std::copy_n(resized.data(), resized.size(),
                  batch.data() + i * 3 * resolution * resolution);
      targets[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(start + i)];
    }
    Tensor logits = model.forward(batch);
    loss += static_cast<double>(label_smoothing_ce(logits, targets, smoothing)[0]) * take;
    const int k = logits.dim(1);
    for (int64_t i = 0; i < take; ++i) {
      const float* row = logits.data() + i * k;
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == targets[static_cast<size_t>(i)]) ++correct;
    }
  }
  stats.loss = loss / static_cast<double>(n);
  stats.top1 = static_cast<double>(correct) / static_cast<double>(n);
  model.mode = saved;
  return stats;
}

}  // namespace detail

// Full recipe: augment -> forward -> smoothed CE -> backward -> AdamW ->
// EMA, with per-epoch train metrics and raw/EMA eval accuracy.
// Deterministic given the seed.
inline TrainResult train_toy(Model& model, const Dataset& train, const Dataset& eval,
                             const TrainOptions& opts) {
  check(!train.images.empty(), "training dataset is empty");
  check(!eval.images.empty(), "eval dataset is empty");
  check(train.classes() == model.config.classes,
        "model expects " + std::to_string(model.config.classes) + " classes, dataset has " +
            std::to_string(train.classes()));

  std::vector<Resolution> res = opts.resolutions;
  if (res.empty()) res = {{opts.train_size, opts.train_size}};
  ResolutionSet set(res, opts.batch);
  if (opts.sampler == SamplerMode::standard)
    set = ResolutionSet({{opts.train_size, opts.train_size}}, opts.batch);

  const int64_t n = static_cast<int64_t>(train.size());
  Schedule sched = opts.schedule;
  if (sched.total_steps == 0) {
    sched.total_steps = count_updates(opts.sampler == SamplerMode::standard
                                          ? SamplerMode::standard
                                          : SamplerMode::multiscale,
                                      set, n, opts.epochs, opts.seed);
    sched.warmup_steps = std::min(sched.warmup_steps, std::max<int64_t>(1, sched.total_steps / 10));
  }

  auto slots = collect_params(model);
  AdamW adamw(opts.adamw);
  adamw.init(slots);
  Ema ema(opts.ema_decay);
  ema.init(slots);

  Rng base(opts.seed);
  TrainResult result;
  const float smoothing = 0.1f;
  int64_t updates = 0;
  double lr = lr_at(sched, 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    EpochPlan plan = plan_epoch(set, n, opts.seed, epoch);
    Rng aug_rng = base.split("augment", static_cast<uint64_t>(epoch));
    double epoch_loss = 0.0;
    int64_t epoch_correct = 0;

    for (const PlanStep& step : plan.steps) {
      const int rh = step.resolution.height, rw = step.resolution.width;
      Tensor batch({static_cast<int>(step.batch_size), 3, rh, rw});
      std::vector<int> targets(static_cast<size_t>(step.batch_size));
      for (int64_t i = 0; i < step.batch_size; ++i) {
        int64_t sample = plan.order[static_cast<size_t>(step.first_index + i)];
        // Augmentation keyed by sample index, not arrival order.
        Tensor aug = augment_to(train.images[static_cast<size_t>(sample)], rh, rw,
                                aug_rng.split("sample", static_cast<uint64_t>(sample)),
                                opts.augment);
        std::copy_n(aug.data(), aug.size(), batch.data() + i * 3 * rh * rw);
        targets[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(sample)];
      }

      Tape tape;
      TapeScope scope(tape);
      for (auto& slot : slots) tape.watch(*slot.value);
      model.mode = Mode::train;
      Tensor logits = model.forward(batch);
      Tensor loss = label_smoothing_ce(logits, targets, smoothing);
      auto grads = tape.backward(loss);
      lr = lr_at(sched, updates);
      adamw.step(slots, grads, lr);
      ema.update(slots);
      ++updates;

      epoch_loss += static_cast<double>(loss[0]) * step.batch_size;
      const int k = logits.dim(1);
      for (int64_t i = 0; i < step.batch_size; ++i) {
        const float* row = logits.data() + i * k;
        int arg = 0;
        for (int j = 1; j < k; ++j)
          if (row[j] > row[arg]) arg = j;
        if (arg == targets[static_cast<size_t>(i)]) ++epoch_correct;
      }
      bool seen = false;
      for (const auto& r : result.resolutions_seen) seen = seen || r == step.resolution;
      if (!seen) result.resolutions_seen.push_back(step.resolution);
    }

    MetricsRow train_row{epoch, "train", epoch_loss / static_cast<double>(n),
                         static_cast<double>(epoch_correct) / static_cast<double>(n), lr,
                         updates};
    result.rows.push_back(train_row);
    result.best_train_top1 = std::max(result.best_train_top1, train_row.top1);
    result.final_train_loss = train_row.loss;

    detail::EvalStats raw = detail::evaluate(model, eval, opts.train_size, smoothing);
    result.rows.push_back(MetricsRow{epoch, "eval", raw.loss, raw.top1, lr, updates});
    ema.swap(slots);
    detail::EvalStats shadow = detail::evaluate(model, eval, opts.train_size, smoothing);
    ema.swap(slots);
    result.rows.push_back(MetricsRow{epoch, "eval_ema", shadow.loss, shadow.top1, lr, updates});
  }
  model.mode = Mode::eval;
  result.total_updates = updates;
  return result;
}

}  // namespace mvt
