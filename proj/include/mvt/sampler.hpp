#pragma once
// Multi-scale variably-sized batch sampler and the standard
// fixed-resolution baseline, plus the update-count simulator.
//
// Batch size at resolution (Ht,Wt): b_t = max(1, floor(Hn*Wn*b / (Ht*Wt)))
// where (Hn,Wn) is the largest resolution and b its batch size.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mvt/rng.hpp"
#include "mvt/tensor.hpp"

namespace mvt {

struct Resolution {
  int height = 0;
  int width = 0;
  int64_t area() const { return static_cast<int64_t>(height) * width; }
  bool operator==(const Resolution&) const = default;
};

struct ResolutionSet {
  std::vector<Resolution> entries;  // strictly increasing by area
  int64_t base_batch = 0;           // batch size at the largest resolution

  ResolutionSet(std::vector<Resolution> res, int64_t b) : entries(std::move(res)), base_batch(b) {
    check(!entries.empty(), "resolution set must not be empty");
    check(base_batch >= 1, "base batch size must be >= 1");
    for (size_t i = 1; i < entries.size(); ++i)
      check(entries[i].area() > entries[i - 1].area(),
            "resolution set must be strictly increasing by area");
    for (const auto& r : entries)
      check(r.height >= 1 && r.width >= 1, "resolutions must be positive");
  }

  const Resolution& max() const { return entries.back(); }

  // The training set used throughout: {160, 192, 256, 288, 320} squares.
  static ResolutionSet default_set(int64_t base_batch = 1024) {
    return ResolutionSet(
        {{160, 160}, {192, 192}, {256, 256}, {288, 288}, {320, 320}}, base_batch);
  }
};

inline int64_t batch_size_at(const ResolutionSet& set, Resolution r) {
  bool found = false;
  for (const auto& e : set.entries)
    if (e == r) {
      found = true;
      break;
    }
  check(found, "resolution " + std::to_string(r.height) + "x" + std::to_string(r.width) +
                   " is not in the sampler set");
  int64_t bt = set.max().area() * set.base_batch / r.area();  // floor
  return bt < 1 ? 1 : bt;
}

struct PlanStep {
  Resolution resolution;
  int64_t batch_size = 0;   // actual size; the final step may be short
  int64_t first_index = 0;  // offset into the shuffled order
};

struct EpochPlan {
  std::vector<PlanStep> steps;
  std::vector<int64_t> order;  // shuffled sample indices, |order| = dataset size

  int64_t dataset_size() const { return static_cast<int64_t>(order.size()); }
};

namespace detail {

inline Rng epoch_rng(uint64_t seed, int epoch) { return Rng(seed).split("epoch", static_cast<uint64_t>(epoch)); }

}  // namespace detail

// Shuffles sample indices, then repeatedly draws a resolution uniformly
// from the set and takes the next b_t indices (final batch truncated).
// Deterministic given (seed, epoch, set, dataset_size).
inline EpochPlan plan_epoch(const ResolutionSet& set, int64_t dataset_size, uint64_t seed,
                            int epoch = 0) {
  check(dataset_size >= 1, "plan_epoch: dataset must not be empty");
  Rng base = detail::epoch_rng(seed, epoch);
  Rng shuffle_rng = base.split("shuffle");
  Rng res_rng = base.split("resolution");

  EpochPlan plan;
  plan.order.resize(static_cast<size_t>(dataset_size));
  for (int64_t i = 0; i < dataset_size; ++i) plan.order[static_cast<size_t>(i)] = i;
  shuffle_rng.shuffle(plan.order);

  int64_t cursor = 0;
  while (cursor < dataset_size) {
    const Resolution& r =
        set.entries[static_cast<size_t>(res_rng.index(static_cast<int64_t>(set.entries.size())))];
    int64_t bt = batch_size_at(set, r);
    int64_t take = std::min(bt, dataset_size - cursor);
    plan.steps.push_back(PlanStep{r, take, cursor});
    cursor += take;
  }
  return plan;
}

enum class SamplerMode { standard, multiscale };

inline SamplerMode parse_sampler_mode(const std::string& name) {
  if (name == "standard") return SamplerMode::standard;
  if (name == "multiscale" || name == "multi-scale") return SamplerMode::multiscale;
  throw std::invalid_argument("unknown sampler '" + name + "' (expected standard or multiscale)");
}

// Optimizer updates over a whole run. Standard mode is
// epochs * ceil(dataset/b); multi-scale mode replays the plan's
// resolution draws without materializing index permutations, so it
// matches plan_epoch batch-for-batch.
inline int64_t count_updates(SamplerMode mode, const ResolutionSet& set, int64_t dataset_size,
                             int epochs, uint64_t seed) {
  check(dataset_size >= 1, "count_updates: dataset must not be empty");
  check(epochs >= 0, "count_updates: negative epoch count");
  if (mode == SamplerMode::standard)
    return static_cast<int64_t>(epochs) *
           ((dataset_size + set.base_batch - 1) / set.base_batch);
  int64_t total = 0;
  for (int e = 0; e < epochs; ++e) {
    Rng res_rng = detail::epoch_rng(seed, e).split("resolution");
    int64_t cursor = 0;
    while (cursor < dataset_size) {
      const Resolution& r = set.entries[static_cast<size_t>(
          res_rng.index(static_cast<int64_t>(set.entries.size())))];
      cursor += batch_size_at(set, r);
      ++total;
    }
  }
  return total;
}

// Plan export: one row per optimizer step.
inline void write_plan_header(std::ostream& os) { os << "epoch,step,height,width,batch_size\n"; }

inline void write_plan_rows(std::ostream& os, const EpochPlan& plan, int epoch) {
  for (size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& s = plan.steps[i];
    os << epoch << "," << i << "," << s.resolution.height << "," << s.resolution.width << ","
       << s.batch_size << "\n";
  }
}

// Rows for a simulated multi-scale run without index materialization
// (identical step sequence to plan_epoch for each epoch).
inline void write_simulated_plan(std::ostream& os, const ResolutionSet& set, int64_t dataset_size,
                                 int epochs, uint64_t seed) {
  write_plan_header(os);
  for (int e = 0; e < epochs; ++e) {
    Rng res_rng = detail::epoch_rng(seed, e).split("resolution");
    int64_t cursor = 0;
    int64_t step = 0;
    while (cursor < dataset_size) {
      const Resolution& r = set.entries[static_cast<size_t>(
          res_rng.index(static_cast<int64_t>(set.entries.size())))];
      int64_t take = std::min(batch_size_at(set, r), dataset_size - cursor);
      os << e << "," << step << "," << r.height << "," << r.width << "," << take << "\n";
      cursor += take;
      ++step;
    }
  }
}

}  // namespace mvt
