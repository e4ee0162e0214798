// Command-line front end: model inspection, verification suites,
// benchmarking, toy training, and sampler simulation.
//
// Exit codes: 0 success, 1 suite/assertion failure, 2 usage error.

#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mvt/verify.hpp"

namespace fs = std::filesystem;
using namespace mvt;

namespace {

std::vector<Resolution> parse_resolutions(const std::string& text) {
  std::vector<Resolution> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t xpos = tok.find('x');
      if (xpos == std::string::npos) {
        int side = std::stoi(tok);
        out.push_back({side, side});
      } else {
        out.push_back({std::stoi(tok.substr(0, xpos)), std::stoi(tok.substr(xpos + 1))});
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("bad resolution list '" + text +
                                  "' (expected e.g. 160,192,256 or 160x160,...)");
    }
  }
  check(!out.empty(), "resolution list is empty");
  return out;
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// Flat key=value config file ('#' comments). Values apply only where
// the flag was not passed on the command line; unknown keys are
// rejected.
void apply_train_config(const std::string& path, CLI::App* train,
                        const std::map<std::string, std::function<void(const std::string&)>>&
                            setters) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    size_t last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    size_t eq = line.find('=');
    check(eq != std::string::npos, path + ":" + std::to_string(lineno) +
                                       ": expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    check(it != setters.end(), path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    const CLI::Option* opt = train->get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) continue;  // flags override the file
    try {
      it->second(value);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": bad value '" + value +
                                  "' for key '" + key + "'");
    }
  }
}

// ----------------------------------------------------------------------
//  params
// ----------------------------------------------------------------------

struct ParamsArgs {
  std::string variant = "S";
  std::string patch_config = "A";
  bool json = false;
};

int cmd_params(const ParamsArgs& args) {
  ModelConfig cfg = variant_config(args.variant);
  cfg.patches = parse_patch_config(args.patch_config);
  Model model(cfg);
  int64_t total = count_params(model);
  auto stages = stage_param_counts(model);

  if (args.json) {
    nlohmann::json j;
    j["variant"] = cfg.variant;
    j["patch_config"] = {cfg.patches[0], cfg.patches[1], cfg.patches[2]};
    j["total"] = total;
    nlohmann::json st = nlohmann::json::object();
    for (const auto& [name, count] : stages) st[name] = count;
    j["stages"] = st;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::printf("MobileViT-%s (patches %d,%d,%d)\n", cfg.variant.c_str(), cfg.patches[0],
              cfg.patches[1], cfg.patches[2]);
  std::printf("%-12s %12s %8s\n", "stage", "params", "share");
  for (const auto& [name, count] : stages)
    std::printf("%-12s %12lld %7.2f%%\n", name.c_str(), static_cast<long long>(count),
                100.0 * static_cast<double>(count) / static_cast<double>(total));
  std::printf("%-12s %12lld\n", "total", static_cast<long long>(total));
  return 0;
}

// ----------------------------------------------------------------------
//  verify
// ----------------------------------------------------------------------

struct VerifyArgs {
  std::string suite;  // empty = all
  std::string out = "out";
};

int cmd_verify(const VerifyArgs& args) {
  std::vector<std::string> names = args.suite.empty()
                                       ? suite_names()
                                       : std::vector<std::string>{args.suite};
  nlohmann::json all = nlohmann::json::array();
  bool pass = true;
  for (const auto& name : names) {
    SuiteReport r = run_suite(name);  // throws on unknown names -> exit 2
    print_suite(std::cout, r);
    all.push_back(suite_to_json(r));
    pass = pass && r.pass();
  }
  fs::path dir = ensure_out_dir(args.out);
  std::ofstream report(dir / "report.json");
  report << all.dump(2) << "\n";
  std::printf("%s; report written to %s\n", pass ? "all suites passed" : "FAILURES detected",
              (dir / "report.json").string().c_str());
  return pass ? 0 : 1;
}

// ----------------------------------------------------------------------
//  bench
// ----------------------------------------------------------------------

struct BenchArgs {
  std::string variant = "XS";
  int resolution = 256;
  std::string patch_config = "A";
  int repeats = 20;
  int warmup = 2;
  uint64_t seed = 42;
};

int cmd_bench(const BenchArgs& args) {
  ModelConfig cfg = variant_config(args.variant);
  cfg.patches = parse_patch_config(args.patch_config);
  Model model = build(cfg, args.seed);
  model.mode = Mode::eval;
  Rng rng(args.seed);
  Tensor x = random_uniform({1, 3, args.resolution, args.resolution}, rng, 0.0f, 1.0f);

  for (int i = 0; i < args.warmup; ++i) model.forward(x);
  std::vector<double> times;
  for (int i = 0; i < args.repeats; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    Tensor logits = model.forward(x);
    auto t1 = std::chrono::steady_clock::now();
    (void)logits;
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double mean = 0.0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(times.size());

  std::printf("MobileViT-%s @ %dx%d, patches %d,%d,%d: ", cfg.variant.c_str(), args.resolution,
              args.resolution, cfg.patches[0], cfg.patches[1], cfg.patches[2]);
  if (args.repeats == 1) {
    std::printf("forward %.2f ms (single measurement)\n", mean);
  } else {
    double var = 0.0;
    for (double t : times) var += (t - mean) * (t - mean);
    double stdev = std::sqrt(var / static_cast<double>(times.size()));
    std::printf("forward %.2f ms +- %.2f ms over %d repeats\n", mean, stdev, args.repeats);
  }

  CostReport cost = attention_cost(cfg, args.resolution, args.resolution);
  std::printf("attention cost model (N^2*P*d per block):\n");
  std::printf("  %-8s %8s %6s %6s %6s %14s %16s\n", "stride", "feature", "P", "N", "d",
              "attention", "projections");
  for (const auto& s : cost.stages)
    std::printf("  %-8d %4dx%-4d %6lld %6lld %6d %14lld %16lld\n", s.stride, s.grid_h, s.grid_w,
                static_cast<long long>(s.pixels_per_patch),
                static_cast<long long>(s.patch_count), s.dim,
                static_cast<long long>(s.attention_macs),
                static_cast<long long>(s.projection_macs));
  std::printf("  total attention MACs: %lld, projection MACs: %lld\n",
              static_cast<long long>(cost.total_attention_macs),
              static_cast<long long>(cost.total_projection_macs));
  return 0;
}

// ----------------------------------------------------------------------
//  train
// ----------------------------------------------------------------------

struct TrainArgs {
  std::string data = "synthetic";
  std::string model = "micro";
  std::string sampler = "standard";
  std::string resolutions;  // empty -> derived from image size
  std::string out = "out";
  int epochs = 20;
  int64_t batch = 16;
  int image_size = 32;
  int classes = 4;
  int per_class = 32;
  uint64_t seed = 42;
  double ema_decay = 0.9995;
  double lr_start = 2e-4, lr_peak = 2e-3, lr_final = 2e-4;
  int64_t warmup = 3000;
  double weight_decay = 0.01;
  bool no_augment = false;
};

int cmd_train(const TrainArgs& args) {
  Dataset train_ds, eval_ds;
  if (args.data == "synthetic") {
    train_ds = make_synthetic_blobs(args.classes, args.per_class, args.image_size, args.seed);
    eval_ds = make_synthetic_blobs(args.classes, std::max(4, args.per_class / 4),
                                   args.image_size, args.seed + 1);
  } else {
    train_ds = load_image_folder(args.data);  // missing dir -> exit 2
    eval_ds = train_ds;
  }

  ModelConfig cfg = args.model == "micro" ? ModelConfig::micro(train_ds.classes())
                                          : variant_config(args.model);
  cfg.classes = train_ds.classes();
  Model model = build(cfg, args.seed);

  TrainOptions opts;
  opts.epochs = args.epochs;
  opts.batch = args.batch;
  opts.train_size = args.image_size;
  opts.sampler = parse_sampler_mode(args.sampler);
  opts.seed = args.seed;
  opts.ema_decay = args.ema_decay;
  opts.schedule.warmup_start = args.lr_start;
  opts.schedule.peak = args.lr_peak;
  opts.schedule.final_lr = args.lr_final;
  opts.schedule.warmup_steps = args.warmup;
  opts.adamw.weight_decay = args.weight_decay;
  opts.augment.enabled = !args.no_augment;
  if (opts.sampler == SamplerMode::multiscale) {
    if (!args.resolutions.empty()) {
      opts.resolutions = parse_resolutions(args.resolutions);
    } else {
      int s = args.image_size;
      opts.resolutions = {{s / 2, s / 2}, {3 * s / 4, 3 * s / 4}, {s, s}};
    }
  }

  TrainResult result = train_toy(model, train_ds, eval_ds, opts);

  fs::path dir = ensure_out_dir(args.out);
  {
    std::ofstream csv(dir / "metrics.csv");
    write_metrics_csv(csv, result.rows);
  }
  save_weights(model, (dir / "weights.mvtw").string());
  {
    nlohmann::json j;
    j["data"] = args.data;
    j["model"] = cfg.variant;
    j["classes"] = cfg.classes;
    j["sampler"] = args.sampler;
    j["epochs"] = args.epochs;
    j["base_batch"] = args.batch;
    j["seed"] = args.seed;
    j["updates"] = result.total_updates;
    j["best_train_top1"] = result.best_train_top1;
    j["final_train_loss"] = result.final_train_loss;
    nlohmann::json res = nlohmann::json::array();
    for (const auto& r : result.resolutions_seen)
      res.push_back({{"height", r.height}, {"width", r.width}});
    j["resolutions_seen"] = res;
    std::ofstream summary(dir / "summary.json");
    summary << j.dump(2) << "\n";
  }
  std::printf("trained %d epochs (%lld updates), best train top1 %.4f\n", args.epochs,
              static_cast<long long>(result.total_updates), result.best_train_top1);
  std::printf("outputs: %s/metrics.csv, %s/summary.json, %s/weights.mvtw\n", args.out.c_str(),
              args.out.c_str(), args.out.c_str());
  return 0;
}

// ----------------------------------------------------------------------
//  sampler-sim
// ----------------------------------------------------------------------

struct SamplerSimArgs {
  int64_t dataset_size = 1281167;
  int epochs = 300;
  int64_t batch = 1024;
  std::string resolutions = "160,192,256,288,320";
  std::string out = "out";
  uint64_t seed = 42;
};

int cmd_sampler_sim(const SamplerSimArgs& args) {
  ResolutionSet set(parse_resolutions(args.resolutions), args.batch);
  int64_t standard =
      count_updates(SamplerMode::standard, set, args.dataset_size, args.epochs, args.seed);
  int64_t multi =
      count_updates(SamplerMode::multiscale, set, args.dataset_size, args.epochs, args.seed);

  std::printf("dataset %lld, base batch %lld, %d epochs\n",
              static_cast<long long>(args.dataset_size), static_cast<long long>(args.batch),
              args.epochs);
  std::printf("batch sizes by resolution:");
  for (const auto& r : set.entries)
    std::printf(" %dx%d->%lld", r.height, r.width,
                static_cast<long long>(batch_size_at(set, r)));
  std::printf("\n");
  std::printf("standard sampler updates:    %lld\n", static_cast<long long>(standard));
  std::printf("multi-scale sampler updates: %lld (seed %llu)\n", static_cast<long long>(multi),
              static_cast<unsigned long long>(args.seed));

  fs::path dir = ensure_out_dir(args.out);
  std::ofstream plan(dir / "plan.csv");
  write_simulated_plan(plan, set, args.dataset_size, args.epochs, args.seed);
  std::printf("plan written to %s\n", (dir / "plan.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MobileViT kit: transformers-as-convolutions models, verification and training"};
  app.require_subcommand(1);

  ParamsArgs params_args;
  CLI::App* params = app.add_subcommand("params", "Print parameter counts per stage");
  params->add_option("--variant", params_args.variant, "XXS, XS, S or micro");
  params->add_option("--patch-config", params_args.patch_config, "A (2,2,2), B (8,4,2) or h1,h2,h3");
  params->add_flag("--json", params_args.json, "machine-readable output");

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "Run property-test suites");
  verify->add_option("--suite", verify_args.suite,
                     "roundtrip, gradcheck, params, sampler or schedule (default: all)");
  verify->add_option("--out", verify_args.out, "output directory for report.json");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Time eval-mode forwards");
  bench->add_option("--variant", bench_args.variant, "XXS, XS, S or micro");
  bench->add_option("--resolution", bench_args.resolution, "square input size");
  bench->add_option("--patch-config", bench_args.patch_config, "A, B or h1,h2,h3");
  bench->add_option("--repeats", bench_args.repeats, "timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_args.warmup, "untimed warmup runs");
  bench->add_option("--seed", bench_args.seed, "weight/input seed");

  TrainArgs train_args;
  std::string train_config_file;
  CLI::App* train = app.add_subcommand("train", "Run the toy training recipe");
  train->add_option("--config", train_config_file, "flat key=value config file (flags override)");
  train->add_option("--data", train_args.data, "'synthetic' or a class-folder directory");
  train->add_option("--model", train_args.model, "micro, XXS, XS or S");
  train->add_option("--sampler", train_args.sampler, "standard or multiscale");
  train->add_option("--resolutions", train_args.resolutions,
                    "multi-scale resolution list, e.g. 24,32,48");
  train->add_option("--out", train_args.out, "output directory");
  train->add_option("--epochs", train_args.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch", train_args.batch)->check(CLI::PositiveNumber);
  train->add_option("--image-size", train_args.image_size)->check(CLI::PositiveNumber);
  train->add_option("--classes", train_args.classes, "synthetic class count");
  train->add_option("--per-class", train_args.per_class, "synthetic images per class");
  train->add_option("--seed", train_args.seed);
  train->add_option("--ema-decay", train_args.ema_decay);
  train->add_option("--lr-start", train_args.lr_start);
  train->add_option("--lr-peak", train_args.lr_peak);
  train->add_option("--lr-final", train_args.lr_final);
  train->add_option("--warmup", train_args.warmup, "warmup steps (capped at total/10)");
  train->add_option("--weight-decay", train_args.weight_decay);
  train->add_flag("--no-augment", train_args.no_augment, "disable crop/flip augmentation");

  SamplerSimArgs sim_args;
  CLI::App* sim = app.add_subcommand("sampler-sim", "Compare sampler update counts");
  sim->alias("sampler_sim");
  sim->add_option("--dataset-size", sim_args.dataset_size)->check(CLI::PositiveNumber);
  sim->add_option("--epochs", sim_args.epochs)->check(CLI::PositiveNumber);
  sim->add_option("--batch", sim_args.batch)->check(CLI::PositiveNumber);
  sim->add_option("--resolutions", sim_args.resolutions, "comma-separated square sizes");
  sim->add_option("--seed", sim_args.seed);
  sim->add_option("--out", sim_args.out, "output directory for plan.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help is success; any parse problem is usage
  }

  try {
    if (params->parsed()) return cmd_params(params_args);
    if (verify->parsed()) return cmd_verify(verify_args);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (train->parsed()) {
      if (!train_config_file.empty()) {
        TrainArgs& a = train_args;
        const std::map<std::string, std::function<void(const std::string&)>> setters{
            {"data", [&](const std::string& v) { a.data = v; }},
            {"model", [&](const std::string& v) { a.model = v; }},
            {"sampler", [&](const std::string& v) { a.sampler = v; }},
            {"resolutions", [&](const std::string& v) { a.resolutions = v; }},
            {"out", [&](const std::string& v) { a.out = v; }},
            {"epochs", [&](const std::string& v) { a.epochs = std::stoi(v); }},
            {"batch", [&](const std::string& v) { a.batch = std::stoll(v); }},
            {"image-size", [&](const std::string& v) { a.image_size = std::stoi(v); }},
            {"classes", [&](const std::string& v) { a.classes = std::stoi(v); }},
            {"per-class", [&](const std::string& v) { a.per_class = std::stoi(v); }},
            {"seed", [&](const std::string& v) { a.seed = std::stoull(v); }},
            {"ema-decay", [&](const std::string& v) { a.ema_decay = std::stod(v); }},
            {"lr-start", [&](const std::string& v) { a.lr_start = std::stod(v); }},
            {"lr-peak", [&](const std::string& v) { a.lr_peak = std::stod(v); }},
            {"lr-final", [&](const std::string& v) { a.lr_final = std::stod(v); }},
            {"warmup", [&](const std::string& v) { a.warmup = std::stoll(v); }},
            {"weight-decay", [&](const std::string& v) { a.weight_decay = std::stod(v); }},
            {"no-augment", [&](const std::string& v) { a.no_augment = v == "1" || v == "true"; }},
        };
        apply_train_config(train_config_file, train, setters);
      }
      return cmd_train(train_args);
    }
    if (sim->parsed()) return cmd_sampler_sim(sim_args);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 1;
  }
  return 2;
}
