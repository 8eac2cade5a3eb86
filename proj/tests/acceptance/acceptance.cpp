// Acceptance checks, one line per criterion. Criterion 11 needs the six real
// datasets and a GPU; it runs only when CDET_RECIPE_DATA points at ingested
// copies, and otherwise reports the gap without affecting the exit status.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "cdet/backbone/registry.hpp"
#include "cdet/bench/benchmark.hpp"
#include "cdet/config.hpp"
#include "cdet/data/augment.hpp"
#include "cdet/data/synthetic.hpp"
#include "cdet/error.hpp"
#include "cdet/eval/metrics.hpp"
#include "cdet/losses.hpp"
#include "cdet/model/change_model.hpp"
#include "cdet/schedulers.hpp"
#include "cdet/trainer.hpp"

using namespace cdet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check, bool counts = true) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("criterion %2d %-28s %s  %s (%.1fs)\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
  std::fflush(stdout);
  if (!o.pass && counts) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1 ---------------------------------------------------------------------------

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 1 + rng() % 64, w = 1 + rng() % 64;
    const double p_change = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<int64_t> p(h * w), g(h * w);
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < h * w; ++i) {
      p[i] = std::uniform_real_distribution<double>(0, 1)(rng) < p_change;
      g[i] = std::uniform_real_distribution<double>(0, 1)(rng) < p_change;
      tp += p[i] && g[i];
      fp += p[i] && !g[i];
      fn += !p[i] && g[i];
      tn += !p[i] && !g[i];
    }
    const auto c = accumulate({}, torch::tensor(p).view({h, w}).to(torch::kUInt8), torch::tensor(g).view({h, w}).to(torch::kUInt8));
    if (!(c == ConfusionCounts{tp, fp, fn, tn})) ++mismatches;
    const double f1_change = (2 * tp + fp + fn) == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    const double f1_unchanged = (2 * tn + fp + fn) == 0 ? 1.0 : 2.0 * tn / (2.0 * tn + fp + fn);
    worst = std::max(worst, std::abs(binary_f1(c) - f1_change) / std::max(f1_change, 1e-300));
    worst = std::max(worst, std::abs(mean_f1_two_class(c) - (f1_change + f1_unchanged) / 2) /
                                std::max((f1_change + f1_unchanged) / 2, 1e-300));
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && worst <= 1e-12 && s < 10,
          fmt("1000 pairs, count mismatches %d, max rel err %.2e (tol 1e-12), %.2fs (limit 10s)", mismatches, worst, s)};
}

// 2 ---------------------------------------------------------------------------

Outcome mf1_inflation() {
  int ok = 0;
  double min_gap = 1e9, min_f1 = 1, max_f1 = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto samples = make_synthetic_dataset(4, 0.03, 128, seed);
    std::mt19937_64 rng(seed + 1000);
    ConfusionCounts c;
    for (const auto& s : samples) {
      // A moderately good predictor: misses a quarter of the change and adds
      // a comparable number of scattered false alarms.
      auto gt = s.gt.tensor();
      auto g = torch::make_generator<at::CPUGeneratorImpl>(rng());
      auto miss = torch::rand(gt.sizes(), g).lt(0.25);
      const double changed = static_cast<double>(gt.sum().item<int64_t>());
      const double fa_rate = 0.25 * changed / std::max<double>(1.0, gt.numel() - changed);
      auto false_alarm = torch::rand(gt.sizes(), g).lt(fa_rate);
      auto pred = torch::where(gt.to(torch::kBool), ~miss, false_alarm).to(torch::kUInt8);
      c = accumulate(c, pred, gt);
    }
    const double f1 = binary_f1(c), mf1 = mean_f1_two_class(c);
    min_f1 = std::min(min_f1, f1);
    max_f1 = std::max(max_f1, f1);
    min_gap = std::min(min_gap, mf1 - f1);
    if (f1 >= 0.5 && f1 <= 0.9 && mf1 - f1 > 0.05) ++ok;
  }
  return {ok == 100, fmt("%d/100 trials with f1 in [0.5,0.9] (seen %.3f..%.3f) and mf1-f1 > 0.05 (min gap %.3f)", ok,
                         min_f1, max_f1, min_gap)};
}

// 3 ---------------------------------------------------------------------------

Outcome fusion_symmetry() {
  const auto t0 = Clock::now();
  torch::NoGradGuard ng;
  const auto& entry = Registry::builtin().find({Family::swin, "micro", Pretrain::none, {}});
  int bad_anti = 0, bad_zero = 0;
  for (int i = 0; i < 50; ++i) {
    torch::manual_seed(100 + i);
    DecoderConfig dc;
    dc.channels = 16;
    ChangeModel m(build_architecture(entry), dc);
    m->eval();
    auto a = torch::randn({1, 3, 64, 64}), b = torch::randn({1, 3, 64, 64});
    auto [f1, f2] = m->encode_pair(a, b);
    auto ab = fuse_subtract(f1, f2), ba = fuse_subtract(f2, f1);
    for (size_t l = 0; l < 4; ++l)
      if (!torch::equal(ab.levels[l], -ba.levels[l])) ++bad_anti;
    auto [s1, s2] = m->encode_pair(a, a);
    auto zero = fuse_subtract(s1, s2);
    for (const auto& l : zero.levels)
      if (l.abs().max().item<double>() != 0.0) ++bad_zero;
  }
  const double s = seconds_since(t0);
  return {bad_anti == 0 && bad_zero == 0 && s < 120,
          fmt("50 models, antisymmetry violations %d, nonzero identity levels %d (exact), %.1fs (limit 120s)", bad_anti,
              bad_zero, s)};
}

// 4 ---------------------------------------------------------------------------

Outcome loss_gradients() {
  const auto t0 = Clock::now();
  const std::pair<const char*, LossKind> kinds[] = {{"ce", LossKind::ce},
                                                     {"dice", LossKind::dice},
                                                     {"focal", LossKind::focal},
                                                     {"focal+dice", LossKind::focal_dice},
                                                     {"ce+dice", LossKind::ce_dice}};
  const double h = 1e-4;
  double worst = 0;
  std::string worst_kind;
  torch::manual_seed(77);
  for (const auto& [name, kind] : kinds) {
    LossConfig cfg;
    cfg.kind = kind;
    for (int trial = 0; trial < 20; ++trial) {
      // Stay clear of the clamp so the loss is smooth around every point.
      auto p = (torch::rand({8, 8}, torch::kFloat64) * 0.9 + 0.05).requires_grad_(true);
      auto g = torch::randint(0, 2, {8, 8}).to(torch::kFloat64);
      combined_loss(cfg, p, g).backward();
      auto analytic = p.grad().clone();
      auto numeric = torch::zeros_like(analytic);
      torch::NoGradGuard ng;
      auto base = p.detach().clone();
      for (int64_t i = 0; i < 64; ++i) {
        auto plus = base.clone(), minus = base.clone();
        plus.view(-1)[i] += h;
        minus.view(-1)[i] -= h;
        numeric.view(-1)[i] =
            (combined_loss(cfg, plus, g).item<double>() - combined_loss(cfg, minus, g).item<double>()) / (2 * h);
      }
      const double rel = (analytic - numeric).norm().item<double>() /
                         std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
      if (rel > worst) {
        worst = rel;
        worst_kind = name;
      }
    }
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-4 && s < 60,
          fmt("5 losses x 20 inputs, max rel err %.2e (%s; tol 1e-4, step 1e-4), %.1fs (limit 60s)", worst,
              worst_kind.c_str(), s)};
}

// 5 ---------------------------------------------------------------------------

Outcome scheduler_forms() {
  const auto t0 = Clock::now();
  const int T = 100;
  const double base = 1e-4, pi = 3.14159265358979323846;
  const int epochs[] = {0, 1, T / 2, 8 * T / 10, 85 * T / 100, 9 * T / 10, 95 * T / 100, T - 1};
  auto expected = [&](SchedulerKind k, int e) -> double {
    switch (k) {
      case SchedulerKind::none: return base;
      case SchedulerKind::multistep: return e < 80 ? 1e-4 : e < 90 ? 5e-5 : 2.5e-5;
      case SchedulerKind::cosine: return base * (1.0 + std::cos(pi * e / T)) / 2.0;
      case SchedulerKind::exponential: return base * std::pow(0.95, e);
      case SchedulerKind::linear: return base * (1.0 - static_cast<double>(e) / T);
      case SchedulerKind::polynomial: return base * std::pow(1.0 - static_cast<double>(e) / T, 0.9);
    }
    return 0;
  };
  int checked = 0, exact = 0;
  double worst_ulps = 0;
  for (auto k : {SchedulerKind::none, SchedulerKind::multistep, SchedulerKind::cosine, SchedulerKind::exponential,
                 SchedulerKind::linear, SchedulerKind::polynomial}) {
    SchedulerConfig c;
    c.kind = k;
    c.base_lr = base;
    c.total_epochs = T;
    for (int e : epochs) {
      const double got = lr_at(c, e), want = expected(k, e);
      ++checked;
      if (got == want) ++exact;
      const double ulp = std::nextafter(want, 1.0) - want;
      worst_ulps = std::max(worst_ulps, std::abs(got - want) / ulp);
    }
  }
  const double s = seconds_since(t0);
  // Exact equality, allowing one unit in the last place for the
  // transcendental forms (operation order in a*b/2 vs a*(b/2)).
  return {worst_ulps <= 1.0 && s < 1.0,
          fmt("%d values, %d bit-identical, max deviation %.0f ulp (tol 1 ulp), %.3fs (limit 1s)", checked, exact,
              worst_ulps, s)};
}

// 6 ---------------------------------------------------------------------------

Outcome augmentation_contract() {
  const auto t0 = Clock::now();
  const int64_t n = 16;
  auto xs = torch::arange(n, torch::kFloat32).view({1, n}).expand({n, n}) / (n - 1);
  auto ys = torch::arange(n, torch::kFloat32).view({n, 1}).expand({n, n}) / (n - 1);
  Sample s;
  s.pair.pre = torch::stack({xs, ys, torch::ones({n, n})});
  s.pair.post = s.pair.pre.clone();
  s.pair.sample_id = "grid";
  torch::manual_seed(5);
  auto src_mask = torch::randint(0, 2, {n, n}, torch::kUInt8);
  s.gt = ChangeMask::from_tensor(src_mask);

  AugmentationConfig cfg;
  cfg.enable_flip = cfg.enable_crop = cfg.enable_color = cfg.enable_blur = true;
  // Photometric ops would disturb the coordinate grid; check them on a second
  // stream that leaves geometry off, so both runs still make 10,000 draws.
  AugmentationConfig geo = cfg;
  geo.enable_color = geo.enable_blur = false;

  const int draws = 10000;
  int hflip = 0, vflip = 0, rot = 0, crop = 0, color = 0, blur = 0;
  int64_t pixel_mismatch = 0, pair_mismatch = 0, checked = 0;
  Rng rng(derive_seed(0, "acceptance-aug"));
  for (int d = 0; d < draws; ++d) {
    AugmentationTrace tr;
    auto o = apply_paired_augmentation(s, geo, rng, tr);
    hflip += tr.hflip;
    vflip += tr.vflip;
    rot += tr.rotation_deg.has_value();
    crop += tr.crop.has_value();
    if (!torch::equal(o.pair.pre, o.pair.post)) ++pair_mismatch;
    if (!tr.geometric()) continue;
    auto sx = o.pair.pre[0] * (n - 1), sy = o.pair.pre[1] * (n - 1);
    auto fx = sx - sx.floor(), fy = sy - sy.floor();
    auto usable = (o.pair.pre[2] - 1).abs().lt(1e-5) & (fx - 0.5).abs().gt(1e-3) & (fy - 0.5).abs().gt(1e-3);
    auto ix = sx.round().clamp(0, n - 1).to(torch::kLong), iy = sy.round().clamp(0, n - 1).to(torch::kLong);
    auto expected = src_mask.index({iy, ix});
    pixel_mismatch += (expected.ne(o.gt.tensor()) & usable).sum().item<int64_t>();
    checked += usable.sum().item<int64_t>();
  }
  Sample photo = s;
  photo.pair.pre = torch::rand({3, n, n});
  photo.pair.post = photo.pair.pre.clone();
  AugmentationConfig ph = cfg;
  ph.enable_flip = ph.enable_crop = false;
  Rng rng2(derive_seed(0, "acceptance-photo"));
  for (int d = 0; d < draws; ++d) {
    AugmentationTrace tr;
    auto o = apply_paired_augmentation(photo, ph, rng2, tr);
    color += tr.color.has_value();
    blur += tr.blur.has_value();
    if (!torch::equal(o.pair.pre, o.pair.post) || !torch::equal(o.gt.tensor(), photo.gt.tensor())) ++pair_mismatch;
  }
  const int counts[] = {hflip, vflip, rot, crop, color, blur};
  bool rates_ok = true;
  std::string rates;
  for (int c : counts) {
    const double r = 100.0 * c / draws;
    rates_ok &= std::abs(r - 30.0) <= 3.0;
    rates += fmt("%.1f ", r);
  }
  const double secs = seconds_since(t0);
  return {rates_ok && pixel_mismatch == 0 && pair_mismatch == 0 && checked > 0 && secs < 120,
          fmt("fire %% hflip/vflip/rot/crop/color/blur = %s(30 +- 3), mask/grid mismatches %lld of %lld px, "
              "pre/post mismatches %lld, %.1fs (limit 120s)",
              rates.c_str(), (long long)pixel_mismatch, (long long)checked, (long long)pair_mismatch, secs)};
}

// 7 / 8 -----------------------------------------------------------------------

ExperimentConfig desk_config() { return load_config_file(std::string(CDET_SOURCE_DIR) + "/configs/desk_overfit.json"); }

TrainOptions desk_options(const std::string& tag) {
  TrainOptions o;
  o.out_root = fs::temp_directory_path() / ("cdet_acceptance_" + tag);
  fs::remove_all(o.out_root);
  return o;
}

std::optional<RunResult> overfit_run;

Outcome overfit() {
  const auto t0 = Clock::now();
  auto c = desk_config();
  c.seeds = {0};
  overfit_run = train(c, 0, desk_options("overfit"));
  const auto& ep = overfit_run->per_epoch;
  std::vector<double> smooth;
  for (size_t i = 0; i + 5 <= ep.size(); ++i) {
    double sum = 0;
    for (size_t j = i; j < i + 5; ++j) sum += ep[j].train_loss;
    smooth.push_back(sum / 5);
  }
  bool monotone = true;
  for (size_t i = 1; i < smooth.size(); ++i) monotone &= smooth[i] < smooth[i - 1];
  const double f1 = overfit_run->train_metrics ? overfit_run->train_metrics->f1 : 0.0;
  const double s = seconds_since(t0);
  return {ep.size() == 30 && f1 >= 0.95 && monotone && s < 600,
          fmt("%zu epochs, train F1 %.4f (min 0.95), 5-epoch mean loss %.4f -> %.4f %s, %.0fs (limit 600s)", ep.size(), f1,
              smooth.front(), smooth.back(), monotone ? "strictly decreasing" : "NOT monotone", s)};
}

Outcome multi_seed() {
  const auto t0 = Clock::now();
  auto c = desk_config();
  c.seeds = {0, 1, 2};
  const auto res = run_experiment(c, desk_options("seeds"));
  if (res.runs.size() != 3) return {false, fmt("%zu of 3 runs finished", res.runs.size())};
  std::vector<double> f;
  for (const auto& r : res.runs) f.push_back(r.test_metrics.f1);
  const double mean = (f[0] + f[1] + f[2]) / 3;
  double ss = 0;
  for (double x : f) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / 2);
  const bool stats = std::abs(*res.report.mean - mean) < 1e-12 && std::abs(*res.report.std - sd) < 1e-12;
  bool repro = overfit_run.has_value() && overfit_run->test_metrics.counts == res.runs[0].test_metrics.counts;
  if (repro)
    for (size_t e = 0; e < overfit_run->per_epoch.size(); ++e)
      repro &= overfit_run->per_epoch[e].train_loss == res.runs[0].per_epoch[e].train_loss;
  const double s = seconds_since(t0) ;
  return {stats && repro && !res.partial && s < 1800,
          fmt("F1 %.4f/%.4f/%.4f, mean %.4f std %.4f (oracle match %s), seed 0 rerun bit-identical: %s, %.0fs (limit 1800s)",
              f[0], f[1], f[2], *res.report.mean, *res.report.std, stats ? "yes" : "no", repro ? "yes" : "no", s)};
}

// 9 ---------------------------------------------------------------------------

Outcome parameter_fidelity() {
  auto split_of = [](const std::string& name) {
    const auto c = preset(name);
    auto enc = build_architecture(Registry::builtin().find(c.backbone));
    ChangeModel m(enc, c.decoder);
    return std::make_pair(parameter_split(*m->encoder(), *m->decoder()), m);
  };
  auto [t, tm] = split_of("btc-t");
  auto [b, bm] = split_of("btc-b");
  const double tt = t.total / 1e6, bt = b.total / 1e6;
  torch::NoGradGuard ng;
  tm->eval();
  const double gf = count_flops(*tm, 256);
  const bool ok = std::abs(tt - 58.9) <= 0.02 * 58.9 && std::abs(bt - 120.1) <= 0.02 * 120.1 &&
                  std::abs(gf - 134.5) <= 0.05 * 134.5;
  return {ok, fmt("btc-t %.2fM (enc %.2f dec %.2f; 58.9 +- 2%%), btc-b %.2fM (enc %.2f dec %.2f; 120.1 +- 2%%), "
                  "Swin-T %.1f GFLOPs (134.5 +- 5%%); random-init architectures, no download needed",
                  tt, t.encoder / 1e6, t.decoder / 1e6, bt, b.encoder / 1e6, b.decoder / 1e6, gf)};
}

// 10 --------------------------------------------------------------------------

Outcome benchmark_shape() {
  const LatencyProtocol defaults;
  int64_t passes = 0, syncs = 0;
  auto counted = run_protocol([&] { ++passes; }, [&] { ++syncs; }, defaults);
  const bool counting = defaults.warmup == 1000 && defaults.timed == 1000 && defaults.repeats == 5 &&
                        passes == 10000 && counted.per_pass_ms.size() == 5;

  // The real harness on a small model with the default pass counts.
  auto c = with_overrides(preset("baseline"), {R"(backbone={"family":"swin","size":"micro","pretrain":"none"})",
                                               R"(decoder={"channels":16})"});
  EfficiencyOptions o;
  o.protocol.input_size = 32;
  o.precision = "fp32";
  const auto r = report_efficiency(c, o);
  const bool identity = r.fps == 1000.0 / r.inference_ms_mean && r.samples_ms.size() == 5 && r.inference_ms_std > 0;
  return {counting && identity,
          fmt("default protocol %d+%d x %d -> %lld passes, %zu samples; harness %.3f +- %.3f ms, fps %.1f == 1000/ms: %s",
              defaults.warmup, defaults.timed, defaults.repeats, (long long)passes, counted.per_pass_ms.size(),
              r.inference_ms_mean, r.inference_ms_std, r.fps, identity ? "yes" : "no")};
}

// 11 --------------------------------------------------------------------------

Outcome headline_table() {
  const char* root = std::getenv("CDET_RECIPE_DATA");
  if (!root || !*root)
    return {false, "not reproducible at desk scale: needs the six ingested datasets and GPU-weeks; "
                   "set CDET_RECIPE_DATA=<dir with SYSU/ LEVIR/ ...> to run the long suite (tol 0.7 p.p.)"};
  std::ifstream in(std::string(CDET_SOURCE_DIR) + "/configs/recipe_expected.json");
  const auto expected = nlohmann::json::parse(in);
  const double tol = expected["tolerance_pp"].get<double>();
  const auto columns = expected["columns"].get<std::vector<std::string>>();
  int cells = 0, within = 0;
  double worst = 0;
  for (const auto& [name, row] : expected["rows"].items()) {
    for (size_t i = 0; i < columns.size(); ++i) {
      auto c = with_overrides(preset(name), {"dataset.name=\"" + columns[i] + "\"",
                                             "dataset.root=" + nlohmann::json((fs::path(root) / columns[i]).string()).dump()});
      TrainOptions o;
      o.out_root = fs::path(root) / "runs";
      o.log = [](const std::string& l) { std::fprintf(stderr, "%s\n", l.c_str()); };
      const auto res = run_experiment(c, o);
      require_complete(res);
      const double diff = std::abs(100.0 * *res.report.mean - row[i].get<double>());
      worst = std::max(worst, diff);
      ++cells;
      within += diff <= tol;
    }
  }
  return {within == cells, fmt("%d/%d cells within %.1f p.p. (max diff %.2f)", within, cells, tol, worst)};
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  report(1, "metric-oracle", metric_oracle);
  report(2, "mf1-inflation", mf1_inflation);
  report(3, "fusion-symmetry", fusion_symmetry);
  report(4, "loss-gradients", loss_gradients);
  report(5, "scheduler-closed-forms", scheduler_forms);
  report(6, "augmentation-contract", augmentation_contract);
  report(7, "overfit-sanity", overfit);
  report(8, "multi-seed-protocol", multi_seed);
  report(9, "parameter-fidelity", parameter_fidelity);
  report(10, "benchmark-protocol", benchmark_shape);
  // Known to be out of reach without the real data; reported, not counted.
  report(11, "headline-f1-table", headline_table, std::getenv("CDET_RECIPE_DATA") != nullptr);
  std::printf("%d counted criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
