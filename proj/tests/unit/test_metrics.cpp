#include <doctest.h>

#include <random>

#include "cdet/error.hpp"
#include "cdet/eval/metrics.hpp"
#include "cdet/eval/overlay.hpp"
#include "cdet/eval/tables.hpp"

using namespace cdet;

namespace {

// Per-pixel reference scorer over plain vectors.
struct Naive {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Naive naive_counts(const std::vector<int>& p, const std::vector<int>& g) {
  Naive n;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) ++n.tp;
    else if (p[i] && !g[i]) ++n.fp;
    else if (!p[i] && g[i]) ++n.fn;
    else ++n.tn;
  }
  return n;
}

torch::Tensor as_mask(const std::vector<int>& v, int64_t h, int64_t w) {
  return torch::tensor(std::vector<int64_t>(v.begin(), v.end())).to(torch::kUInt8).view({h, w});
}

}  // namespace

TEST_CASE("confusion counts on enumerated pixels") {
  auto c = accumulate({}, as_mask({1, 0, 1, 0}, 1, 4), as_mask({1, 1, 0, 0}, 1, 4));
  CHECK(c == ConfusionCounts{1, 1, 1, 1});
  auto all = accumulate({}, torch::ones({3, 3}, torch::kUInt8), torch::ones({3, 3}, torch::kUInt8));
  CHECK(all.tp == 9);
  auto fp = accumulate({}, torch::ones({3, 3}, torch::kUInt8), torch::zeros({3, 3}, torch::kUInt8));
  CHECK(fp.fp == 9);
}

TEST_CASE("binary f1 closed forms") {
  CHECK(binary_f1({10, 0, 0, 0}) == 1.0);
  CHECK(binary_f1({0, 5, 5, 0}) == 0.0);
  CHECK(binary_f1({2, 1, 1, 0}) == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
  CHECK(binary_f1({0, 0, 0, 50}) == 1.0);
  CHECK(zero_denominator({0, 0, 0, 50}));
  const double change = 4.0 / 6.0, unchanged = 192.0 / 194.0;
  CHECK(mean_f1_two_class({2, 1, 1, 96}) == doctest::Approx((change + unchanged) / 2).epsilon(1e-15));
}

TEST_CASE("random masks agree with the per-pixel scorer") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + rng() % 32, w = 1 + rng() % 32;
    std::vector<int> p(h * w), g(h * w);
    for (auto& x : p) x = rng() % 2;
    for (auto& x : g) x = rng() % 3 == 0;
    const auto n = naive_counts(p, g);
    const auto c = accumulate({}, as_mask(p, h, w), as_mask(g, h, w));
    CHECK(c == ConfusionCounts{n.tp, n.fp, n.fn, n.tn});
  }
}

TEST_CASE("accumulation is order independent") {
  std::mt19937_64 rng(3);
  std::vector<std::pair<torch::Tensor, torch::Tensor>> items;
  for (int i = 0; i < 6; ++i)
    items.emplace_back(torch::randint(0, 2, {5, 7}, torch::kUInt8), torch::randint(0, 2, {5, 7}, torch::kUInt8));
  ConfusionCounts forward, backward;
  for (auto& [p, g] : items) forward = accumulate(forward, p, g);
  for (auto it = items.rbegin(); it != items.rend(); ++it) backward = accumulate(backward, it->first, it->second);
  CHECK(forward == backward);
}

TEST_CASE("invalid mask values are rejected") {
  auto bad = torch::full({2, 2}, 2, torch::kUInt8);
  CHECK_THROWS_AS(accumulate({}, bad, torch::zeros({2, 2}, torch::kUInt8)), Error);
  CHECK_THROWS_AS(ChangeMask::from_tensor(bad), Error);
  CHECK_THROWS_AS(accumulate({}, torch::zeros({2, 3}, torch::kUInt8), torch::zeros({2, 2}, torch::kUInt8)), Error);
}

TEST_CASE("mf1 exceeds f1 when the unchanged class scores higher") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    ConfusionCounts c{rng() % 50, rng() % 50, rng() % 50, 1000 + rng() % 5000};
    const double f_change = binary_f1(c);
    const double f_unchanged = 2.0 * c.tn / (2.0 * c.tn + c.fp + c.fn);
    if (f_unchanged > f_change) CHECK(mean_f1_two_class(c) > binary_f1(c));
  }
}

TEST_CASE("aggregate mean and sample std") {
  std::vector<MetricsReport> reps;
  for (double f : {0.80, 0.81, 0.82}) {
    MetricsReport r;
    r.f1 = f;
    reps.push_back(r);
  }
  auto a = aggregate(reps);
  CHECK(*a.mean == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(*a.std == doctest::Approx(0.01).epsilon(1e-9));
  CHECK_FALSE(a.single_sample_flag);
  auto one = aggregate({reps[0]});
  CHECK(*one.std == 0.0);
  CHECK(one.single_sample_flag);
  CHECK_THROWS_AS(aggregate({}), Error);
  // Six per-dataset scores of the large model average to 80.9.
  CHECK(mean_of({82.4, 91.5, 85.6, 90.7, 80.9, 54.3}) == doctest::Approx(80.9).epsilon(1e-12));
}

TEST_CASE("overlay colors") {
  ImagePair pair{torch::full({3, 4, 4}, 0.5f), torch::full({3, 4, 4}, 0.5f), "x"};
  auto half = torch::zeros({4, 4}, torch::kUInt8);
  half.slice(0, 0, 2).fill_(1);
  const auto gt = ChangeMask::from_tensor(half);
  const auto pred = ChangeMask::from_tensor(1 - half);

  auto count_color = [](const torch::Tensor& img, float r, float g, float b) {
    auto want = torch::tensor({r, g, b}).view({3, 1, 1});
    return img.eq(want).all(0).sum().item<int64_t>();
  };
  auto same = render_overlay(pair, gt, gt);
  CHECK(count_color(same, 1, 0, 0) == 0);
  CHECK(count_color(same, 0, 0, 1) == 0);
  auto swapped = render_overlay(pair, pred, gt);
  CHECK(count_color(swapped, 1, 0, 0) == 8);
  CHECK(count_color(swapped, 0, 0, 1) == 8);
  auto red = render_overlay(pair, ChangeMask::from_tensor(torch::ones({4, 4}, torch::kUInt8)), ChangeMask::zeros(4, 4));
  CHECK(count_color(red, 1, 0, 0) == 16);
  auto panel = render_panel(pair, gt, gt);
  CHECK(panel.sizes() == torch::IntArrayRef({3, 4, 16}));
}

TEST_CASE("table average column equals the row aggregate") {
  ResultTable t;
  t.columns = {"A", "B", "C"};
  auto& r = t.add_row("v");
  r.cells["A"] = TableCell{0.7, 0.01};
  r.cells["B"] = TableCell{0.8, 0.02};
  r.cells["C"] = TableCell{0.95, 0.0};
  std::vector<MetricsReport> reps;
  for (double f : {0.7, 0.8, 0.95}) {
    MetricsReport m;
    m.f1 = f;
    reps.push_back(m);
  }
  const auto agg = aggregate(reps);
  const auto avg = t.average(r);
  REQUIRE(avg);
  CHECK(std::abs(avg->mean - *agg.mean) < 1e-9);
  CHECK(std::abs(avg->std - *agg.std) < 1e-9);

  auto& failed = t.add_row("broken");
  failed.cells["A"] = TableCell{0.5, 0};
  failed.cells["B"] = std::nullopt;
  CHECK_FALSE(t.average(failed));
  const auto csv = to_csv(t, true);
  CHECK(csv.find("failed") != std::string::npos);
  CHECK(csv.rfind("config,A,A_std,B,B_std,C,C_std,Avg,Avg_std", 0) == 0);
}
