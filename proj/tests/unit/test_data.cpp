#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cdet/data/augment.hpp"
#include "cdet/data/dataset.hpp"
#include "cdet/data/ingest.hpp"
#include "cdet/data/synthetic.hpp"
#include "cdet/error.hpp"
#include "cdet/io/image_io.hpp"
#include "cdet/io/safetensors.hpp"
#include "cdet/io/sha256.hpp"

using namespace cdet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cdet_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Sample random_sample(int64_t h, int64_t w, uint64_t seed) {
  torch::manual_seed(seed);
  Sample s;
  s.pair.pre = torch::rand({3, h, w});
  s.pair.post = torch::rand({3, h, w});
  s.pair.sample_id = "s";
  s.gt = ChangeMask::from_tensor(torch::randint(0, 2, {h, w}, torch::kUInt8));
  return s;
}

}  // namespace

TEST_CASE("synthetic generator contract") {
  auto a = make_synthetic_dataset(16, 0.05, 64, 0);
  auto b = make_synthetic_dataset(16, 0.05, 64, 0);
  REQUIRE(a.size() == 16);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pair.pre.sizes() == torch::IntArrayRef({3, 64, 64}));
    CHECK(torch::equal(a[i].pair.pre, b[i].pair.pre));
    CHECK(torch::equal(a[i].pair.post, b[i].pair.post));
    CHECK(torch::equal(a[i].gt.tensor(), b[i].gt.tensor()));
    // Changed pixels are exactly where the images differ by more than the recolor threshold.
    auto diff = (a[i].pair.pre - a[i].pair.post).abs().amax(0);
    auto changed = diff.ge(kRecolorThreshold - 1e-6).to(torch::kUInt8);
    CHECK(torch::equal(changed, a[i].gt.tensor()));
  }
  auto c = make_synthetic_dataset(16, 0.05, 64, 1);
  CHECK_FALSE(torch::equal(a[0].pair.pre, c[0].pair.pre));
}

TEST_CASE("synthetic change ratio") {
  auto set = make_synthetic_dataset(100, 0.03, 256, 0);
  double changed = 0;
  for (const auto& s : set) changed += static_cast<double>(s.gt.count_changed()) / (256.0 * 256.0);
  const double mean = changed / set.size();
  CHECK(mean >= 0.01);
  CHECK(mean <= 0.05);
}

TEST_CASE("dataset geometry and splits") {
  auto syn = default_dataset_spec(DatasetName::SYNTHETIC);
  syn.synthetic.n_train = 16;
  CHECK(open_dataset(syn, Split::train).size() == 16);
  CHECK_THROWS_AS(open_dataset(default_dataset_spec(DatasetName::OSCD, "/nonexistent"), Split::val), Error);
  CHECK(expected_counts(DatasetName::LEVIR)->test == 2048);
  CHECK_FALSE(expected_counts(DatasetName::OSCD)->val);
  auto bad = default_dataset_spec(DatasetName::LEVIR, "/x");
  bad.patch_size = 128;
  CHECK_THROWS_AS(bad.validate(), Error);
  try {
    open_dataset(default_dataset_spec(DatasetName::LEVIR, "/nonexistent"), Split::test);
    FAIL("expected dataset-not-found");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dataset_not_found);
  }
}

TEST_CASE("preprocessing") {
  Sample s;
  s.pair.pre = torch::tensor({kImageNetMean[0], kImageNetMean[1], kImageNetMean[2]}).view({3, 1, 1}).expand({3, 96, 96}).clone();
  s.pair.post = s.pair.pre.clone();
  s.gt = ChangeMask::zeros(96, 96);
  auto out = preprocess(s, default_dataset_spec(DatasetName::OSCD));
  CHECK(out.pair.pre.sizes() == torch::IntArrayRef({3, 256, 256}));
  CHECK(out.gt.height() == 256);
  CHECK(out.pair.pre.abs().max().item<float>() < 1e-6);

  auto r = random_sample(256, 256, 1);
  auto same = preprocess(r, default_dataset_spec(DatasetName::SYSU));
  CHECK(same.pair.pre.size(1) == 256);
  CHECK((denormalize(normalize(r.pair.pre)) - r.pair.pre).abs().max().item<float>() < 1e-6);
}

TEST_CASE("augmentation no-op and identical pairs") {
  auto s = random_sample(16, 16, 2);
  AugmentationConfig off;
  off.enable_flip = off.enable_crop = off.enable_color = off.enable_blur = true;
  off.probability = 0.0;
  Rng rng(1);
  auto out = apply_paired_augmentation(s, off, rng);
  CHECK(torch::equal(out.pair.pre, s.pair.pre));
  CHECK(torch::equal(out.gt.tensor(), s.gt.tensor()));

  AugmentationConfig all;
  all.enable_flip = all.enable_crop = all.enable_color = all.enable_blur = true;
  all.probability = 1.0;
  s.pair.post = s.pair.pre.clone();
  for (int i = 0; i < 20; ++i) {
    auto o = apply_paired_augmentation(s, all, rng);
    CHECK(torch::equal(o.pair.pre, o.pair.post));
    auto m = o.gt.tensor();
    CHECK(torch::logical_or(m == 0, m == 1).all().item<bool>());
  }
}

TEST_CASE("geometric transforms share parameters across pre, post and mask") {
  const int64_t n = 24;
  auto xs = torch::arange(n, torch::kFloat32).view({1, n}).expand({n, n}) / (n - 1);
  auto ys = torch::arange(n, torch::kFloat32).view({n, 1}).expand({n, n}) / (n - 1);
  Sample s;
  s.pair.pre = torch::stack({xs, ys, torch::ones({n, n})});
  s.pair.post = s.pair.pre.clone();
  torch::manual_seed(3);
  auto src_mask = torch::randint(0, 2, {n, n}, torch::kUInt8);
  s.gt = ChangeMask::from_tensor(src_mask);

  AugmentationConfig geo;
  geo.enable_flip = geo.enable_crop = true;
  geo.probability = 0.5;
  Rng rng(8);
  int checked = 0;
  for (int draw = 0; draw < 200; ++draw) {
    AugmentationTrace trace;
    auto o = apply_paired_augmentation(s, geo, rng, trace);
    CHECK(torch::equal(o.pair.pre, o.pair.post));
    if (!trace.geometric()) continue;
    // Bilinear resampling reproduces a linear ramp exactly, so the warped grid
    // reveals each output pixel's source position; the mask must agree with it.
    auto px = (o.pair.pre[0] * (n - 1)).contiguous(), py = (o.pair.pre[1] * (n - 1)).contiguous();
    auto inside = o.pair.pre[2].contiguous();
    auto m = o.gt.tensor().contiguous();
    for (int64_t y = 0; y < n; ++y)
      for (int64_t x = 0; x < n; ++x) {
        if (std::abs(inside[y][x].item<float>() - 1.0f) > 1e-5f) continue;
        const double sx = px[y][x].item<float>(), sy = py[y][x].item<float>();
        if (std::abs(sx - std::floor(sx) - 0.5) < 1e-3 || std::abs(sy - std::floor(sy) - 0.5) < 1e-3) continue;
        const auto ix = std::clamp<int64_t>(std::llround(sx), 0, n - 1), iy = std::clamp<int64_t>(std::llround(sy), 0, n - 1);
        CHECK(m[y][x].item<uint8_t>() == src_mask[iy][ix].item<uint8_t>());
        ++checked;
      }
  }
  CHECK(checked > 1000);
}

TEST_CASE("blur sigma satisfies the kernel relation") {
  for (int k : {3, 5, 7, 9}) {
    const double sigma = blur_sigma_for_kernel(k);
    CHECK(static_cast<int>(sigma * 3.5) * 2 + 1 == k);
  }
  AugmentationConfig bad;
  bad.blur_kernel_choices = {4};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("image and label files round trip") {
  auto dir = scratch("io");
  auto img = torch::randint(0, 256, {3, 8, 10}).to(torch::kFloat32) / 255.0f;
  io::write_rgb_float(dir / "a.png", img);
  CHECK(torch::allclose(io::read_rgb(dir / "a.png"), img, 0, 1e-6));
  auto m = ChangeMask::from_tensor(torch::randint(0, 2, {8, 10}, torch::kUInt8));
  io::write_label(dir / "m.png", m);
  CHECK(torch::equal(io::read_label(dir / "m.png").tensor(), m.tensor()));
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK_THROWS_AS(io::read_rgb(dir / "junk.png"), Error);
}

TEST_CASE("ingest folder layouts") {
  auto src = scratch("ingest_src"), out = scratch("ingest_out");
  for (const char* split : {"train", "validation", "test"})
    for (int i = 0; i < 2; ++i) {
      const auto id = std::string(split) + std::to_string(i);
      io::write_rgb_float(src / split / "time1" / (id + ".png"), torch::rand({3, 256, 256}));
      io::write_rgb_float(src / split / "time2" / (id + ".png"), torch::rand({3, 256, 256}));
      io::write_label(src / split / "label" / (id + ".png"), ChangeMask::zeros(256, 256));
    }
  auto rep = ingest_dataset(src, DatasetName::CLCD, out);
  CHECK(rep.counts["train"] == 2);
  CHECK(rep.counts["val"] == 2);
  CHECK_FALSE(rep.warnings.empty());  // far from the published sizes
  auto ds = open_dataset(default_dataset_spec(DatasetName::CLCD, out), Split::val);
  CHECK(ds.size() == 2);
  CHECK(ds.get(0).pair.pre.size(2) == 256);

  IngestOptions syn;
  syn.synthetic.n_train = 5;
  syn.synthetic.n_val = 1;
  syn.synthetic.n_test = 3;
  syn.synthetic_size = 32;
  auto srep = ingest_dataset({}, DatasetName::SYNTHETIC, scratch("ingest_syn"), syn);
  CHECK(srep.counts["train"] == 5);
  CHECK(srep.counts["test"] == 3);
}

TEST_CASE("safetensors and sha256") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto dir = scratch("st");
  io::TensorArchive a;
  a.tensors["w"] = torch::randn({3, 4});
  a.tensors["b"] = torch::arange(5, torch::kInt64);
  a.tensors["h"] = torch::randn({2}).to(torch::kFloat16);
  a.metadata["k"] = "v";
  io::write_safetensors(dir / "x.safetensors", a);
  auto b = io::read_safetensors(dir / "x.safetensors");
  CHECK(b.metadata.at("k") == "v");
  for (const auto& [k, t] : a.tensors) CHECK(torch::equal(b.tensors.at(k), t));
  std::ofstream(dir / "bad.safetensors", std::ios::binary) << "\x10\x00\x00\x00\x00\x00\x00\x00{";
  CHECK_THROWS_AS(io::read_safetensors(dir / "bad.safetensors"), Error);
}
