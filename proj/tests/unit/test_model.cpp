#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cdet/backbone/registry.hpp"
#include "cdet/backbone/weights.hpp"
#include "cdet/error.hpp"
#include "cdet/io/safetensors.hpp"
#include "cdet/model/change_model.hpp"
#include "cdet/model/checkpoint.hpp"
#include "cdet/nn/flops.hpp"

using namespace cdet;
namespace fs = std::filesystem;

namespace {

Encoder arch(const std::string& family, const std::string& size, const std::string& pretrain = "none") {
  BackboneSpec spec{parse_family(family), size, parse_pretrain(pretrain), {}};
  return build_architecture(Registry::builtin().find(spec));
}

ChangeModel micro_model(uint64_t seed, int64_t channels = 32) {
  torch::manual_seed(seed);
  DecoderConfig dc;
  dc.channels = channels;
  ChangeModel m(arch("swin", "micro"), dc);
  m->eval();
  return m;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cdet_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Writes an encoder's state under `prefix` plus an unrelated head tensor.
fs::path export_encoder(EncoderImpl& enc, const std::string& prefix, const fs::path& file,
                        const std::string& drop = "") {
  io::TensorArchive a;
  for (const auto& p : enc.named_parameters(true))
    if (p.key() != drop) a.tensors[prefix + p.key()] = p.value().detach().clone();
  for (const auto& b : enc.named_buffers(true)) a.tensors[prefix + b.key()] = b.value().clone();
  a.tensors["classifier.weight"] = torch::randn({10, 4});
  io::write_safetensors(file, a);
  return file;
}

}  // namespace

TEST_CASE("flop counter matches hand counts") {
  torch::nn::Linear lin(10, 20);
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(3, 8, 3).padding(1));
  nn::FlopCounter counter;
  nn::linear(lin, torch::randn({3, 10}));
  CHECK(counter.total() == 2 * 3 * 10 * 20);
  nn::conv(conv, torch::randn({2, 3, 5, 5}));
  CHECK(counter.total() == 2 * 3 * 10 * 20 + 2LL * 2 * 8 * 3 * 9 * 25);
  nn::matmul(torch::randn({4, 6, 7}), torch::randn({4, 7, 5}));
  CHECK(counter.total() == 2 * 3 * 10 * 20 + 2LL * 2 * 8 * 3 * 9 * 25 + 2LL * 4 * 6 * 7 * 5);
}

TEST_CASE("registry contents") {
  const auto all = list_backbones();
  auto has = [&](const std::string& key) {
    return std::any_of(all.begin(), all.end(), [&](const BackboneSpec& s) { return s.key() == key; });
  };
  CHECK(has("swin/tiny/cityscapes-sem"));
  CHECK(has("resnet/18/in1k-cls"));
  CHECK_FALSE(has("vit/tiny/eurosat-cls"));
  CHECK_THROWS_AS(Registry::builtin().find({Family::vit, "tiny", Pretrain::eurosat_cls, {}}), Error);
  for (const auto& e : Registry::builtin().entries())
    CHECK(e.spec.feature_level_ids.size() == 4);
  auto vit = Registry::builtin().find({Family::vit, "tiny", Pretrain::in1k_cls, {}});
  CHECK(vit.spec.feature_level_ids == std::vector<int64_t>{2, 5, 8, 11});
  CHECK(default_optimizer(Family::vit) == std::pair<double, double>{6e-5, 0.05});
  CHECK(default_optimizer(Family::swin) == std::pair<double, double>{1e-4, 1e-4});
}

TEST_CASE("every family produces a stride 4..32 pyramid") {
  torch::NoGradGuard ng;
  const std::vector<std::tuple<std::string, std::string, std::vector<int64_t>>> cases{
      {"swin", "tiny", {96, 192, 384, 768}},  {"swin", "micro", {16, 32, 64, 128}},
      {"swinv2", "tiny", {96, 192, 384, 768}}, {"vit", "tiny", {192, 192, 192, 192}},
      {"resnet", "18", {64, 128, 256, 512}},   {"resnet", "50", {256, 512, 1024, 2048}},
      {"convnext", "base", {128, 256, 512, 1024}}};
  for (const auto& [family, size, widths] : cases) {
    CAPTURE(family);
    CAPTURE(size);
    auto enc = arch(family, size);
    enc->eval();
    CHECK(enc->channels() == widths);
    auto levels = enc->forward(torch::randn({1, 3, 64, 64}));
    REQUIRE(levels.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
      const int64_t side = 64 / (int64_t{4} << i);
      CHECK(levels[i].sizes() == torch::IntArrayRef({1, widths[i], side, side}));
    }
  }
  auto swin = arch("swin", "tiny");
  swin->eval();
  auto big = swin->forward(torch::randn({1, 3, 256, 256}));
  CHECK(big[0].size(2) == 64);
}

TEST_CASE("random init differs between seeds") {
  torch::manual_seed(1);
  auto a = arch("swin", "tiny");
  torch::manual_seed(2);
  auto b = arch("swin", "tiny");
  CHECK_FALSE(torch::equal(a->named_parameters()[a->probe_parameter()], b->named_parameters()[b->probe_parameter()]));
}

TEST_CASE("checkpoint weights load bit-exactly for every family") {
  auto dir = scratch("weights");
  const std::vector<std::tuple<std::string, std::string, std::string, std::string>> cases{
      {"swin", "tiny", "in1k-cls", "swin."},
      {"swin", "tiny", "cityscapes-sem", "model.pixel_level_module.encoder."},
      {"swinv2", "tiny", "in1k-cls", "swinv2."},
      {"vit", "tiny", "in1k-cls", ""},
      {"resnet", "18", "in1k-cls", "resnet."},
      {"convnext", "base", "in1k-cls", "convnext."}};
  for (const auto& [family, size, pretrain, prefix] : cases) {
    CAPTURE(family);
    const auto& entry = Registry::builtin().find({parse_family(family), size, parse_pretrain(pretrain), {}});
    REQUIRE(entry.weights);
    CHECK(entry.weights->key_prefix == prefix);
    torch::manual_seed(10);
    auto source = build_architecture(entry);
    torch::manual_seed(20);
    auto target = build_architecture(entry);
    const auto file = export_encoder(*source, prefix, dir / (family + ".safetensors"));
    const auto rep = weights::load_encoder(*target, file, prefix);
    CHECK(rep.ignored >= 1);
    const auto sp = source->named_parameters(true), tp = target->named_parameters(true);
    for (const auto& p : sp) CHECK(torch::equal(p.value(), tp[p.key()]));
  }
}

TEST_CASE("incomplete or mismatched checkpoints are integrity errors") {
  auto dir = scratch("weights_bad");
  torch::manual_seed(3);
  auto enc = arch("swin", "tiny", "in1k-cls");
  auto file = export_encoder(*enc, "swin.", dir / "missing.safetensors", enc->probe_parameter());
  try {
    weights::load_encoder(*enc, file, "swin.");
    FAIL("expected integrity-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::integrity_error);
  }
  auto small = arch("swin", "micro");
  auto wrong = export_encoder(*small, "swin.", dir / "shape.safetensors");
  CHECK_THROWS_AS(weights::load_encoder(*enc, wrong, "swin."), Error);

  // ConvNeXt per-stage output norms are absent from classification checkpoints.
  auto cnx = arch("convnext", "base", "in1k-cls");
  io::TensorArchive a;
  for (const auto& p : cnx->named_parameters(true))
    if (p.key().find("hidden_states_norms") == std::string::npos) a.tensors["convnext." + p.key()] = p.value().detach().clone();
  io::write_safetensors(dir / "cnx.safetensors", a);
  auto rep = weights::load_encoder(*cnx, dir / "cnx.safetensors", "convnext.");
  CHECK_FALSE(rep.absent_optional.empty());
}

TEST_CASE("weight cache pins digests and never downloads on build") {
  auto cache = scratch("cache");
  const auto& entry = Registry::builtin().find({Family::resnet, "18", Pretrain::in1k_cls, {}});
  try {
    weights::resolve(*entry.weights, cache);
    FAIL("expected weights-unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::weights_unavailable);
  }
  torch::manual_seed(4);
  auto enc = build_architecture(entry);
  auto file = export_encoder(*enc, "resnet.", cache / "download.safetensors");
  auto cached = weights::import_file(*entry.weights, file, cache);
  CHECK(weights::resolve(*entry.weights, cache) == cached);
  BuildOptions opt;
  opt.cache_root = cache;
  auto built = build_backbone(entry.spec, opt);
  CHECK(torch::equal(built->named_parameters()[built->probe_parameter()], enc->named_parameters()[enc->probe_parameter()]));
  {
    std::ofstream tamper(cached, std::ios::app | std::ios::binary);
    tamper << "x";
  }
  try {
    weights::resolve(*entry.weights, cache);
    FAIL("expected integrity-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::integrity_error);
  }
}

TEST_CASE("subtraction fusion") {
  FeaturePyramid a, b;
  for (int i = 0; i < 4; ++i) {
    a.levels.push_back(torch::full({1, 2, 16 >> i, 16 >> i}, 3.0));
    b.levels.push_back(torch::full({1, 2, 16 >> i, 16 >> i}, 1.0));
  }
  auto f = fuse_subtract(a, b);
  for (const auto& l : f.levels) CHECK(torch::equal(l, torch::full_like(l, 2.0)));
  auto z = fuse_subtract(a, a);
  for (const auto& l : z.levels) CHECK(l.abs().max().item<double>() == 0.0);
  b.levels[2] = torch::zeros({1, 2, 3, 3});
  CHECK_THROWS_AS(fuse_subtract(a, b), Error);
}

TEST_CASE("siamese model contract") {
  auto model = micro_model(5);
  CHECK(count_parameters(*model) == count_parameters(*model->encoder()) + count_parameters(*model->decoder()));
  auto split = parameter_split(*model->encoder(), *model->decoder());
  CHECK(split.total == split.encoder + split.decoder);

  torch::NoGradGuard ng;
  auto x = torch::randn({2, 3, 64, 64}), y = torch::randn({2, 3, 64, 64});
  auto [f1, f2] = model->encode_pair(x, x);
  for (size_t i = 0; i < 4; ++i) CHECK(torch::equal(f1.levels[i], f2.levels[i]));
  auto [g1, g2] = model->encode_pair(x, y);
  auto [h1, h2] = model->encode_pair(y, x);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(torch::equal(g1.levels[i], h2.levels[i]));
    CHECK(torch::equal(g2.levels[i], h1.levels[i]));
  }
  auto pred = model->forward(x, y);
  CHECK(pred.prob.sizes() == torch::IntArrayRef({2, 64, 64}));
  CHECK(pred.prob.min().item<float>() >= 0.0f);
  CHECK(pred.prob.max().item<float>() <= 1.0f);
  CHECK(torch::equal(pred.mask, binarize(pred.prob, 0.5)));

  auto same = model->forward(x, x);
  CHECK((same.prob - same.prob.flatten().index({0})).abs().max().item<float>() < 1e-5f);
  CHECK((same.mask == same.mask.flatten().index({0})).all().item<bool>());

  auto wide = model->forward(torch::randn({1, 3, 96, 160}), torch::randn({1, 3, 96, 160}));
  CHECK(wide.prob.sizes() == torch::IntArrayRef({1, 96, 160}));
  CHECK_THROWS_AS(model->forward(torch::randn({1, 3, 48, 64}), torch::randn({1, 3, 48, 64})), Error);
}

TEST_CASE("zero fused pyramid decodes to a constant map") {
  auto model = micro_model(6);
  torch::NoGradGuard ng;
  FeaturePyramid z;
  const auto ch = model->encoder()->channels();
  for (int i = 0; i < 4; ++i) z.levels.push_back(torch::zeros({1, ch[i], 32 >> i, 32 >> i}));
  auto p = model->decode(z, 128, 128);
  CHECK(p.sizes() == torch::IntArrayRef({1, 128, 128}));
  CHECK((p - p.mean()).abs().max().item<float>() < 1e-5f);
}

TEST_CASE("threshold") {
  auto prob = torch::tensor({0.49f, 0.5f, 0.51f});
  auto m = binarize(prob, 0.5);
  CHECK(m[0].item<int>() == 0);
  CHECK(m[1].item<int>() == 0);
  CHECK(m[2].item<int>() == 1);
}

TEST_CASE("gradients reach both inputs") {
  auto model = micro_model(7);
  auto x = torch::randn({1, 3, 64, 64}, torch::requires_grad()), y = torch::randn({1, 3, 64, 64}, torch::requires_grad());
  model->forward_logits(x, y).sum().backward();
  for (const auto& t : {x, y}) {
    CHECK(torch::isfinite(t.grad()).all().item<bool>());
    CHECK(t.grad().abs().sum().item<float>() > 0.0f);
  }
}

TEST_CASE("checkpoint round trip") {
  auto dir = scratch("ckpt");
  auto a = micro_model(8), b = micro_model(9);
  save_checkpoint(dir / "c.safetensors", *a, R"({"name":"x"})");
  CHECK(read_checkpoint_config(dir / "c.safetensors") == R"({"name":"x"})");
  load_checkpoint_weights(dir / "c.safetensors", *b);
  torch::NoGradGuard ng;
  auto x = torch::randn({1, 3, 64, 64}), y = torch::randn({1, 3, 64, 64});
  CHECK(torch::equal(a->forward(x, y).prob, b->forward(x, y).prob));

  io::TensorArchive foreign;
  foreign.tensors["w"] = torch::zeros({1});
  io::write_safetensors(dir / "f.safetensors", foreign);
  CHECK_THROWS_AS(read_checkpoint_config(dir / "f.safetensors"), Error);
  CHECK_THROWS_AS(read_checkpoint_config(dir / "absent.safetensors"), Error);
}
