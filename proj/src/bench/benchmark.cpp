#include "cdet/bench/benchmark.hpp"

#include <chrono>
#include <cstdio>

#include "cdet/device.hpp"
#include "cdet/error.hpp"
#include "cdet/eval/metrics.hpp"
#include "cdet/nn/flops.hpp"
#include "cdet/random.hpp"

namespace cdet {

namespace {

std::string describe(torch::Device device) {
  if (device.is_cuda()) return "cuda:" + std::to_string(device.has_index() ? device.index() : 0);
  return "cpu (" + std::to_string(torch::get_num_threads()) + " threads)";
}

}  // namespace

double fps_from_ms(double ms) { return 1000.0 / ms; }

LatencySamples run_protocol(const std::function<void()>& pass, const std::function<void()>& sync,
                            const LatencyProtocol& p) {
  if (p.warmup < 0 || p.timed < 1 || p.repeats < 1)
    fail(Errc::invalid_argument, "latency protocol needs timed >= 1, repeats >= 1, warmup >= 0");
  LatencySamples s;
  for (int r = 0; r < p.repeats; ++r) {
    for (int i = 0; i < p.warmup; ++i) pass();
    s.passes += p.warmup;
    sync();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < p.timed; ++i) pass();
    sync();
    const auto t1 = std::chrono::steady_clock::now();
    s.passes += p.timed;
    s.per_pass_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / p.timed);
  }
  s.mean_ms = mean_of(s.per_pass_ms);
  s.std_ms = sample_std(s.per_pass_ms);
  s.single_sample = s.per_pass_ms.size() == 1;
  return s;
}

namespace {

// Module::to(dtype) would also cast integer buffers such as attention index
// tables; only floating-point state changes precision.
void cast_floating(torch::nn::Module& model, torch::Device device, torch::Dtype dtype) {
  torch::NoGradGuard guard;
  for (auto& p : model.parameters()) p.set_data(p.data().to(device, p.is_floating_point() ? dtype : p.scalar_type()));
  for (auto& b : model.buffers()) b.set_data(b.to(device, b.is_floating_point() ? dtype : b.scalar_type()));
}

}  // namespace

BenchReport measure_latency(ChangeModelImpl& model, const LatencyProtocol& protocol, torch::Device device,
                            const std::string& precision) {
  if (precision != "fp16" && precision != "fp32")
    fail(Errc::invalid_argument, "precision must be fp16 or fp32");
  const auto dtype = precision == "fp16" ? torch::kHalf : torch::kFloat32;
  model.eval();
  cast_floating(model, device, dtype);
  torch::NoGradGuard guard;

  torch::manual_seed(0);
  const auto n = protocol.input_size;
  auto pre = torch::rand({1, 3, n, n}).to(device, dtype);
  auto post = torch::rand({1, 3, n, n}).to(device, dtype);

  Prediction out;
  try {
    out = model.forward(pre, post);
  } catch (const c10::Error& e) {
    fail(Errc::capability_error, "forward pass in " + precision + " is not supported on " + describe(device) +
                                     ": " + e.what_without_backtrace());
  }
  if (!torch::isfinite(out.prob).all().item<bool>())
    fail(Errc::precision_error, "non-finite outputs in " + precision);

  auto pass = [&] { out = model.forward(pre, post); };
  auto sync = [&] {
    if (device.is_cuda()) torch::cuda::synchronize();
  };
  const auto s = run_protocol(pass, sync, protocol);

  BenchReport r;
  r.protocol = protocol;
  r.samples_ms = s.per_pass_ms;
  r.inference_ms_mean = s.mean_ms;
  r.inference_ms_std = s.std_ms;
  r.single_sample_flag = s.single_sample;
  r.fps = fps_from_ms(s.mean_ms);
  r.device_descriptor = describe(device);
  r.precision_mode = precision;
  r.latency_measured = true;
  cast_floating(model, device, torch::kFloat32);
  return r;
}

double count_flops(ChangeModelImpl& model, int64_t size) {
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard guard;
  const auto device = model.parameters().front().device();
  auto x = torch::zeros({1, 3, size, size}, torch::TensorOptions().device(device));
  nn::FlopCounter counter;
  model.forward(x, x);
  model.train(was_training);
  return static_cast<double>(counter.total()) / 1e9;
}

BenchReport report_efficiency(const ExperimentConfig& config, const EfficiencyOptions& options) {
  config.validate();
  torch::manual_seed(derive_seed(0, "bench"));
  BuildOptions build;
  build.drop_path_rate = config.drop_path_rate;
  const auto& entry = Registry::builtin().find(config.backbone);
  ChangeModel model(build_architecture(entry, build), config.decoder, config.threshold);

  const auto split = parameter_split(*model->encoder(), *model->decoder());
  const double gflops = count_flops(*model, options.protocol.input_size);

  BenchReport r;
  if (options.measure) r = measure_latency(*model, options.protocol, select_device(), options.precision);
  r.protocol = options.protocol;
  r.config_name = config.name;
  r.gflops = gflops;
  r.params_encoder = split.encoder;
  r.params_decoder = split.decoder;
  r.params_total = split.total;
  if (!options.measure) r.precision_mode = options.precision;
  return r;
}

nlohmann::json to_json(const BenchReport& r) {
  return {{"config", r.config_name},
          {"inference_ms_mean", r.inference_ms_mean},
          {"inference_ms_std", r.inference_ms_std},
          {"fps", r.fps},
          {"samples_ms", r.samples_ms},
          {"single_sample_flag", r.single_sample_flag},
          {"latency_measured", r.latency_measured},
          {"gflops", r.gflops},
          {"flops_method", r.flops_method},
          {"params_encoder", r.params_encoder},
          {"params_decoder", r.params_decoder},
          {"params_total", r.params_total},
          {"device_descriptor", r.device_descriptor},
          {"precision_mode", r.precision_mode},
          {"protocol",
           {{"warmup", r.protocol.warmup},
            {"timed", r.protocol.timed},
            {"repeats", r.protocol.repeats},
            {"input_size", r.protocol.input_size},
            {"batch_size", 1},
            {"timed_region", "full forward incl. 0.5 thresholding; inputs pre-staged"}}}};
}

BenchReport bench_report_from_json(const nlohmann::json& j) {
  BenchReport r;
  try {
    r.config_name = j.at("config").get<std::string>();
    r.inference_ms_mean = j.at("inference_ms_mean").get<double>();
    r.inference_ms_std = j.at("inference_ms_std").get<double>();
    r.fps = j.at("fps").get<double>();
    r.samples_ms = j.at("samples_ms").get<std::vector<double>>();
    r.single_sample_flag = j.at("single_sample_flag").get<bool>();
    r.latency_measured = j.at("latency_measured").get<bool>();
    r.gflops = j.at("gflops").get<double>();
    r.flops_method = j.at("flops_method").get<std::string>();
    r.params_encoder = j.at("params_encoder").get<int64_t>();
    r.params_decoder = j.at("params_decoder").get<int64_t>();
    r.params_total = j.at("params_total").get<int64_t>();
    r.device_descriptor = j.at("device_descriptor").get<std::string>();
    r.precision_mode = j.at("precision_mode").get<std::string>();
    const auto& p = j.at("protocol");
    r.protocol.warmup = p.at("warmup").get<int>();
    r.protocol.timed = p.at("timed").get<int>();
    r.protocol.repeats = p.at("repeats").get<int>();
    r.protocol.input_size = p.at("input_size").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_argument, std::string("malformed benchmark report: ") + e.what());
  }
  return r;
}

std::string bench_csv(const std::vector<BenchReport>& reports) {
  std::string out = "config,params_total_M,gflops,fps,inference_ms_mean,inference_ms_std\n";
  for (const auto& r : reports) {
    char row[256];
    std::snprintf(row, sizeof row, "%s,%.1f,%.1f,%.1f,%.3f,%.3f\n", r.config_name.c_str(), r.params_total / 1e6,
                  r.gflops, r.fps, r.inference_ms_mean, r.inference_ms_std);
    out += row;
  }
  return out;
}

}  // namespace cdet
