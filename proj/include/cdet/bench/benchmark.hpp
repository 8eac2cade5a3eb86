#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "cdet/config.hpp"
#include "cdet/model/change_model.hpp"

namespace cdet {

struct LatencyProtocol {
  int warmup = 1000;  // untimed passes before every timed block
  int timed = 1000;   // passes per runtime sample
  int repeats = 5;    // runtime samples
  int64_t input_size = 256;
};

struct LatencySamples {
  std::vector<double> per_pass_ms;  // one entry per repeat
  double mean_ms = 0;
  double std_ms = 0;  // sample std; 0 with a single repeat
  bool single_sample = false;
  int64_t passes = 0;  // total pass() invocations
};

/// Generic timing loop: for each repeat, `warmup` untimed passes, then
/// `timed` passes between two sync() calls.
LatencySamples run_protocol(const std::function<void()>& pass, const std::function<void()>& sync,
                            const LatencyProtocol& protocol);

struct BenchReport {
  std::string config_name;
  double inference_ms_mean = 0;
  double inference_ms_std = 0;
  double fps = 0;
  std::vector<double> samples_ms;
  bool single_sample_flag = false;
  double gflops = 0;
  std::string flops_method = "instrumented conv/linear/matmul count, 2 FLOPs per multiply-add";
  int64_t params_encoder = 0, params_decoder = 0, params_total = 0;
  std::string device_descriptor;
  std::string precision_mode;
  LatencyProtocol protocol;
  bool latency_measured = false;
};

double fps_from_ms(double ms);

/// Times full forward passes (including thresholding) of one input pair
/// already staged on `device`. precision "fp16" converts the model and inputs
/// to half precision. precision-error on non-finite outputs.
BenchReport measure_latency(ChangeModelImpl& model, const LatencyProtocol& protocol, torch::Device device,
                            const std::string& precision = "fp16");

/// Floating-point operations of one forward pass on a size x size pair, in
/// billions (fp32, CPU).
double count_flops(ChangeModelImpl& model, int64_t size = 256);

struct EfficiencyOptions {
  LatencyProtocol protocol;
  std::string precision = "fp16";
  bool measure = true;  // false: params and FLOPs only
};

/// Parameter split, FLOPs and (optionally) latency for the architecture of
/// `config`. Weights are randomly initialized: none of these quantities
/// depend on their values.
BenchReport report_efficiency(const ExperimentConfig& config, const EfficiencyOptions& options = {});

nlohmann::json to_json(const BenchReport& report);
BenchReport bench_report_from_json(const nlohmann::json& j);
/// Columns: config, params_total_M, gflops, fps, inference_ms_mean, inference_ms_std.
std::string bench_csv(const std::vector<BenchReport>& reports);

}  // namespace cdet
