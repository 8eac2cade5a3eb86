#pragma once

#include <cstdlib>
#include <string>

#include <torch/torch.h>

#include "cdet/error.hpp"

namespace cdet {

/// Device named by $CDET_DEVICE ("cpu" by default, "cuda" or "cuda:N").
/// environment-error when the requested device is not available.
inline torch::Device select_device() {
  const char* env = std::getenv("CDET_DEVICE");
  const std::string name = (env && *env) ? env : "cpu";
  torch::Device device(torch::kCPU);
  try {
    device = torch::Device(name);
  } catch (const std::exception&) {
    fail(Errc::environment_error, "unrecognized device '" + name + "'");
  }
  if (device.is_cuda() && !torch::cuda::is_available())
    fail(Errc::environment_error, "device '" + name + "' requested but CUDA is not available");
  if (!device.is_cpu() && !device.is_cuda())
    fail(Errc::environment_error, "unsupported device '" + name + "'");
  return device;
}

}  // namespace cdet
