#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdet {

enum class Errc {
  invalid_argument,
  invalid_split,
  invalid_spec,
  invalid_config,
  config_error,
  invalid_matrix,
  invalid_mask,
  dataset_not_found,
  corrupt_sample,
  shape_error,
  integrity_error,
  weights_unavailable,
  training_diverged,
  partial_result,
  environment_error,
  precision_error,
  capability_error,
  io_error,
  not_found,
};

std::string_view errc_name(Errc code);

// Failure classes map onto process exit codes in the CLI.
enum class FailureClass { validation, environment, runtime };

FailureClass failure_class(Errc code);
int exit_code(FailureClass cls);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace cdet
