#include "cdet/error.hpp"

namespace cdet {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_split: return "invalid-split";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::invalid_config: return "invalid-config";
    case Errc::config_error: return "config-error";
    case Errc::invalid_matrix: return "invalid-matrix";
    case Errc::invalid_mask: return "invalid-mask";
    case Errc::dataset_not_found: return "dataset-not-found";
    case Errc::corrupt_sample: return "corrupt-sample";
    case Errc::shape_error: return "shape-error";
    case Errc::integrity_error: return "integrity-error";
    case Errc::weights_unavailable: return "weights-unavailable";
    case Errc::training_diverged: return "training-diverged";
    case Errc::partial_result: return "partial-result";
    case Errc::environment_error: return "environment-error";
    case Errc::precision_error: return "precision-error";
    case Errc::capability_error: return "capability-error";
    case Errc::io_error: return "io-error";
    case Errc::not_found: return "not-found";
  }
  return "unknown";
}

FailureClass failure_class(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::invalid_split:
    case Errc::invalid_spec:
    case Errc::invalid_config:
    case Errc::config_error:
    case Errc::invalid_matrix:
      return FailureClass::validation;
    case Errc::environment_error:
    case Errc::weights_unavailable:
    case Errc::capability_error:
    case Errc::dataset_not_found:
      return FailureClass::environment;
    default:
      return FailureClass::runtime;
  }
}

int exit_code(FailureClass cls) {
  switch (cls) {
    case FailureClass::validation: return 2;
    case FailureClass::environment: return 3;
    case FailureClass::runtime: return 4;
  }
  return 1;
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace cdet
