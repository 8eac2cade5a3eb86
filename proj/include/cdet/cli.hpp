#pragma once

namespace cdet {

/// Entry point of the `cdet` tool. Returns the process exit code:
/// 0 success, 2 validation, 3 environment, 4 runtime failure.
int run_cli(int argc, char** argv);

}  // namespace cdet
