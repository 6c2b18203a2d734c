#pragma once

#include <string>
#include <vector>

namespace pamkit {

/// Command-line entry point; `args` excludes the program name. Returns the
/// process exit code: 0 success, 2 usage error, 3 configuration error,
/// 1 any other failure. Errors are reported as one-line JSON on stderr.
/// Every executed subcommand writes a run-config JSON capturing the harness
/// version, PRNG identifier, and argv, from which `replay` can reproduce the
/// run (appended options override stored ones).
int run_cli(const std::vector<std::string>& args);

}  // namespace pamkit
