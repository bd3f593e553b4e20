#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glt::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kProtocolError = 3,
  kAcceptanceFailure = 4,
};

// Entry point of the `glt` tool: gen | split | train | eval | report | repro.
// Diagnostics go to `err`, summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glt::cli
