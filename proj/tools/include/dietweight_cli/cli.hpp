// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dietweight::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kOutputConflict = 3,
  kDataInsufficient = 4,
  kNumericFailure = 5,
};

/// Entry point of the `dietweight` tool: synth, train, eval and ablate.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Convenience for in-process callers; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dietweight::cli
