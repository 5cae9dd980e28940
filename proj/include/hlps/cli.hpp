#pragma once

#include <iosfwd>

namespace hlps::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kTolerance = 3 };

/// Entry point of the hlps command. Subcommands: train, eval, selftest,
/// transfer, dump, ablate.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hlps::cli
