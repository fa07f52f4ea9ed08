// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace beamfuse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Entry point of the `beamfuse` tool. Subcommands: genmodel, gencorpus,
/// decode, bench {steps, batch, kernels, precision}. Returns the exit code:
/// 0 success, 2 usage or validation error, 3 data or IO error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace beamfuse
