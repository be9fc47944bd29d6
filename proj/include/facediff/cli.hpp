#pragma once

namespace facediff {

// Full command-line entry point. Returns 0 on success, 2 on usage errors,
// 1 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace facediff
