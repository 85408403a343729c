#pragma once

namespace csim::cli {

// Entry point of the `csim` tool. Returns the process exit code: 0 on
// success, 1 on usage errors, 2 on data/format errors, 3 on solver failures.
int run(int argc, const char* const* argv);

}  // namespace csim::cli
