#pragma once

#include <ostream>

namespace nifm {

// Entry point of the `nifm` tool. Returns the process exit code; failures are
// reported on `err` as a single "error: <category>: <message>" line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nifm
