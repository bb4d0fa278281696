#pragma once

#include <ostream>

namespace mmlm {

// Entry point of the `mmlm` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmlm
