#pragma once

#include <iosfwd>

namespace ragfc {

// Command-line entry point, callable in-process so tests can drive the tool
// without spawning. Writes to the given streams and returns the process exit
// code: 0 success, 2 configuration error, 3 provider error, 4 quota error,
// 1 anything else.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ragfc
