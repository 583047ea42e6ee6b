#pragma once

#include <ostream>

namespace voxpipe::cli {

// 0 success, 2 config/usage, 3 I/O, 4 data/schema.
enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kData = 4 };

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace voxpipe::cli
