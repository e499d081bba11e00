#pragma once

#include <string>
#include <vector>

namespace ofpnet::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,     // unknown command or bad flags
  kConfig = 3,    // config file or override could not be parsed/validated
  kRuntime = 4,   // training abort or other runtime failure
  kData = 5,      // missing/corrupt dataset, checkpoint or I/O failure
};

// Entry point used by the ofpnet binary. argv[0] is the program name.
int run(const std::vector<std::string>& argv);
int run(int argc, char** argv);

}  // namespace ofpnet::cli
