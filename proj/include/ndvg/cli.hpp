#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ndvg {

// Dispatches one command line (without argv[0]). Streams carry what the
// binary would print, so tests can drive the interface in-process.
// Exit status: 0 success, 1 usage error, 2 runtime failure; every failure
// prints a single line `error: <code>: <message>` to `err`.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ndvg
