#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace imave {

// Entry point shared by the binary and the tests. args excludes argv[0].
// Returns the process exit status: 0 on success, 2 on any imave::Error or
// argument-parsing failure (reported as "ERROR <code>: <message>" on err).
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace imave
