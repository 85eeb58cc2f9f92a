#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wasscopos {

// Entry point behind the wasscopos binary; returns the process exit code.
// Exit codes: 0 ok, 2 I/O, 3 config, 4 solver-nonoptimal.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wasscopos
