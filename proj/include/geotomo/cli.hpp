#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geotomo {

// Dispatches one subcommand invocation; args excludes the program name.
// Exit codes: 0 success, 2 validation failure, 3 numerical failure,
// 64 unknown subcommand.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace geotomo
