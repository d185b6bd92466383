#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stpp {

/// Runs one CLI invocation; args exclude the program name. Returns the exit
/// status; failures print a single diagnostic line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stpp
