#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace frg {

// Runs one subcommand (conjugate | flow | om | boundary | check) given
// CLI arguments without the program name. Writes records to `out` and
// diagnostics to `err`. Returns the process exit code: 0 success,
// 1 property/runtime failure, 2 configuration error.
int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace frg
