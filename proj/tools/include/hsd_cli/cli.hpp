#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hsd::cli {

/// Runs one `hsd` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on usage errors and 2 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hsd::cli
