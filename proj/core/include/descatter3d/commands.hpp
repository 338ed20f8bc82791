#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace descatter3d {

/// CLI entry point shared by the descatter3d binary and the in-process
/// tests. `args` excludes the program name. Returns 0 on success, 1 on a
/// usage error, 2 on a data or validation error.
int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
             std::ostream& err = std::cerr);

}  // namespace descatter3d
