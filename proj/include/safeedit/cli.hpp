#pragma once
// Command-line dispatch. Subcommands: synthesize, edit, export, eval,
// report, validate. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <string>
#include <vector>

namespace safeedit {

int cli_dispatch(const std::vector<std::string> &args);

} // namespace safeedit
