#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "seasonal/jsonl.hpp"

namespace seasonal::cli {

enum ExitCode : int {
    kOk = 0,
    kRuntimeError = 1,
    kUsageError = 2,
    kDataFormatError = 3,
};

/// The configuration with every key at its default value.
nlohmann::ordered_json default_config();

/// Merges a config document over the defaults. Unknown sections or keys and
/// values of the wrong type raise Error(Config).
nlohmann::ordered_json merge_config(const Json& document);

/// Runs one subcommand. `args` excludes the program name. Data goes to
/// files and `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seasonal::cli
