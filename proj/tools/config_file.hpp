#pragma once

// Flat "key = value" configuration files for the command-line tool.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dacount::cli {

// Lines are "key = value"; '#' starts a comment; blank lines are ignored.
// Keys are long option names without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

// Value of "--config" in argv, if present ("--config F" or "--config=F").
std::string find_config_path(const std::vector<std::string>& args);

}  // namespace dacount::cli
