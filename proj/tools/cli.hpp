#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace markph::cli {

// Runs one command line (arguments after the program name) and returns the
// process exit code: 0 ok, 2 usage or validation error, 3 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace markph::cli
