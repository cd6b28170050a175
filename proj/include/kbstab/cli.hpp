#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace kbstab::cli {

/// Runs one subcommand. Returns 0 on success, 1 for invalid arguments or
/// data, 2 for unreadable or malformed input files.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a digest as 16 hex digits.
std::string digest(std::string_view bytes);

}  // namespace kbstab::cli
