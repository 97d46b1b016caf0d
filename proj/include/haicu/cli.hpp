#pragma once

#include <iosfwd>

namespace haicu {

/// Runs the command line tool. Returns 0 on success, 1 on a domain error
/// (one-line diagnostic on `err`) and 2 on a usage error (usage on `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace haicu
