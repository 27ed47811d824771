#pragma once

#include <iosfwd>

namespace fieldalign {

/// Entry point of the `fieldalign` command; returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fieldalign
