#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fieldalign {

/// Library component an error originated in. Rendered in diagnostics so a
/// failure can be traced to the stage that raised it.
enum class Module { ingest, featurize, classify, align, evaluate, cli, review };

enum class ErrorKind {
    usage,       // bad flags / arguments
    config,      // inconsistent configuration
    parse,       // malformed input file
    data,        // well-formed but unusable data
    lookup,      // unknown column / class / session
    io,          // filesystem failure
    numeric,     // divergence, division guard
    infeasible,  // no feasible assignment
    conflict,    // concurrent or contradictory decision
};

std::string_view to_string(Module m) noexcept;
std::string_view to_string(ErrorKind k) noexcept;

class Error : public std::runtime_error {
public:
    Error(Module module, ErrorKind kind, const std::string& message)
        : std::runtime_error(message), module_(module), kind_(kind) {}

    Module module() const noexcept { return module_; }
    ErrorKind kind() const noexcept { return kind_; }

    /// "[module] message" on one line.
    std::string diagnostic() const;

private:
    Module module_;
    ErrorKind kind_;
};

/// Malformed delimited input. `row()` is the 1-based physical record number,
/// counting the header as record 1.
class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& message)
        : Error(Module::ingest, ErrorKind::parse,
                "row " + std::to_string(row) + ": " + message),
          row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace fieldalign
