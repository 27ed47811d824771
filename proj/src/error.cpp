#include "fieldalign/error.hpp"

namespace fieldalign {

std::string_view to_string(Module m) noexcept {
    switch (m) {
        case Module::ingest: return "ingest";
        case Module::featurize: return "featurize";
        case Module::classify: return "classify";
        case Module::align: return "align";
        case Module::evaluate: return "evaluate";
        case Module::cli: return "cli";
        case Module::review: return "review";
    }
    return "unknown";
}

std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::config: return "config";
        case ErrorKind::parse: return "parse";
        case ErrorKind::data: return "data";
        case ErrorKind::lookup: return "lookup";
        case ErrorKind::io: return "io";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::infeasible: return "infeasible";
        case ErrorKind::conflict: return "conflict";
    }
    return "unknown";
}

std::string Error::diagnostic() const {
    std::string out = "[";
    out += to_string(module_);
    out += "] ";
    out += what();
    for (auto& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

}  // namespace fieldalign
