#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace turbsim {

enum class ErrorKind {
    domain,   // argument outside the operation's domain
    index,    // index out of range
    shape,    // mismatched dimensions
    io,       // unreadable / unwritable file
    format,   // malformed file contents
    version,  // artifact or sidecar version / hash drift
    fit,      // surrogate fit quality failure
    numeric,  // non-finite intermediate result
};

inline std::string_view kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::domain: return "domain";
        case ErrorKind::index: return "index";
        case ErrorKind::shape: return "shape";
        case ErrorKind::io: return "io";
        case ErrorKind::format: return "format";
        case ErrorKind::version: return "version";
        case ErrorKind::fit: return "fit";
        case ErrorKind::numeric: return "numeric";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by the P2S fit when the held-out error exceeds the accepted bound.
class FitError : public Error {
public:
    FitError(double measured, double bound)
        : Error(ErrorKind::fit, "surrogate held-out median relative error " + std::to_string(measured) +
                                    " exceeds bound " + std::to_string(bound)),
          measured_(measured) {}
    double measured_error() const noexcept { return measured_; }

private:
    double measured_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) throw Error(kind, msg);
}

}  // namespace turbsim
