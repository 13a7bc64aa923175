#pragma once

#include <stdexcept>
#include <string>

namespace hopfshock {

enum class ErrorKind {
    Dimension,
    Argument,
    Domain,
    DomainTooSmall,
    NoConnection,
    SpectralAssumption,
    ConditionDViolated,
    Conditioning,
    Numerical,
    Nonconvergence,
    Configuration,
    SmallnessBox,
    RootNotFound,
    TruncationConstant,
    Inconsistency,
    Io,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind drives
/// CLI exit codes and lets tests assert on the failure category.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension error";
        case ErrorKind::Argument: return "argument error";
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::DomainTooSmall: return "domain-too-small error";
        case ErrorKind::NoConnection: return "no-connection error";
        case ErrorKind::SpectralAssumption: return "spectral-assumption error";
        case ErrorKind::ConditionDViolated: return "condition-D-violated error";
        case ErrorKind::Conditioning: return "conditioning error";
        case ErrorKind::Numerical: return "numerical error";
        case ErrorKind::Nonconvergence: return "nonconvergence error";
        case ErrorKind::Configuration: return "configuration error";
        case ErrorKind::SmallnessBox: return "smallness-box error";
        case ErrorKind::RootNotFound: return "root-not-found error";
        case ErrorKind::TruncationConstant: return "truncation-constant error";
        case ErrorKind::Inconsistency: return "inconsistency error";
        case ErrorKind::Io: return "I/O error";
    }
    return "error";
}

}  // namespace hopfshock
