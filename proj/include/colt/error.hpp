#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace colt {

enum class ErrorKind {
    shape,
    index,
    degenerate,
    capacity,
    diverged,
    schedule_exhausted,
    oracle_failure,
    parse,
    schema,
    config,
    io,
    integrity,
    incompatible_checkpoint,
    dependency,
    incomplete_matrix,
    undefined_metric,
    domain,
    service,
    rewrite_violation,
    unavailable,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::index: return "index";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::schedule_exhausted: return "schedule_exhausted";
    case ErrorKind::oracle_failure: return "oracle_failure";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::incompatible_checkpoint: return "incompatible_checkpoint";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::incomplete_matrix: return "incomplete_matrix";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::domain: return "domain";
    case ErrorKind::service: return "service";
    case ErrorKind::rewrite_violation: return "rewrite_violation";
    case ErrorKind::unavailable: return "unavailable";
    }
    return "unknown";
}

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Parse failure with the byte offset reported by the JSON reader.
class ParseError : public Error {
public:
    ParseError(std::size_t byte_offset, const std::string& message)
        : Error(ErrorKind::parse, message + " (at byte " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace colt
