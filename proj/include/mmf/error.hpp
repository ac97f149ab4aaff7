#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

enum class ErrorCode {
    invalid_argument,
    dimension,   // tensor/matrix shape mismatch
    numeric,     // division by zero, non-finite values
    contract,    // API precondition violated
    parse,       // malformed input text
    io,          // file system failure
    config,      // inconsistent configuration
    sampling,    // episode sampling retry budget exhausted
    format,      // bad magic / version / checksum in a binary file
    diverged,    // training produced non-finite losses
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok) fail(code, message);
}

}  // namespace mmf
