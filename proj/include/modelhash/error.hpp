#pragma once

#include <stdexcept>
#include <string>

namespace modelhash {

// Every failure raised by the library derives from this type so the CLI can
// map it to a single-line diagnostic and exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigMismatch : public Error {
public:
    ConfigMismatch() : Error("config mismatch") {}
    explicit ConfigMismatch(const std::string& detail) : Error("config mismatch: " + detail) {}
};

} // namespace modelhash
