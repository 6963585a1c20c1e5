#pragma once

#include <stdexcept>
#include <string>

namespace uavvln {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (unknown profile, malformed file, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Remote backend could not be reached or timed out.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

// Remote payload does not match the wire schema.
class SchemaViolation : public Error {
public:
    using Error::Error;
};

} // namespace uavvln
