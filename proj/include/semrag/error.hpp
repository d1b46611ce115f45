#pragma once

#include <stdexcept>
#include <string>

namespace semrag {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or missing prerequisite artifact. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Embedding or chat provider failure (transport, protocol, bad payload). CLI exit code 3.
class ProviderError : public Error {
public:
    using Error::Error;
};

/// Malformed persisted data (JSONL lines, scripts, configs on disk).
class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace semrag
