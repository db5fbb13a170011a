#pragma once

#include <stdexcept>
#include <string>

namespace cglo {

/// Base for every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI in its one-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct VersionError : Error {
    explicit VersionError(const std::string& what) : Error("version", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

}  // namespace cglo
