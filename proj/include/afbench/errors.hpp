#pragma once

#include <stdexcept>
#include <string>

namespace afbench {

// Bad input documents: schema violations, unknown names, malformed records.
// The message carries a human-readable locator (file, line, field) whenever
// one is available.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// API misuse: a caller violated a documented precondition.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(what + ": " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// A pipeline stage could not run or produced invalid output.
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when generated items fail the exactly-one-implied check.
class SoundnessError : public StageError {
public:
    using StageError::StageError;
};

}  // namespace afbench
