#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sarc {

// All library errors carry a machine-readable category; the CLI maps the
// category to its exit status and one-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(msg), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct TrainError : Error {
    explicit TrainError(const std::string& msg) : Error("train", msg) {}
};

}  // namespace sarc
