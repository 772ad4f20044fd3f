#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dsnet {

// All library failures carry a category so callers (in particular the CLI)
// can report "<category> error: <message>" and map categories to exit paths.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + " error: " + message),
          category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& m) : Error("domain", m) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error("usage", m) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error("format", m) {}
};

struct CorruptionError : Error {
    explicit CorruptionError(const std::string& m) : Error("corruption", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

struct LabelingError : Error {
    explicit LabelingError(const std::string& m) : Error("labeling", m) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& m) : Error("divergence", m) {}
};

}  // namespace dsnet
