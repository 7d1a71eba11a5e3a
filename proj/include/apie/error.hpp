#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace apie {

/// Coarse failure class; the CLI maps each one to a process exit code.
enum class ErrorCategory { config, data, backend };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), category_(category), code_(std::move(code)), detail_(message) {}

    ErrorCategory category() const noexcept { return category_; }
    /// Stable machine-readable name, e.g. "k_too_small" or "MissingGold".
    const std::string& code() const noexcept { return code_; }
    /// The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCategory category_;
    std::string code_;
    std::string detail_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string code, const std::string& message)
        : Error(ErrorCategory::config, std::move(code), message) {}
};

class DataError : public Error {
public:
    DataError(std::string code, const std::string& message)
        : Error(ErrorCategory::data, std::move(code), message) {}
};

class BackendError : public Error {
public:
    BackendError(std::string code, const std::string& message, int http_status = 0)
        : Error(ErrorCategory::backend, std::move(code), message), http_status_(http_status) {}

    int http_status() const noexcept { return http_status_; }

private:
    int http_status_;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace apie
