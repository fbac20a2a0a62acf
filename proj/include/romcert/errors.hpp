#pragma once

#include <stdexcept>
#include <string>

namespace romcert {

/// Base of all library errors. `category()` is a stable machine-readable tag
/// (the CLI maps it to an exit code); `what()` is for humans.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

/// Invalid argument values or incompatible dimensions.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error("domain", message) {}
};

/// A matrix expected to have full numerical rank does not.
class RankDeficientError : public Error {
public:
    RankDeficientError(const std::string& message, long rank, long required)
        : Error("rank_deficient",
                message + " (numerical rank " + std::to_string(rank) + ", need " +
                    std::to_string(required) + ")"),
          rank_(rank), required_(required) {}

    long rank() const noexcept { return rank_; }
    long required() const noexcept { return required_; }

private:
    long rank_;
    long required_;
};

/// An iteration hit its cap before meeting its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& message, long iterations, double last_estimate)
        : Error("convergence", message + " after " + std::to_string(iterations) +
                                   " iterations, last estimate " + std::to_string(last_estimate)),
          iterations_(iterations), last_estimate_(last_estimate) {}

    long iterations() const noexcept { return iterations_; }
    double last_estimate() const noexcept { return last_estimate_; }

private:
    long iterations_;
    double last_estimate_;
};

/// A linear solve could not be prepared (singular or non-factorizable matrix).
class FactorizationError : public Error {
public:
    explicit FactorizationError(const std::string& message) : Error("factorization", message) {}
};

/// Fewer data rows than unknowns.
class InsufficientDataError : public Error {
public:
    InsufficientDataError(const std::string& message, long rows, long needed)
        : Error("insufficient_data", message + " (" + std::to_string(rows) + " rows, need " +
                                         std::to_string(needed) + ")"),
          rows_(rows), needed_(needed) {}

    long rows() const noexcept { return rows_; }
    long needed() const noexcept { return needed_; }

private:
    long rows_;
    long needed_;
};

/// Data is inconsistent with the model class the operation assumes.
class ModelMismatchError : public Error {
public:
    ModelMismatchError(const std::string& message, double value, double scale)
        : Error("model_mismatch", message + " (value " + std::to_string(value) + ", scale " +
                                      std::to_string(scale) + ")"),
          value_(value), scale_(scale) {}

    double value() const noexcept { return value_; }
    double scale() const noexcept { return scale_; }

private:
    double value_;
    double scale_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

/// Persisted artifacts do not match the configuration they are loaded for.
class StaleArtifactsError : public Error {
public:
    explicit StaleArtifactsError(const std::string& message)
        : Error("stale_artifacts", message) {}
};

/// Filesystem trouble while reading or writing run data.
class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

} // namespace romcert
