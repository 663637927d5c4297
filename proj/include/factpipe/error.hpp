#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace factpipe {

/// Base class for every error raised by the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a schema or invariant (bad JSONL, dangling ids, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// llm_client

/// The endpoint rejected the request in a way retrying cannot fix
/// (HTTP 4xx other than 429, unreachable host, no endpoint configured).
class PermanentError : public Error {
public:
    PermanentError(const std::string& what, int status = 0) : Error(what), status_(status) {}
    [[nodiscard]] int status() const noexcept { return status_; }

private:
    int status_;
};

/// Every retry attempt failed transiently.
class TransientExhausted : public Error {
public:
    TransientExhausted(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
    [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

// decomposer

class TemplateError : public Error {
public:
    using Error::Error;
};

class AdaptError : public Error {
public:
    using Error::Error;
};

// retriever

class IngestError : public Error {
public:
    IngestError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    /// 1-based line number of the offending record (0 when not line-specific).
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ZeroVectorError : public Error {
public:
    using Error::Error;
};

// verifier

class MissingReference : public Error {
public:
    using Error::Error;
};

// metrics

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class MismatchedClaimSets : public Error {
public:
    using Error::Error;
};

} // namespace factpipe
