#pragma once

#include <stdexcept>
#include <string>

namespace maldef {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or missing corpus content (empty class directory, unreadable file).
class CorpusError : public Error {
public:
    using Error::Error;
};

// Invalid manifest or configuration values.
class ManifestError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

// A pipeline stage failed; partial results were written before this was thrown.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what)
        : Error("stage " + stage + " failed: " + what), stage_(stage) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace maldef
