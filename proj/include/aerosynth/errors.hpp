#pragma once

#include <stdexcept>
#include <string>

namespace aerosynth {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A position fell outside the allowed world bounds.
class PositionError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (ranges, weights, settings).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A textual input (spawn spec, CSV row, message) could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Data produced by two cooperating stages disagrees.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Metadata alignment cannot cover the target distribution.
class AlignmentError : public Error {
public:
    AlignmentError(const std::string& what, double uncovered_mass)
        : Error(what), uncovered_mass_(uncovered_mass) {}

    double uncovered_mass() const noexcept { return uncovered_mass_; }

private:
    double uncovered_mass_;
};

/// Caller supplied a value outside an operation's domain.
class InputError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace aerosynth
