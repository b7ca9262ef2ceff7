#pragma once

#include <stdexcept>
#include <string>

namespace trustnbr {

/// Input data violates a contract (bad CSV cell, non-binary label, empty split part, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A persisted artifact could not be decoded (version mismatch, truncation, bad field).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An upstream artifact changed after a downstream step recorded its hash.
class StaleArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The production set produced no alerts at the configured threshold.
class NoAlertsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace trustnbr
