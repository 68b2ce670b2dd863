#pragma once

#include <stdexcept>
#include <string>

namespace dcap {

// Base class for every error the toolkit raises on purpose. CLI maps these
// to exit code 2 (data/validation error) vs 1 (usage error).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct JackknifeExceeded : Error {
    using Error::Error;
};
struct InvalidMix : Error {
    using Error::Error;
};
struct FormatVersionMismatch : Error {
    using Error::Error;
};
struct CorruptRecord : Error {
    CorruptRecord(const std::string& what, long line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    long line_number;
};
struct TooFewSequences : Error {
    using Error::Error;
};
struct MissingSensorFields : Error {
    using Error::Error;
};
struct DegenerateBaseline : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct NonScalarLoss : Error {
    using Error::Error;
};
struct MissingGrad : Error {
    using Error::Error;
};
struct NonFiniteActivation : Error {
    using Error::Error;
};
struct EmptySplit : Error {
    using Error::Error;
};
struct CheckpointMismatch : Error {
    using Error::Error;
};
struct MissingMethod : Error {
    using Error::Error;
};
struct EmptyGroup : Error {
    using Error::Error;
};

}  // namespace dcap
