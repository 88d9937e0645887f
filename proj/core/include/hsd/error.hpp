#pragma once

#include <stdexcept>
#include <string>

namespace hsd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (TSV rows, labels, vector files).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration, hyperparameters or model specification.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during optimisation (non-finite loss, empty data).
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Checkpoint or weight-blob problems: missing files, version or checksum mismatch.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Pretrained encoder weights are not available locally and no cache can serve the request.
class EncoderUnavailable : public Error {
public:
    using Error::Error;
};

} // namespace hsd
