#pragma once

#include <stdexcept>
#include <string>

namespace haps {

// Base class for all library errors. Subclasses map onto the CLI exit
// codes: ConfigError -> 2, CollapseError -> 3, IoError -> 4, Error -> 1.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration, contract violation at a public entry point,
// or malformed user input that validation rejects before any work runs.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Architecture spec failed the shape chain-check or declares an
// impossible layer arrangement.
class SpecError : public ConfigError {
public:
  explicit SpecError(const std::string& msg) : ConfigError(msg) {}
};

// Tensor shape mismatch between operands.
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Filesystem / file-format failures.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Corrupt or mis-typed input data file (bad magic, truncation, arity).
class IngestionError : public IoError {
public:
  explicit IngestionError(const std::string& msg) : IoError(msg) {}
};

// Model container could not be loaded.
class LoadError : public IoError {
public:
  explicit LoadError(const std::string& msg) : IoError(msg) {}
};

// Training loss became non-finite. Carries the schedule context of the
// iteration that collapsed.
class CollapseError : public Error {
public:
  explicit CollapseError(const std::string& msg) : Error(msg) {}
};

}  // namespace haps
