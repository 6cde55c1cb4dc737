#pragma once

#include <stdexcept>
#include <string>

namespace titlegen {

// Shape/dimension contract violations (mismatched matmul operands etc.).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range lookups (embedding ids, vocab indices).
class IndexError : public std::runtime_error {
 public:
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (unknown architecture, odd model dims, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse that is not a shape problem (non-scalar backward seed,
// mismatched optimizer state lengths, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input that has no meaningful answer (empty corpus,
// fully masked attention row, all-ignored loss, ...).
class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (diverged training loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// File system / stream failures outside the checkpoint format itself.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointCorruptError : public CheckpointError {
 public:
  explicit CheckpointCorruptError(const std::string& msg)
      : CheckpointError(msg) {}
};

class CheckpointVersionError : public CheckpointError {
 public:
  explicit CheckpointVersionError(const std::string& msg)
      : CheckpointError(msg) {}
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  explicit CheckpointTruncatedError(const std::string& msg)
      : CheckpointError(msg) {}
};

}  // namespace titlegen
