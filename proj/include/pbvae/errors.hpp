#ifndef PBVAE_ERRORS_HPP
#define PBVAE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pbvae {

// Dimension/layout mismatches. The message names the offending layer where
// one exists.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated preconditions (stale caches, empty bound sets, out-of-range
// probabilities, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files (IDX headers, checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pbvae

#endif  // PBVAE_ERRORS_HPP
