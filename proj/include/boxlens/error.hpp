// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace boxlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, violated preconditions, malformed files.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The detector peer sent something that does not follow the wire protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The detector backend failed (process exit, broken pipe, timeout).
/// Retryable, and distinct from an empty detection list.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A detector failure raised while processing mask `mask_index`.
class MaskQueryError : public Error {
 public:
  MaskQueryError(std::size_t mask_index, const std::string& what)
      : Error("mask " + std::to_string(mask_index) + ": " + what),
        mask_index_(mask_index) {}
  std::size_t mask_index() const noexcept { return mask_index_; }

 private:
  std::size_t mask_index_;
};

/// A detector failure during a deletion sweep; keeps the scores gathered so
/// far for both curve variants.
class DeletionError : public Error {
 public:
  DeletionError(std::size_t step, std::vector<double> partial, std::vector<double> partial_d,
                const std::string& what)
      : Error("deletion step " + std::to_string(step) + ": " + what),
        step_(step),
        partial_(std::move(partial)),
        partial_d_(std::move(partial_d)) {}
  std::size_t step() const noexcept { return step_; }
  const std::vector<double>& partial_scores() const noexcept { return partial_; }
  const std::vector<double>& partial_d_scores() const noexcept { return partial_d_; }

 private:
  std::size_t step_;
  std::vector<double> partial_;
  std::vector<double> partial_d_;
};

}  // namespace boxlens
