/* Copyright 2026 The ADPSGD Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace adpsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Column-stacked worker models: one column per worker, one row per parameter.
using ModelMatrix = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad sizes, indices, probability vectors, configs. CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A graph is not connected where connectivity is required.
class ConnectivityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite model entries. CLI exit code 3.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, const std::string& what)
      : Error(what), iteration_(iteration) {}
  std::int64_t iteration() const { return iteration_; }

 private:
  std::int64_t iteration_;
};

/// The event simulator found blocked workers and no pending events. CLI exit code 3.
class DeadlockError : public Error {
 public:
  using Error::Error;
};

/// Internal invariant breach (e.g. staleness history shorter than the cap).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Independent generator for a named stream derived from one user seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5eedu};
  return Rng(seq);
}

}  // namespace adpsgd
