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
#include <optional>
#include <string>
#include <vector>

#include "adpsgd/metrics.hpp"
#include "adpsgd/problems.hpp"
#include "adpsgd/topology.hpp"
#include "adpsgd/types.hpp"

namespace adpsgd {

enum class Algorithm { kAdpsgd, kDpsgd, kAllreduce, kApsgd, kSgd };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

enum class StalenessMode {
  kZero,     ///< always read the current models
  kFixed,    ///< tau_k = min(tau, k)
  kUniform,  ///< tau_k ~ U{0, ..., min(T, k)}
};

/// Serves stale model snapshots X_{k - tau_k} with tau_k <= T.
///
/// Keeps a ring buffer of the last T+1 model matrices. In zero mode nothing
/// is copied and the caller's current models are read directly.
class StalenessModel {
 public:
  StalenessModel() = default;
  StalenessModel(StalenessMode mode, int cap);

  StalenessMode mode() const { return mode_; }
  int cap() const { return cap_; }

  /// Staleness for iteration k.
  int draw(std::int64_t k, Rng& rng) const;
  /// Snapshot X_{k - tau}; `current` is X_k.
  const ModelMatrix& snapshot(int tau, const ModelMatrix& current) const;
  /// Record X_{k+1} after a step.
  void push(const ModelMatrix& models);
  void reset(const ModelMatrix& initial);

 private:
  StalenessMode mode_ = StalenessMode::kZero;
  int cap_ = 0;
  std::vector<ModelMatrix> ring_;
  std::size_t head_ = 0;    // slot holding the newest snapshot
  std::size_t filled_ = 0;  // number of valid snapshots
};

/// Everything a step needs besides the mutable state.
struct StepContext {
  const Problem* problem = nullptr;
  const DataPartition* partition = nullptr;
  const TopologyGraph* graph = nullptr;
  SelectionPolicy policy;
  double gamma = 0;
  int batch = 1;
};

/// Random streams used by logical runs.
struct RngStreams {
  Rng selection;  // worker and neighbor choice
  Rng data;       // minibatch sampling
  Rng staleness;  // tau draws

  explicit RngStreams(std::uint64_t seed = 0);
};

struct StepTrace {
  int worker = -1;
  int neighbor = -1;
  int tau = 0;
  Vector gradient;
};

struct AlgoState {
  std::int64_t k = 0;
  ModelMatrix models;
  StalenessModel staleness;
  RngStreams rng;
  std::vector<std::int64_t> updates;  // per worker
  int max_tau = 0;
  StepTrace last;

  AlgoState(ModelMatrix initial, StalenessModel staleness, std::uint64_t seed);
};

/// Doubly stochastic D-PSGD mixing matrix I - L / (deg_max + 1).
Matrix dpsgd_mixing_matrix(const TopologyGraph& graph);

/// One AD-PSGD iteration: pick (i_k, neighbor), read the stale model, average, apply the gradient at i_k.
void adpsgd_logical_step(AlgoState& state, const StepContext& ctx, const PairSampler& sampler);
/// One synchronous D-PSGD round; k advances by n.
void dpsgd_step(AlgoState& state, const StepContext& ctx, const Matrix& mixing);
/// One AllReduce round over identical columns; k advances by n.
void allreduce_step(AlgoState& state, const StepContext& ctx);
/// Centralized stale-gradient update; k advances by 1.
void apsgd_step(AlgoState& state, const StepContext& ctx, const PairSampler& sampler);
/// Serial SGD on worker 0's data; k advances by 1.
void sgd_step(AlgoState& state, const StepContext& ctx);

/// Fully resolved logical run.
struct LogicalRun {
  Algorithm algorithm = Algorithm::kAdpsgd;
  const Problem* problem = nullptr;
  const DataPartition* partition = nullptr;
  const TopologyGraph* graph = nullptr;
  SelectionPolicy policy;
  double gamma = 0;
  int batch = 1;
  StalenessMode staleness_mode = StalenessMode::kZero;
  int staleness = 0;  // tau for fixed mode, T for uniform mode
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  std::int64_t record_every = 1;
  Vector initial_model;
  /// Optional distinct starting model per worker (columns); overrides initial_model.
  std::optional<ModelMatrix> initial_models;
  /// Accumulate (1/K) sum ||grad f(avg)||^2 over every iteration.
  bool track_running_average = false;
};

/// Runs `iterations` updates of the chosen algorithm and records metrics at the column average.
MetricsSeries run_logical(const LogicalRun& run);

/// Throws DivergenceError if any entry is NaN or Inf.
void check_finite(const ModelMatrix& models, std::int64_t k);

}  // namespace adpsgd
