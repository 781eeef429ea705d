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

// Discrete-event model of wall-clock AD-PSGD: every worker runs a compute
// thread and a communication thread sharing a one-slot gradient buffer.
// All concurrency is expressed as interleaved events on a single queue.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adpsgd/algorithms.hpp"
#include "adpsgd/metrics.hpp"
#include "adpsgd/problems.hpp"
#include "adpsgd/topology.hpp"

namespace adpsgd {

struct Slowdown {
  enum class Target { kWorker, kEdge };
  Target target = Target::kWorker;
  int worker = -1;  // kWorker
  Edge edge;        // kEdge
  double factor = 1;
  double start = 0;
  double end = std::numeric_limits<double>::infinity();
};

struct SpeedModel {
  std::vector<double> compute_time;  // seconds per gradient batch, per worker
  double link_time = 0;              // seconds per model exchange, default for every edge
  std::map<Edge, double> link_overrides;
  std::vector<Slowdown> slowdowns;

  static SpeedModel homogeneous(int n, double compute_time, double link_time);

  void validate(int n) const;
  /// Product of worker slowdown factors active at time t.
  double compute_factor(int worker, double t) const;
  double link_factor(const Edge& edge, double t) const;
  double compute_duration(int worker, double t) const { return compute_time.at(worker) * compute_factor(worker, t); }
  double link_duration(const Edge& edge, double t) const;
};

enum class EventKind { kGradientReady, kAveragingRequest, kAveragingComplete, kBufferFlush };

std::string to_string(EventKind kind);

struct SimEvent {
  double time = 0;
  EventKind kind = EventKind::kGradientReady;
  int worker = -1;
  int peer = -1;            // other endpoint for averaging events
  std::uint64_t sequence = 0;
  std::int64_t k = 0;       // global update counter after the event
  std::int64_t k_read = -1; // counter value when the flushed gradient's model was read
};

struct EventTrace {
  std::vector<SimEvent> events;

  void write_jsonl(std::ostream& out) const;
  std::string to_jsonl() const;
};

enum class ExchangeMode {
  kBipartite,   ///< active workers initiate, passive workers serve FIFO; needs a bipartite partition
  kSerialized,  ///< every worker initiates; exchanges are serialized globally
};

struct SimulationSpec {
  const Problem* problem = nullptr;
  const DataPartition* partition = nullptr;
  const TopologyGraph* graph = nullptr;
  SelectionPolicy policy;  // weights for consensus M_k
  double gamma = 0;
  int batch = 1;
  SpeedModel speed;
  double horizon = std::numeric_limits<double>::infinity();
  std::int64_t max_updates = std::numeric_limits<std::int64_t>::max();
  std::uint64_t seed = 0;
  std::int64_t record_every = 1;
  bool compensation = true;  // compute thread applies the pending buffer to its pulled model
  ExchangeMode mode = ExchangeMode::kBipartite;
  bool record_trace = true;
  Vector initial_model;
  /// Stop early once the average model's loss is <= this value.
  std::optional<double> target_loss;
  /// Called after every event with the models as they stand at that event.
  std::function<void(const SimEvent&, const ModelMatrix&)> observer;
};

struct SimulationResult {
  MetricsSeries metrics;
  EventTrace trace;
  std::vector<std::int64_t> updates;
  std::int64_t k = 0;
  double end_time = 0;
  std::optional<double> time_to_target;
  int max_staleness = 0;
  ModelMatrix final_models;
};

/// Event-driven AD-PSGD with the wait-free two-thread protocol.
SimulationResult simulate(const SimulationSpec& spec);

enum class SyncAlgorithm { kAllreduce, kDpsgd };

/// Affine AllReduce cost: alpha * n + beta * model_size per round.
struct SyncCostModel {
  double allreduce_alpha = 0;
  double allreduce_beta = 0;
};

/// Round-based AllReduce / D-PSGD: each round waits for the slowest worker.
SimulationResult simulate_synchronous(const SimulationSpec& spec, SyncAlgorithm algorithm, const SyncCostModel& cost);

struct StalenessSummary {
  int max_tau = 0;
  double mean_tau = 0;
  std::map<int, std::int64_t> histogram;
  std::vector<int> max_tau_per_worker;
  std::optional<int> configured_cap;
  bool within_cap = true;
};

StalenessSummary staleness_profile(const EventTrace& trace, std::optional<int> cap = std::nullopt);

struct DeadlockVerdict {
  bool deadlock_free = false;
  std::optional<Partition> partition;
  std::vector<int> odd_cycle;  // closed walk order, first vertex not repeated
};

/// Deadlock-free iff the graph admits an active/passive bipartition; otherwise reports an odd cycle.
DeadlockVerdict detect_deadlock_freedom(const TopologyGraph& graph);

}  // namespace adpsgd
