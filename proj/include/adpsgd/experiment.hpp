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

// Turns a RunConfig into concrete objects, runs every seed, and writes
// per-seed CSV / JSONL artifacts plus an aggregated summary.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "adpsgd/config.hpp"
#include "adpsgd/metrics.hpp"
#include "adpsgd/problems.hpp"
#include "adpsgd/simulator.hpp"
#include "adpsgd/theory.hpp"
#include "adpsgd/topology.hpp"

namespace adpsgd {

/// Everything a run needs, built from a config. Step size already resolved.
struct ResolvedRun {
  ResolvedRun(RunConfig c, TopologyGraph g, Problem p)
      : config(std::move(c)), graph(std::move(g)), problem(std::move(p)) {}

  RunConfig config;
  TopologyGraph graph;
  SelectionPolicy policy;
  Problem problem;
  DataPartition partition;
  Vector initial_model;
  std::optional<ModelMatrix> initial_models;  // per-worker gaussian init
  double gamma = 0;
  double lipschitz = 0;
  double sigma_sq = 0;
  double varsigma_sq = 0;
  std::int64_t corollary_k = 0;
};

TopologyGraph build_topology(const TopologySpec& spec);
Problem build_problem(const ProblemSpec& spec);
ResolvedRun resolve_run(const RunConfig& config);

/// Theory report for the run's (n, M, L, T, rho, sigma^2, varsigma^2, gamma, K).
theory::TheoryReport theory_check(const ResolvedRun& run);

struct SeedResult {
  std::uint64_t seed = 0;
  int workers = 0;  // CSV worker columns
  MetricsSeries metrics;
  std::string csv;
  std::string trace_jsonl;  // empty unless simulated with tracing
  int max_staleness = 0;
};

struct ExperimentResult {
  RunConfig config;
  double gamma = 0;
  std::vector<SeedResult> seeds;
  nlohmann::ordered_json summary;
};

/// Runs every seed of the config. Divergence and deadlock errors are rethrown with the run name and seed.
ExperimentResult run_experiment(const RunConfig& config);
SeedResult run_seed(const ResolvedRun& run, std::uint64_t seed);
/// Logical-mode run description for one seed; the ResolvedRun must outlive it.
LogicalRun logical_run(const ResolvedRun& run, std::uint64_t seed);

/// Writes metrics_seed<s>.csv, trace_seed<s>.jsonl, config.yaml and summary.json into `dir`.
void write_experiment(const ExperimentResult& result, const std::string& dir);

/// Atomic file write: temporary file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

/// Gradient updates in one epoch-equivalent: n * dataset_size / M.
double epoch_updates(int workers, std::size_t dataset_size, int batch);

/// First simulated time at which the recorded loss reaches the target.
std::optional<double> time_to_target(const std::vector<MetricsRecord>& records, double target);
/// Simulated seconds per epoch-equivalent from the final record; empty when no time elapsed.
std::optional<double> seconds_per_epoch(const std::vector<MetricsRecord>& records, double epoch_updates);

/// Summary built only from the per-seed CSV records (mean and std at matched k).
nlohmann::ordered_json summarize(const RunConfig& config, double gamma,
                                 const std::vector<std::pair<std::uint64_t, std::vector<MetricsRecord>>>& seeds,
                                 double epoch_updates);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

SweepAxis parse_vary(const std::string& spec);

struct SweepPoint {
  std::vector<std::string> values;
  ExperimentResult result;
};

/// Cartesian product of the axes over a base config document.
std::vector<SweepPoint> run_sweep(const YAML::Node& base, const std::vector<SweepAxis>& axes);
/// CSV table with one row per point; speedup is time-to-target of the first point over this point's.
std::string sweep_table(const std::vector<SweepAxis>& axes, const std::vector<SweepPoint>& points);
/// Runs the sweep and writes each point under dir/<point>/ plus dir/sweep.csv.
std::string run_sweep_to(const YAML::Node& base, const std::vector<SweepAxis>& axes, const std::string& dir);

struct PresetRun {
  std::string label;  // file stem
  std::string group;  // ratios are taken against the first run in the same group
  RunConfig config;
};

struct Preset {
  std::string name;
  std::string description;
  std::vector<PresetRun> runs;
};

std::vector<std::string> preset_names();
/// Throws ValidationError listing the known presets for an unknown name.
Preset make_preset(const std::string& name);
/// Writes <label>.yaml for every run.
void emit_preset(const Preset& preset, const std::string& dir);

struct PresetRow {
  std::string group;
  std::string label;
  ExperimentResult result;
};

std::vector<PresetRow> run_preset(const Preset& preset);
/// Comparison table: epoch time and time-to-target, each relative to the first row in its group.
std::string preset_table(const std::vector<PresetRow>& rows);
void write_preset_results(const std::vector<PresetRow>& rows, const std::string& dir);

}  // namespace adpsgd
