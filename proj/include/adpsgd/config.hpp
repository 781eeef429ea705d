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

// Run configuration: a YAML document validated against a fixed schema.
// Every validation message carries the line and column of the offending node.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "adpsgd/algorithms.hpp"
#include "adpsgd/simulator.hpp"
#include "adpsgd/types.hpp"

namespace adpsgd {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class RunMode { kLogical, kSimulate };

struct TopologySpec {
  std::string kind = "ring";  // ring | skip_ring | complete | file
  int n = 1;
  SkipRingMode skip_ring_mode = SkipRingMode::kAllOffsets;
  std::string path;                    // kind == file
  std::vector<double> policy_weights;  // empty: uniform
};

struct ProblemSpec {
  std::string kind = "quadratic";  // quadratic | logistic | mlp
  int dimension = 10;
  double condition = 10;
  std::size_t samples = 100;
  double noise = 0;
  double matrix_noise = 0;
  double l2 = 1e-3;
  double label_noise = 0.05;
  std::string data_path;  // logistic: optional CSV instead of synthetic data
  int hidden = 8;
  std::uint64_t seed = 0;
};

struct PartitionSpec {
  PartitionStrategy strategy = PartitionStrategy::kShared;
  std::uint64_t shuffle_seed = 0;
};

struct InitSpec {
  std::string kind = "zeros";  // zeros | constant | gaussian
  double value = 0;            // constant value or gaussian std-dev
  std::uint64_t seed = 0;
  bool per_worker = false;  // gaussian only: independent draw per worker (logical mode)
};

struct GammaSpec {
  std::optional<double> value;  // empty: corollary step size
  std::optional<std::int64_t> K;
  std::optional<double> sigma_sq;
  std::optional<double> varsigma_sq;
  std::optional<double> lipschitz;
  double scale = 1;  // multiplies the resolved corollary step
};

struct SpeedSpec {
  std::vector<double> compute_time{1.0};  // one entry broadcasts to every worker
  double link_time = 0.01;
  std::vector<std::pair<Edge, double>> link_overrides;
  std::vector<Slowdown> slowdowns;
  double allreduce_alpha = 0.01;
  double allreduce_beta = 0;
};

struct RunConfig {
  std::string name = "run";
  Algorithm algorithm = Algorithm::kAdpsgd;
  RunMode mode = RunMode::kLogical;
  TopologySpec topology;
  ProblemSpec problem;
  PartitionSpec partition;
  GammaSpec gamma;
  int batch = 1;
  StalenessMode staleness_mode = StalenessMode::kZero;
  int staleness = 0;
  std::int64_t iterations = 1000;
  double horizon = std::numeric_limits<double>::infinity();
  std::vector<std::uint64_t> seeds{0};
  std::int64_t record_every = 100;
  InitSpec init;
  SpeedSpec speed;
  ExchangeMode exchange = ExchangeMode::kBipartite;
  bool compensation = true;
  bool trace = true;
  std::optional<double> target_loss;
  /// Target expressed as f* + gap; needs a problem with a known optimum. Resolved into target_loss.
  std::optional<double> target_gap;
  std::string output_dir;  // empty: environment default, then "out"
};

/// Name of the environment variable that supplies a default output directory.
inline constexpr const char* kOutputDirEnv = "ADPSGD_OUTPUT_DIR";

YAML::Node load_config_node(const std::string& path);
RunConfig parse_config(const YAML::Node& root);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
/// Canonical YAML for a config; parse_config(emit_config(c)) reproduces c.
std::string emit_config(const RunConfig& config);

/// Sets a dotted key (e.g. "topology.n") to a scalar written in YAML syntax.
void apply_override(YAML::Node& root, const std::string& dotted_key, const std::string& value);

/// Output directory after applying the environment default.
std::string resolve_output_dir(const RunConfig& config);

}  // namespace adpsgd
