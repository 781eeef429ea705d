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

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adpsgd/types.hpp"

namespace adpsgd {

enum class ProblemKind { kQuadratic, kLogistic, kSmallMlp };

std::string to_string(ProblemKind kind);

/// Finite-sum objective f(x) = (1/S) sum_s F(x; s).
class Objective {
 public:
  virtual ~Objective() = default;

  virtual int dimension() const = 0;
  virtual std::size_t num_samples() const = 0;
  virtual double sample_loss(const Vector& x, std::size_t sample) const = 0;
  /// out += scale * grad F(x; sample)
  virtual void add_sample_gradient(const Vector& x, std::size_t sample, double scale, Vector& out) const = 0;
  virtual double lipschitz() const = 0;

  virtual double loss(const Vector& x) const;
  virtual Vector gradient(const Vector& x) const;
};

/// Immutable handle to an objective plus what is known about its optimum.
class Problem {
 public:
  Problem(ProblemKind kind, std::shared_ptr<const Objective> objective,
          std::optional<double> optimum_value = std::nullopt, std::optional<Vector> optimum = std::nullopt);

  ProblemKind kind() const { return kind_; }
  int dimension() const { return objective_->dimension(); }
  std::size_t num_samples() const { return objective_->num_samples(); }
  const Objective& objective() const { return *objective_; }
  double lipschitz() const { return objective_->lipschitz(); }

  double loss(const Vector& x) const { return objective_->loss(x); }
  Vector full_gradient(const Vector& x) const { return objective_->gradient(x); }
  /// Mean gradient over the given sample indices.
  Vector shard_gradient(const Vector& x, std::span<const std::size_t> samples) const;
  Vector sample_gradient_of(const Vector& x, std::size_t sample) const;

  const std::optional<double>& optimum_value() const { return f_star_; }
  const std::optional<Vector>& optimum() const { return x_star_; }

 private:
  ProblemKind kind_;
  std::shared_ptr<const Objective> objective_;
  std::optional<double> f_star_;
  std::optional<Vector> x_star_;
};

struct QuadraticOptions {
  int dimension = 10;
  double condition = 10.0;  // of the average Hessian, eigenvalues spread geometrically in [1/condition, 1]
  std::size_t num_samples = 100;
  double noise = 0.0;         // std-dev of per-sample target noise
  double matrix_noise = 0.0;  // std-dev of per-sample perturbations of A
  std::uint64_t seed = 0;
};

/// f(x) = (1/S) sum_s 1/2 ||A_s x - b_s||^2 with a random rotation and a planted solution.
Problem make_quadratic(const QuadraticOptions& options);
/// Same objective from explicit per-sample (A_s, b_s).
Problem make_quadratic(const std::vector<Matrix>& a, const std::vector<Vector>& b);

struct LabeledDataset {
  Matrix features;  // one sample per row
  Vector labels;    // +1 / -1
};

/// l2-regularized logistic loss log(1 + exp(-y w^T x)) + l2/2 ||w||^2.
Problem make_logistic(const LabeledDataset& data, double l2);
LabeledDataset make_synthetic_classification(int dimension, std::size_t num_samples, double label_noise,
                                             std::uint64_t seed);
/// CSV with one sample per row; the last column is the label.
LabeledDataset load_labeled_csv(const std::string& path);

struct MlpOptions {
  int input_dim = 3;
  int hidden = 8;
  std::size_t num_samples = 200;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// One-hidden-layer tanh regression network with squared loss. At most 100 parameters.
Problem make_small_mlp(const MlpOptions& options);
int mlp_parameter_count(int input_dim, int hidden);

enum class PartitionStrategy {
  kShared,  ///< every worker sees the whole dataset
  kSplit,   ///< disjoint shards sized proportionally to p
};

struct DataPartition {
  std::vector<std::vector<std::size_t>> shards;
  PartitionStrategy strategy = PartitionStrategy::kShared;
  Vector weights;
};

/// Largest-remainder shard sizes for S samples under weights p.
std::vector<std::size_t> largest_remainder_sizes(std::size_t total, const Vector& p);

DataPartition partition_data(const Problem& problem, const Vector& p, PartitionStrategy strategy,
                             std::uint64_t shuffle_seed = 0);

/// Sum (not mean) of M per-sample gradients drawn with replacement from the worker's shard.
Vector sample_gradient(const Problem& problem, const DataPartition& partition, int worker, const Vector& model,
                       int batch, Rng& rng);
/// Allocation-free variant; `out` is overwritten.
void sample_gradient_into(const Problem& problem, const DataPartition& partition, int worker, const Vector& model,
                          int batch, Rng& rng, Vector& out);

struct VarianceEstimate {
  double sigma_sq = 0;     // within-worker, per sample
  double varsigma_sq = 0;  // across workers
  std::size_t sample_points = 0;
};

/// Empirical maxima over probe models; estimates, not proven bounds.
VarianceEstimate estimate_variances(const Problem& problem, const DataPartition& partition,
                                    const std::vector<Vector>& probe_models, int draws, Rng& rng);

/// Same quantities at one model, by enumerating every sample of every shard instead of drawing.
VarianceEstimate exact_variances(const Problem& problem, const DataPartition& partition, const Vector& model);

double estimate_lipschitz(const Problem& problem);

}  // namespace adpsgd
