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
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adpsgd/problems.hpp"
#include "adpsgd/types.hpp"

namespace adpsgd {

/// Column average X 1_n / n.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> average_model(const Eigen::MatrixBase<Derived>& models) {
  return models.rowwise().mean();
}

/// M_k = sum_i p_i || X 1_n / n - x^i ||^2.
template <typename Derived, typename WeightDerived>
typename Derived::Scalar consensus_distance(const Eigen::MatrixBase<Derived>& models,
                                            const Eigen::MatrixBase<WeightDerived>& p) {
  using Scalar = typename Derived::Scalar;
  if (p.size() != models.cols()) throw ValidationError("consensus_distance: weight count must match worker count");
  if (models.cols() <= 1) return Scalar(0);
  const auto mean = average_model(models);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < models.cols(); ++i) acc += p[i] * (models.col(i) - mean).squaredNorm();
  return acc;
}

/// Largest per-coordinate spread across columns.
template <typename Derived>
typename Derived::Scalar column_spread(const Eigen::MatrixBase<Derived>& models) {
  if (models.cols() <= 1) return typename Derived::Scalar(0);
  return (models.rowwise().maxCoeff() - models.rowwise().minCoeff()).maxCoeff();
}

struct MetricsRecord {
  std::int64_t k = 0;
  double simulated_time = 0;
  double loss_avg = 0;
  double grad_norm_sq_avg = 0;
  double consensus_mk = 0;
  int max_staleness = 0;
  std::vector<std::int64_t> worker_updates;
};

struct MetricsSeries {
  std::vector<MetricsRecord> records;
  /// (1/K) sum_{k<K} ||grad f(avg model_k)||^2 at the last step, when tracked.
  double running_grad_norm_sq = 0;
  std::int64_t running_count = 0;
  Vector final_average_model;
  double final_loss = 0;
  double final_grad_norm_sq = 0;
};

/// Builds a record by evaluating f and ||grad f||^2 at the column average.
MetricsRecord make_record(const Problem& problem, const ModelMatrix& models, const Vector& p, std::int64_t k,
                          double simulated_time, int max_staleness, const std::vector<std::int64_t>& updates);

/// Fixed header: k,simulated_time,loss_avg_model,grad_norm_sq_avg_model,consensus_Mk,max_staleness,worker_updates_0,...
std::string metrics_csv_header(int workers);
void write_metrics_csv(std::ostream& out, const MetricsSeries& series, int workers);
std::string metrics_to_csv(const MetricsSeries& series, int workers);

/// Shortest round-trip decimal form, stable across runs.
std::string format_double(double value);

}  // namespace adpsgd
