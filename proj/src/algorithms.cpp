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

#include "adpsgd/algorithms.hpp"

#include <algorithm>

namespace adpsgd {

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kAdpsgd:
      return "adpsgd";
    case Algorithm::kDpsgd:
      return "dpsgd";
    case Algorithm::kAllreduce:
      return "allreduce";
    case Algorithm::kApsgd:
      return "apsgd";
    case Algorithm::kSgd:
      return "sgd";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
  for (Algorithm a : {Algorithm::kAdpsgd, Algorithm::kDpsgd, Algorithm::kAllreduce, Algorithm::kApsgd, Algorithm::kSgd})
    if (to_string(a) == name) return a;
  throw ValidationError("unknown algorithm '" + name + "' (expected adpsgd, dpsgd, allreduce, apsgd or sgd)");
}

// ---------------------------------------------------------------------------

StalenessModel::StalenessModel(StalenessMode mode, int cap) : mode_(mode), cap_(cap) {
  if (cap < 0) throw ValidationError("staleness cap must be nonnegative");
  if (mode == StalenessMode::kZero) cap_ = 0;
}

int StalenessModel::draw(std::int64_t k, Rng& rng) const {
  const int reachable = static_cast<int>(std::min<std::int64_t>(cap_, k));
  switch (mode_) {
    case StalenessMode::kZero:
      return 0;
    case StalenessMode::kFixed:
      return reachable;
    case StalenessMode::kUniform:
      return reachable == 0 ? 0 : std::uniform_int_distribution<int>(0, reachable)(rng);
  }
  return 0;
}

const ModelMatrix& StalenessModel::snapshot(int tau, const ModelMatrix& current) const {
  if (tau == 0) return current;
  if (tau > cap_) {
    throw InvariantError("staleness " + std::to_string(tau) + " exceeds cap " + std::to_string(cap_));
  }
  if (filled_ == 0) throw InvariantError("staleness history is empty");
  const std::size_t back = std::min<std::size_t>(static_cast<std::size_t>(tau), filled_ - 1);
  return ring_[(head_ + ring_.size() - back) % ring_.size()];
}

void StalenessModel::push(const ModelMatrix& models) {
  if (cap_ == 0) return;
  head_ = (head_ + 1) % ring_.size();
  ring_[head_] = models;
  filled_ = std::min(filled_ + 1, ring_.size());
}

void StalenessModel::reset(const ModelMatrix& initial) {
  if (cap_ == 0) return;
  ring_.assign(static_cast<std::size_t>(cap_) + 1, initial);
  head_ = 0;
  filled_ = 1;
}

RngStreams::RngStreams(std::uint64_t seed)
    : selection(make_stream(seed, 1)), data(make_stream(seed, 2)), staleness(make_stream(seed, 3)) {}

AlgoState::AlgoState(ModelMatrix initial, StalenessModel stale, std::uint64_t seed)
    : models(std::move(initial)), staleness(std::move(stale)), rng(seed), updates(models.cols(), 0) {
  staleness.reset(models);
}

void check_finite(const ModelMatrix& models, std::int64_t k) {
  if (!models.allFinite()) {
    throw DivergenceError(k, "divergence: non-finite model entries at iteration " + std::to_string(k));
  }
}

namespace {

void check_column(const ModelMatrix& models, int col, std::int64_t k) {
  if (!models.col(col).allFinite()) {
    throw DivergenceError(k, "divergence: non-finite entries in worker " + std::to_string(col) + " at iteration " +
                                 std::to_string(k));
  }
}

void require_context(const StepContext& ctx) {
  if (!ctx.problem || !ctx.partition) throw ValidationError("step context: problem and partition are required");
  if (!(ctx.gamma > 0)) throw ValidationError("step context: gamma must be positive");
  if (ctx.batch < 1) throw ValidationError("step context: batch size must be >= 1");
}

}  // namespace

Matrix dpsgd_mixing_matrix(const TopologyGraph& graph) {
  const int n = graph.size();
  return Matrix::Identity(n, n) - graph.laplacian() / (graph.max_degree() + 1.0);
}

void adpsgd_logical_step(AlgoState& state, const StepContext& ctx, const PairSampler& sampler) {
  require_context(ctx);
  const auto [i, j] = sampler.sample(state.rng.selection);
  const int tau = state.staleness.draw(state.k, state.rng.staleness);

  // Read x_hat before averaging touches the current models.
  const Vector x_hat = state.staleness.snapshot(tau, state.models).col(i);
  sample_gradient_into(*ctx.problem, *ctx.partition, i, x_hat, ctx.batch, state.rng.data, state.last.gradient);

  apply_pair_average(state.models, i, j);
  state.models.col(i) -= ctx.gamma * state.last.gradient;

  state.last.worker = i;
  state.last.neighbor = j;
  state.last.tau = tau;
  state.max_tau = std::max(state.max_tau, tau);
  ++state.updates[i];
  ++state.k;
  check_column(state.models, i, state.k);
  if (j != i) check_column(state.models, j, state.k);
  state.staleness.push(state.models);
}

void dpsgd_step(AlgoState& state, const StepContext& ctx, const Matrix& mixing) {
  require_context(ctx);
  const auto n = state.models.cols();
  Matrix grads(state.models.rows(), n);
  Vector g;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = state.models.col(i);
    sample_gradient_into(*ctx.problem, *ctx.partition, static_cast<int>(i), x, ctx.batch, state.rng.data, g);
    grads.col(i) = g;
  }
  state.models = state.models * mixing - ctx.gamma * grads;
  for (auto& u : state.updates) ++u;
  state.k += n;
  check_finite(state.models, state.k);
  state.staleness.push(state.models);
}

void allreduce_step(AlgoState& state, const StepContext& ctx) {
  require_context(ctx);
  if (column_spread(state.models) > 1e-9) {
    throw InvariantError("allreduce: worker models drifted apart (spread " +
                         std::to_string(column_spread(state.models)) + ")");
  }
  const auto n = state.models.cols();
  const Vector x = state.models.col(0);
  Vector sum = Vector::Zero(x.size());
  Vector g;
  for (Eigen::Index i = 0; i < n; ++i) {
    sample_gradient_into(*ctx.problem, *ctx.partition, static_cast<int>(i), x, ctx.batch, state.rng.data, g);
    sum += g;
  }
  const Vector next = x - ctx.gamma * (sum / static_cast<double>(n));
  state.models = next.replicate(1, n);
  for (auto& u : state.updates) ++u;
  state.k += n;
  check_finite(state.models, state.k);
  state.staleness.push(state.models);
}

void apsgd_step(AlgoState& state, const StepContext& ctx, const PairSampler& sampler) {
  require_context(ctx);
  const int i = sampler.sample_worker(state.rng.selection);
  const int tau = state.staleness.draw(state.k, state.rng.staleness);
  const Vector x_hat = state.staleness.snapshot(tau, state.models).col(0);
  sample_gradient_into(*ctx.problem, *ctx.partition, i, x_hat, ctx.batch, state.rng.data, state.last.gradient);

  Vector central = state.models.col(0);
  central -= ctx.gamma * state.last.gradient;
  state.models.colwise() = central;

  state.last.worker = i;
  state.last.neighbor = -1;
  state.last.tau = tau;
  state.max_tau = std::max(state.max_tau, tau);
  ++state.updates[i];
  ++state.k;
  check_column(state.models, 0, state.k);
  state.staleness.push(state.models);
}

void sgd_step(AlgoState& state, const StepContext& ctx) {
  require_context(ctx);
  const Vector x = state.models.col(0);
  sample_gradient_into(*ctx.problem, *ctx.partition, 0, x, ctx.batch, state.rng.data, state.last.gradient);
  state.models.col(0) -= ctx.gamma * state.last.gradient;
  state.last.worker = 0;
  state.last.tau = 0;
  ++state.updates[0];
  ++state.k;
  check_column(state.models, 0, state.k);
}

MetricsSeries run_logical(const LogicalRun& run) {
  if (!run.problem || !run.partition || !run.graph) throw ValidationError("run_logical: incomplete run description");
  if (run.iterations < 0) throw ValidationError("run_logical: iterations must be nonnegative");
  if (run.record_every < 1) throw ValidationError("run_logical: record_every must be >= 1");
  if (run.initial_model.size() != run.problem->dimension())
    throw ValidationError("run_logical: initial model has the wrong dimension");

  const bool serial = run.algorithm == Algorithm::kSgd;
  const int n = serial ? 1 : run.graph->size();
  if (!serial && static_cast<int>(run.partition->shards.size()) != n)
    throw ValidationError("run_logical: partition shard count must equal worker count");

  StepContext ctx{run.problem, run.partition, run.graph, serial ? SelectionPolicy::uniform(1) : run.policy,
                  run.gamma, run.batch};
  require_context(ctx);
  const bool uses_staleness = run.algorithm == Algorithm::kAdpsgd || run.algorithm == Algorithm::kApsgd;
  StalenessModel staleness = uses_staleness ? StalenessModel(run.staleness_mode, run.staleness) : StalenessModel();

  ModelMatrix initial;
  if (run.initial_models) {
    if (run.algorithm != Algorithm::kAdpsgd && run.algorithm != Algorithm::kDpsgd)
      throw ValidationError("run_logical: per-worker initial models need adpsgd or dpsgd");
    if (run.initial_models->cols() != n || run.initial_models->rows() != run.problem->dimension())
      throw ValidationError("run_logical: initial model matrix has the wrong shape");
    initial = *run.initial_models;
  } else {
    if (run.initial_model.size() != run.problem->dimension())
      throw ValidationError("run_logical: initial model has the wrong dimension");
    initial = run.initial_model.replicate(1, n);
  }
  AlgoState state(std::move(initial), std::move(staleness), run.seed);

  std::optional<PairSampler> sampler;
  Matrix mixing;
  if (run.algorithm == Algorithm::kAdpsgd || run.algorithm == Algorithm::kApsgd) {
    sampler.emplace(*run.graph, ctx.policy);
  }
  if (run.algorithm == Algorithm::kDpsgd) {
    if (!run.graph->connected()) throw ConnectivityError("dpsgd: topology must be connected");
    mixing = dpsgd_mixing_matrix(*run.graph);
  }

  MetricsSeries series;
  const Vector& p = ctx.policy.worker_weights;
  auto record = [&] {
    series.records.push_back(make_record(*run.problem, state.models, p, state.k, 0.0, state.max_tau, state.updates));
  };
  record();

  double grad_sum = 0;
  std::int64_t grad_count = 0;
  std::int64_t next_record = run.record_every;
  while (state.k < run.iterations) {
    if (run.track_running_average) {
      const Vector avg = average_model(state.models);
      const double gn = run.problem->full_gradient(avg).squaredNorm();
      // A synchronous round stands for n iterations at the same average model.
      const std::int64_t weight = (run.algorithm == Algorithm::kDpsgd || run.algorithm == Algorithm::kAllreduce) ? n : 1;
      grad_sum += gn * static_cast<double>(weight);
      grad_count += weight;
    }
    switch (run.algorithm) {
      case Algorithm::kAdpsgd:
        adpsgd_logical_step(state, ctx, *sampler);
        break;
      case Algorithm::kDpsgd:
        dpsgd_step(state, ctx, mixing);
        break;
      case Algorithm::kAllreduce:
        allreduce_step(state, ctx);
        break;
      case Algorithm::kApsgd:
        apsgd_step(state, ctx, *sampler);
        break;
      case Algorithm::kSgd:
        sgd_step(state, ctx);
        break;
    }
    if (state.k >= next_record || state.k >= run.iterations) {
      record();
      while (next_record <= state.k) next_record += run.record_every;
    }
  }

  series.running_count = grad_count;
  series.running_grad_norm_sq = grad_count > 0 ? grad_sum / static_cast<double>(grad_count) : 0.0;
  series.final_average_model = average_model(state.models);
  series.final_loss = run.problem->loss(series.final_average_model);
  series.final_grad_norm_sq = run.problem->full_gradient(series.final_average_model).squaredNorm();
  return series;
}

}  // namespace adpsgd
