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

#include <gtest/gtest.h>

#include <cmath>

#include "adpsgd/algorithms.hpp"
#include "adpsgd/theory.hpp"

namespace adpsgd {
namespace {

// f(x) = x^2 / 2 as a one-sample quadratic, so every sampled gradient equals x.
Problem half_square() {
  Matrix a(1, 1);
  a << 1;
  return make_quadratic({a}, {Vector::Zero(1)});
}

struct Fixture {
  Problem problem;
  TopologyGraph graph;
  DataPartition partition;
  SelectionPolicy policy;

  Fixture(Problem p, TopologyGraph g)
      : problem(std::move(p)),
        graph(std::move(g)),
        partition(partition_data(problem, Vector::Constant(graph.size(), 1.0 / graph.size()),
                                 PartitionStrategy::kShared)),
        policy(SelectionPolicy::uniform(graph.size())) {}

  StepContext ctx(double gamma, int batch = 1) const {
    return StepContext{&problem, &partition, &graph, policy, gamma, batch};
  }
};

ModelMatrix row(std::initializer_list<double> values) {
  ModelMatrix m(1, values.size());
  int c = 0;
  for (double v : values) m(0, c++) = v;
  return m;
}

TEST(AdpsgdStep, SingleWorkerIsPlainSgd) {
  const Fixture f(half_square(), build_ring(1));
  AlgoState s(row({1.0}), StalenessModel(), 0);
  const PairSampler sampler(f.graph, f.policy);
  adpsgd_logical_step(s, f.ctx(0.1), sampler);
  EXPECT_DOUBLE_EQ(s.models(0, 0), 0.9);
  EXPECT_EQ(s.k, 1);
}

TEST(AdpsgdStep, TwoWorkersGradientAtPreAveragingModel) {
  const Fixture f(half_square(), build_ring(2));
  const PairSampler sampler(f.graph, f.policy);
  bool saw[2] = {false, false};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AlgoState s(row({1.0, 3.0}), StalenessModel(), seed);
    adpsgd_logical_step(s, f.ctx(0.1), sampler);
    const int i = s.last.worker;
    saw[i] = true;
    // Hand trace: average to 2, gradient of x^2/2 at the stale read x_hat = pre-averaging x^i.
    const double x_hat = i == 0 ? 1.0 : 3.0;
    const double updated = 2.0 - 0.1 * x_hat;
    EXPECT_DOUBLE_EQ(s.models(0, i), updated);
    EXPECT_DOUBLE_EQ(s.models(0, 1 - i), 2.0);
    if (i == 0) {
      EXPECT_DOUBLE_EQ(s.models(0, 0), 1.9);
    }
  }
  EXPECT_TRUE(saw[0] && saw[1]);
}

TEST(AdpsgdStep, ZeroGradientPreservesColumnMean) {
  // A = 0 makes every sampled gradient vanish, so steps are pure pair averages.
  const Fixture f(make_quadratic({Matrix::Zero(2, 2)}, {Vector::Zero(2)}), build_ring(5));
  const PairSampler sampler(f.graph, f.policy);
  ModelMatrix x(2, 5);
  x << 1, -1, 2, -2, 7, 0.5, 3, -4, 1, 9;
  AlgoState s(x, StalenessModel(), 3);
  const Vector mean = x.rowwise().mean();
  for (int t = 0; t < 200; ++t) {
    adpsgd_logical_step(s, f.ctx(0.7), sampler);
    ASSERT_LE((s.models.rowwise().mean() - mean).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_LT(column_spread(s.models), column_spread(x));
}

TEST(AdpsgdStep, AtOptimumColumnsOnlyMix) {
  Matrix a(1, 1);
  a << 1;
  const Fixture f(make_quadratic({a}, {Vector::Zero(1)}), build_ring(4));
  const PairSampler sampler(f.graph, f.policy);
  AlgoState s(ModelMatrix::Zero(1, 4), StalenessModel(), 5);
  for (int t = 0; t < 50; ++t) adpsgd_logical_step(s, f.ctx(0.3), sampler);
  EXPECT_EQ(s.models, ModelMatrix::Zero(1, 4));
}

TEST(AdpsgdStep, ColumnSumChangesOnlyByGradient) {
  QuadraticOptions o;
  o.dimension = 6;
  o.num_samples = 30;
  o.noise = 1.0;
  o.seed = 12;
  const Fixture f(make_quadratic(o), build_skip_ring(7));
  const PairSampler sampler(f.graph, f.policy);
  Rng rng(4);
  std::normal_distribution<double> normal;
  ModelMatrix x(6, 7);
  for (Eigen::Index e = 0; e < x.size(); ++e) x.data()[e] = normal(rng);
  for (auto mode : {StalenessMode::kZero, StalenessMode::kFixed, StalenessMode::kUniform}) {
    AlgoState s(x, StalenessModel(mode, 3), 9);
    for (int t = 0; t < 500; ++t) {
      const Vector before = s.models.rowwise().sum();
      adpsgd_logical_step(s, f.ctx(0.05, 2), sampler);
      const Vector expected = before - 0.05 * s.last.gradient;
      ASSERT_LE((s.models.rowwise().sum() - expected).cwiseAbs().maxCoeff(), 1e-12);
      ASSERT_LE(s.last.tau, 3);
    }
    EXPECT_LE(s.max_tau, 3);
  }
}

TEST(Staleness, FixedModeServesExactSnapshots) {
  QuadraticOptions o;
  o.dimension = 3;
  o.num_samples = 10;
  o.noise = 1.0;
  const Fixture f(make_quadratic(o), build_ring(3));
  const PairSampler sampler(f.graph, f.policy);
  AlgoState s(ModelMatrix::Constant(3, 3, 1.0), StalenessModel(StalenessMode::kFixed, 2), 1);
  std::vector<ModelMatrix> history{s.models};
  for (int t = 0; t < 30; ++t) {
    const int tau = static_cast<int>(std::min<std::int64_t>(2, s.k));
    EXPECT_EQ(s.staleness.snapshot(tau, s.models), history[history.size() - 1 - tau]);
    adpsgd_logical_step(s, f.ctx(0.01), sampler);
    EXPECT_EQ(s.last.tau, tau);
    history.push_back(s.models);
  }
  EXPECT_THROW(s.staleness.snapshot(3, s.models), InvariantError);
}

TEST(Staleness, UniformDrawsStayWithinCap) {
  StalenessModel m(StalenessMode::kUniform, 5);
  Rng rng(2);
  std::vector<int> hist(6, 0);
  for (std::int64_t k = 0; k < 20000; ++k) {
    const int tau = m.draw(k, rng);
    ASSERT_LE(tau, std::min<std::int64_t>(5, k));
    ASSERT_GE(tau, 0);
    ++hist[tau];
  }
  for (int t = 0; t <= 5; ++t) EXPECT_GT(hist[t], 2500);
  EXPECT_THROW(StalenessModel(StalenessMode::kFixed, -1), ValidationError);
}

TEST(DpsgdStep, SingleWorkerMatchesSgd) {
  const Fixture f(half_square(), build_ring(1));
  AlgoState a(row({1.0}), StalenessModel(), 0), b(row({1.0}), StalenessModel(), 0);
  const Matrix w = dpsgd_mixing_matrix(f.graph);
  for (int t = 0; t < 10; ++t) {
    dpsgd_step(a, f.ctx(0.2), w);
    sgd_step(b, f.ctx(0.2));
  }
  EXPECT_EQ(a.models, b.models);
}

TEST(DpsgdStep, TwoWorkerHandTrace) {
  const Fixture f(half_square(), build_ring(2));
  const Matrix w = dpsgd_mixing_matrix(f.graph);
  Matrix pair(2, 2);
  pair << 0.5, 0.5, 0.5, 0.5;
  EXPECT_LE((w - pair).cwiseAbs().maxCoeff(), 1e-15);
  AlgoState s(row({1.0, 3.0}), StalenessModel(), 0);
  dpsgd_step(s, f.ctx(0.1), w);
  EXPECT_DOUBLE_EQ(s.models(0, 0), 1.9);
  EXPECT_DOUBLE_EQ(s.models(0, 1), 1.7);
  EXPECT_EQ(s.k, 2);
}

TEST(DpsgdStep, PureMixingContractsGeometrically) {
  const auto g = build_ring(4);
  const Matrix w = dpsgd_mixing_matrix(g);
  EXPECT_TRUE(is_doubly_stochastic(w));
  // Second largest |eigenvalue| of I - L/3 on the 4-ring: Laplacian eigenvalues {0, 2, 2, 4}.
  const double lambda = std::max(std::abs(1 - 2.0 / 3), std::abs(1 - 4.0 / 3));
  ModelMatrix x(1, 4);
  x << 1, -2, 5, 0;
  Vector centered = x.row(0).transpose().array() - x.mean();
  double spread0 = centered.norm();
  for (int t = 1; t <= 30; ++t) {
    x = x * w;
    centered = x.row(0).transpose().array() - x.mean();
    EXPECT_LE(centered.norm(), spread0 * std::pow(lambda, t) * (1 + 1e-9) + 1e-14);
  }
  EXPECT_LT(column_spread(x), 1e-9);
}

TEST(AllreduceStep, HandTraceAndInvariant) {
  const Fixture f(half_square(), build_ring(2));
  AlgoState s(row({2.0, 2.0}), StalenessModel(), 0);
  allreduce_step(s, f.ctx(0.1));
  EXPECT_DOUBLE_EQ(s.models(0, 0), 1.8);
  EXPECT_DOUBLE_EQ(s.models(0, 1), 1.8);
  EXPECT_EQ(column_spread(s.models), 0.0);
  EXPECT_EQ(s.k, 2);
  AlgoState bad(row({1.0, 2.0}), StalenessModel(), 0);
  EXPECT_THROW(allreduce_step(bad, f.ctx(0.1)), InvariantError);
}

TEST(AllreduceStep, EqualsSerialSgdWithDoubledBatch) {
  // Deterministic gradients: n workers averaging M-sample sums equal one 2M-sample sum at step gamma / n.
  const Fixture two(half_square(), build_ring(2));
  const Fixture one(half_square(), build_ring(1));
  AlgoState a(row({5.0, 5.0}), StalenessModel(), 0), b(row({5.0}), StalenessModel(), 0);
  for (int t = 0; t < 20; ++t) {
    allreduce_step(a, two.ctx(0.1, 3));
    sgd_step(b, one.ctx(0.05, 6));
    ASSERT_DOUBLE_EQ(a.models(0, 0), b.models(0, 0));
  }
}

TEST(ApsgdStep, ZeroStalenessMatchesSgd) {
  QuadraticOptions o;
  o.dimension = 4;
  o.num_samples = 25;
  o.noise = 1.0;
  const Fixture f(make_quadratic(o), build_ring(1));
  const PairSampler sampler(f.graph, f.policy);
  AlgoState a(ModelMatrix::Constant(4, 1, 2.0), StalenessModel(StalenessMode::kFixed, 0), 31);
  AlgoState b(ModelMatrix::Constant(4, 1, 2.0), StalenessModel(), 31);
  for (int t = 0; t < 1000; ++t) {
    apsgd_step(a, f.ctx(0.05), sampler);
    sgd_step(b, f.ctx(0.05));
  }
  EXPECT_EQ(a.models, b.models);
}

TEST(ApsgdStep, FixedStalenessHandTrace) {
  const Fixture f(half_square(), build_ring(1));
  const PairSampler sampler(f.graph, f.policy);
  AlgoState s(row({1.0}), StalenessModel(StalenessMode::kFixed, 2), 0);
  // x_{k+1} = x_k - gamma * x_{k - min(k, 2)}
  std::vector<double> x{1.0};
  for (int k = 0; k < 5; ++k) {
    const int tau = std::min(k, 2);
    x.push_back(x[k] - 0.5 * x[k - tau]);
    apsgd_step(s, f.ctx(0.5), sampler);
    EXPECT_DOUBLE_EQ(s.models(0, 0), x.back()) << "k=" << k + 1;
  }
  // Closed values: 1, 0.5, 0, -0.5, -0.75, -0.75
  EXPECT_DOUBLE_EQ(x[5], -0.75);
}

TEST(ApsgdStep, ZeroGradientLeavesModel) {
  const Fixture f(half_square(), build_ring(3));
  const PairSampler sampler(f.graph, f.policy);
  AlgoState s(ModelMatrix::Zero(1, 3), StalenessModel(StalenessMode::kUniform, 4), 0);
  for (int t = 0; t < 20; ++t) apsgd_step(s, f.ctx(0.5), sampler);
  EXPECT_EQ(s.models, ModelMatrix::Zero(1, 3));
}

LogicalRun make_run(const Fixture& f, Algorithm algo, double gamma, std::int64_t k, const Vector& x0) {
  LogicalRun r;
  r.algorithm = algo;
  r.problem = &f.problem;
  r.partition = &f.partition;
  r.graph = &f.graph;
  r.policy = f.policy;
  r.gamma = gamma;
  r.iterations = k;
  r.initial_model = x0;
  return r;
}

TEST(RunLogical, GradientDescentClosedForm) {
  const Fixture f(half_square(), build_ring(1));
  const auto series = run_logical(make_run(f, Algorithm::kSgd, 0.5, 30, Vector::Ones(1)));
  ASSERT_EQ(series.records.size(), 31u);
  for (const auto& r : series.records) {
    const double x = std::pow(0.5, static_cast<double>(r.k));
    EXPECT_DOUBLE_EQ(r.loss_avg, 0.5 * x * x);
    EXPECT_DOUBLE_EQ(r.grad_norm_sq_avg, x * x);
  }
}

TEST(RunLogical, ZeroIterationsRecordsOnlyInitialState) {
  const Fixture f(half_square(), build_ring(3));
  const auto series = run_logical(make_run(f, Algorithm::kAdpsgd, 0.1, 0, Vector::Ones(1)));
  ASSERT_EQ(series.records.size(), 1u);
  EXPECT_EQ(series.records[0].k, 0);
}

TEST(RunLogical, SingleWorkerAdpsgdIsBitwiseSgd) {
  QuadraticOptions o;
  o.dimension = 10;
  o.num_samples = 100;
  o.noise = 1.0;
  o.seed = 6;
  const Fixture f(make_quadratic(o), build_ring(1));
  auto a = make_run(f, Algorithm::kAdpsgd, 0.05, 10000, Vector::Ones(10));
  auto b = make_run(f, Algorithm::kSgd, 0.05, 10000, Vector::Ones(10));
  a.seed = b.seed = 77;
  const auto sa = run_logical(a), sb = run_logical(b);
  ASSERT_EQ(sa.records.size(), sb.records.size());
  for (std::size_t r = 0; r < sa.records.size(); ++r) ASSERT_EQ(sa.records[r].loss_avg, sb.records[r].loss_avg);
  EXPECT_EQ(sa.final_average_model, sb.final_average_model);
}

TEST(RunLogical, AdpsgdConvergesOnFourWorkerRing) {
  QuadraticOptions o;
  o.dimension = 10;
  o.condition = 5;
  o.num_samples = 100;
  o.noise = 0.05;
  o.seed = 21;
  const Fixture f(make_quadratic(o), build_ring(4));
  Rng rng(1);
  const auto est = estimate_variances(f.problem, f.partition, {Vector::Zero(10), *f.problem.optimum()}, 200, rng);
  const std::int64_t k = 20000;
  const double gamma = theory::corollary_gamma(4, 1, f.problem.lipschitz(), est.sigma_sq, est.varsigma_sq, k);
  auto run = make_run(f, Algorithm::kAdpsgd, gamma, k, Vector::Zero(10));
  run.record_every = 1000;
  const auto series = run_logical(run);
  EXPECT_LT(series.final_grad_norm_sq, 1e-4);
  EXPECT_LT(series.records.back().grad_norm_sq_avg, series.records.front().grad_norm_sq_avg);
}

TEST(RunLogical, RecordsAreMonotoneAndStalenessCapped) {
  QuadraticOptions o;
  o.dimension = 5;
  o.num_samples = 40;
  o.noise = 0.5;
  const Fixture f(make_quadratic(o), build_ring(6));
  for (auto algo : {Algorithm::kAdpsgd, Algorithm::kApsgd, Algorithm::kDpsgd, Algorithm::kAllreduce}) {
    auto run = make_run(f, algo, 0.02, 3000, Vector::Zero(5));
    run.staleness_mode = StalenessMode::kUniform;
    run.staleness = 4;
    run.record_every = 250;
    const auto series = run_logical(run);
    for (std::size_t r = 1; r < series.records.size(); ++r) {
      EXPECT_GE(series.records[r].k, series.records[r - 1].k);
      EXPECT_GE(series.records[r].consensus_mk, 0.0);
      EXPECT_LE(series.records[r].max_staleness, 4);
    }
    EXPECT_GE(series.records.back().k, 3000);
  }
}

TEST(RunLogical, DivergenceNamesIteration) {
  const Fixture f(half_square(), build_ring(2));
  auto run = make_run(f, Algorithm::kAdpsgd, 1e200, 100, Vector::Constant(1, 1e200));
  try {
    run_logical(run);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 1);
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(RunLogical, RunningAverageTracksEveryIteration) {
  const Fixture f(half_square(), build_ring(1));
  auto run = make_run(f, Algorithm::kSgd, 0.5, 10, Vector::Ones(1));
  run.track_running_average = true;
  const auto series = run_logical(run);
  double expected = 0;
  for (int k = 0; k < 10; ++k) expected += std::pow(0.25, k);
  EXPECT_EQ(series.running_count, 10);
  EXPECT_NEAR(series.running_grad_norm_sq, expected / 10, 1e-15);
}

TEST(AlgorithmNames, RoundTrip) {
  for (auto a : {Algorithm::kAdpsgd, Algorithm::kDpsgd, Algorithm::kAllreduce, Algorithm::kApsgd, Algorithm::kSgd})
    EXPECT_EQ(algorithm_from_string(to_string(a)), a);
  EXPECT_THROW(algorithm_from_string("easgd"), ValidationError);
}

}  // namespace
}  // namespace adpsgd
