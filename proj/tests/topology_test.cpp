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
#include <numbers>
#include <map>
#include <set>

#include "adpsgd/topology.hpp"

namespace adpsgd {
namespace {

std::set<Edge> edge_set(const TopologyGraph& g) { return {g.edges().begin(), g.edges().end()}; }

// Independent enumeration of the skip-ring offsets 2^i + 1, i <= floor(log2(n - 1)).
std::set<Edge> skip_ring_oracle(int n) {
  std::set<Edge> out;
  for (int i = 0; (1 << i) <= n - 1; ++i) {
    const int off = (1 << i) + 1;
    for (int j = 0; j < n; ++j) {
      const int k = (j + off) % n;
      if (k != j) out.insert(Edge(j, k));
    }
  }
  return out;
}

// Brute-force E[W^T W]: build every W entrywise and weight it by p_i / deg(i).
Matrix gram_oracle(const TopologyGraph& g) {
  const int n = g.size();
  Matrix acc = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j : g.neighbors(i)) {
      Matrix w = Matrix::Identity(n, n);
      w(i, i) = w(j, j) = w(i, j) = w(j, i) = 0.5;
      Matrix wtw = Matrix::Zero(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          for (int s = 0; s < n; ++s) wtw(r, c) += w(s, r) * w(s, c);
      acc += wtw / (double(n) * g.degree(i));
    }
  }
  return acc;
}

TEST(BuildRing, TwoWorkers) {
  const auto g = build_ring(2);
  EXPECT_EQ(edge_set(g), (std::set<Edge>{Edge(0, 1)}));
  ASSERT_TRUE(g.has_partition());
  EXPECT_EQ(g.partition()->active, std::vector<int>({0}));
  EXPECT_EQ(g.partition()->passive, std::vector<int>({1}));
}

TEST(BuildRing, FourWorkersParityPartition) {
  const auto g = build_ring(4);
  EXPECT_EQ(edge_set(g), (std::set<Edge>{Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(0, 3)}));
  ASSERT_TRUE(g.has_partition());
  EXPECT_EQ(g.partition()->active, std::vector<int>({0, 2}));
  EXPECT_EQ(g.partition()->passive, std::vector<int>({1, 3}));
}

TEST(BuildRing, OddRingHasNoPartition) {
  const auto g = build_ring(5);
  EXPECT_EQ(g.edges().size(), 5u);
  EXPECT_FALSE(g.has_partition());
  for (int i = 0; i < 5; ++i) EXPECT_EQ(g.degree(i), 2);
}

TEST(BuildRing, SingleWorkerIsEdgeless) {
  const auto g = build_ring(1);
  EXPECT_EQ(g.size(), 1);
  EXPECT_TRUE(g.edges().empty());
  EXPECT_TRUE(g.connected());
  EXPECT_THROW(build_ring(0), ValidationError);
  EXPECT_TRUE(build_skip_ring(1).edges().empty());
  EXPECT_TRUE(build_complete(1).edges().empty());
}

TEST(BuildSkipRing, FourWorkersIsComplete) {
  EXPECT_EQ(edge_set(build_skip_ring(4)), edge_set(build_complete(4)));
  EXPECT_EQ(build_skip_ring(4).edges().size(), 6u);
}

TEST(BuildSkipRing, TwoWorkersFallsBackToSingleEdge) {
  EXPECT_EQ(edge_set(build_skip_ring(2)), (std::set<Edge>{Edge(0, 1)}));
}

TEST(BuildSkipRing, MatchesOffsetEnumeration) {
  for (int n = 3; n <= 40; ++n) EXPECT_EQ(edge_set(build_skip_ring(n)), skip_ring_oracle(n)) << "n=" << n;
  // Offsets {2, 3, 5} on 8 nodes: +5 and -3 coincide, so each node has neighbors j+-2 and j+-3.
  const auto g = build_skip_ring(8);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(g.degree(i), 4);
    std::set<int> nb(g.neighbors(i).begin(), g.neighbors(i).end());
    EXPECT_EQ(nb, (std::set<int>{(i + 2) % 8, (i + 3) % 8, (i + 5) % 8, (i + 6) % 8}));
  }
}

TEST(BuildSkipRing, BipartiteModeDropsEvenOffsets) {
  const auto g = build_skip_ring(8, SkipRingMode::kBipartite);
  ASSERT_TRUE(g.has_partition());
  EXPECT_FALSE(g.warnings().empty());
  for (const Edge& e : g.edges()) EXPECT_EQ((e.u + e.v) % 2, 1);
  EXPECT_TRUE(g.connected());
  EXPECT_FALSE(build_skip_ring(8).has_partition());
}

TEST(TopologyGraph, RejectsBadInput) {
  EXPECT_THROW(TopologyGraph(3, {Edge(0, 3)}), ValidationError);
  EXPECT_THROW(TopologyGraph(3, {Edge(1, 1)}), ValidationError);
  EXPECT_THROW(TopologyGraph(3, {Edge(0, 1)}, Partition{{0, 1}, {2}}), ValidationError);
  EXPECT_THROW(TopologyGraph(3, {Edge(0, 1)}, Partition{{0}, {1}}), ValidationError);
  EXPECT_THROW(TopologyGraph(2, {Edge(0, 1)}, Partition{{0, 1}, {1}}), ValidationError);
}

TEST(TopologyGraph, DeduplicatesAndDetectsConnectivity) {
  const TopologyGraph g(4, {Edge(0, 1), Edge(1, 0), Edge(2, 3)});
  EXPECT_EQ(g.edges().size(), 2u);
  EXPECT_FALSE(g.connected());
  EXPECT_TRUE(build_ring(7).connected());
}

TEST(PairAveraging, TwoWorkers) {
  Matrix expected(2, 2);
  expected << 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(pair_averaging_matrix(0, 1, 2), expected);
}

TEST(PairAveraging, BystanderRowIsIdentity) {
  Matrix expected(3, 3);
  expected << 0.5, 0, 0.5, 0, 1, 0, 0.5, 0, 0.5;
  EXPECT_EQ(pair_averaging_matrix(0, 2, 3), expected);
}

TEST(PairAveraging, RejectsBadPairs) {
  EXPECT_THROW(pair_averaging_matrix(1, 1, 3), ValidationError);
  EXPECT_THROW(pair_averaging_matrix(0, 3, 3), std::out_of_range);
  EXPECT_THROW(pair_averaging_matrix(-1, 0, 3), std::out_of_range);
}

TEST(PairAveraging, SampledMatricesAreDoublyStochasticAndPreserveMean) {
  Rng rng(42);
  std::normal_distribution<double> normal;
  for (const auto& g : {build_ring(6), build_ring(7), build_skip_ring(9), build_complete(5)}) {
    const PairSampler sampler(g, SelectionPolicy::uniform(g.size()));
    for (int t = 0; t < 2000; ++t) {
      const auto [i, j] = sampler.sample(rng);
      const Matrix w = pair_averaging_matrix(i, j, g.size());
      ASSERT_TRUE(is_doubly_stochastic(w));
      ASSERT_TRUE(w.isApprox(w.transpose()));
      Matrix x(3, g.size());
      for (Eigen::Index e = 0; e < x.size(); ++e) x.data()[e] = normal(rng);
      const Vector before = x.rowwise().sum();
      Matrix y = x;
      apply_pair_average(y, i, j);
      ASSERT_LE((y - x * w).cwiseAbs().maxCoeff(), 1e-15);
      ASSERT_LE((y.rowwise().sum() - before).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ExpectedGram, TwoWorkerRing) {
  const Matrix gram = expected_gram(build_ring(2), SelectionPolicy::uniform(2));
  Matrix expected(2, 2);
  expected << 0.5, 0.5, 0.5, 0.5;
  EXPECT_LE((gram - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExpectedGram, ThreeWorkerRingMatchesEnumeration) {
  const auto g = build_ring(3);
  const Matrix gram = expected_gram(g, SelectionPolicy::uniform(3));
  EXPECT_LE((gram - gram_oracle(g)).cwiseAbs().maxCoeff(), 1e-15);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(gram(r, c), r == c ? 2.0 / 3.0 : 1.0 / 6.0, 1e-15);
}

TEST(ExpectedGram, MatchesEnumerationOnSeveralGraphs) {
  for (const auto& g : {build_ring(4), build_ring(9), build_skip_ring(10), build_complete(6)}) {
    const Matrix gram = expected_gram(g, SelectionPolicy::uniform(g.size()));
    EXPECT_LE((gram - gram_oracle(g)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_TRUE(is_doubly_stochastic(gram));
  }
}

TEST(ExpectedGram, SingleWorkerAndDisconnected) {
  const Matrix one = expected_gram(build_ring(1), SelectionPolicy::uniform(1));
  ASSERT_EQ(one.rows(), 1);
  EXPECT_EQ(one(0, 0), 1.0);
  const TopologyGraph split(4, {Edge(0, 1), Edge(2, 3)});
  EXPECT_THROW(expected_gram(split, SelectionPolicy::uniform(4)), ConnectivityError);
}

TEST(ExpectedGram, AgreesWithMonteCarloWithinThreeStandardErrors) {
  constexpr int kDraws = 100000;
  for (int n : {3, 4, 5}) {
    const auto g = build_ring(n);
    const PairSampler sampler(g, SelectionPolicy::uniform(n));
    const Matrix exact = expected_gram(g, SelectionPolicy::uniform(n));
    Matrix sum = Matrix::Zero(n, n), sum_sq = Matrix::Zero(n, n);
    Rng rng(7 + n);
    for (int t = 0; t < kDraws; ++t) {
      const auto [i, j] = sampler.sample(rng);
      const Matrix w = pair_averaging_matrix(i, j, n);
      const Matrix wtw = w.transpose() * w;
      sum += wtw;
      sum_sq += wtw.cwiseProduct(wtw);
    }
    const Matrix mean = sum / kDraws;
    const Matrix var = (sum_sq / kDraws - mean.cwiseProduct(mean)).cwiseMax(0.0);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double se = std::sqrt(var(r, c) / kDraws);
        EXPECT_LE(std::abs(mean(r, c) - exact(r, c)), 3 * se + 1e-12) << "n=" << n << " entry " << r << "," << c;
      }
    }
  }
}

TEST(SpectralGap, HandValues) {
  Matrix half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  EXPECT_NEAR(spectral_gap(half), 0.0, 1e-15);
  EXPECT_NEAR(spectral_gap(Matrix::Identity(5, 5)), 1.0, 1e-15);
  Matrix circ(3, 3);
  circ << 2.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 6, 2.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 6, 2.0 / 3;
  EXPECT_NEAR(spectral_gap(circ), 0.5, 1e-14);
}

TEST(SpectralGap, RejectsAsymmetric) {
  Matrix m(2, 2);
  m << 0.5, 0.6, 0.4, 0.5;
  EXPECT_THROW(spectral_gap(m), ValidationError);
}

TEST(SpectralGap, RingMatchesClosedForm) {
  // Uniform pair law on a ring gives E[W^T W] = I - L / (2n); the ring Laplacian has eigenvalues 2 - 2cos(2 pi k / n).
  for (int n = 3; n <= 16; ++n) {
    const double lam2 = 1 - (1 - std::cos(2 * std::numbers::pi / n)) / n;
    const double lam_n = 1 - (1 - std::cos(2 * std::numbers::pi * (n / 2) / n)) / n;
    const double rho = std::max(std::abs(lam2), std::abs(lam_n));
    EXPECT_NEAR(spectral_gap(expected_gram(build_ring(n), SelectionPolicy::uniform(n))), rho, 1e-12) << n;
  }
}

TEST(SpectralGap, ConnectedGraphsMixStrictly) {
  for (const auto& g : {build_ring(2), build_ring(11), build_skip_ring(13), build_complete(7)}) {
    const auto report = analyze_spectrum(g, SelectionPolicy::uniform(g.size()));
    EXPECT_GE(report.rho, 0.0);
    EXPECT_LT(report.rho, 1.0);
  }
}

TEST(PairSampler, SingleWorkerPairsWithItself) {
  const auto g = build_ring(1);
  const PairSampler sampler(g, SelectionPolicy::uniform(1));
  Rng rng(1);
  const Rng before = rng;
  EXPECT_EQ(sampler.sample(rng), std::make_pair(0, 0));
  EXPECT_EQ(rng, before);
}

TEST(PairSampler, FollowsPolicyAndNeighborsUniformly) {
  const auto g = build_ring(4);
  SelectionPolicy p;
  p.worker_weights = Vector(4);
  p.worker_weights << 0.1, 0.2, 0.3, 0.4;
  const PairSampler sampler(g, p);
  Rng rng(99);
  constexpr int kDraws = 200000;
  std::vector<int> worker(4, 0);
  std::map<std::pair<int, int>, int> pairs;
  for (int t = 0; t < kDraws; ++t) {
    const auto pr = sampler.sample(rng);
    ++worker[pr.first];
    ++pairs[pr];
    ASSERT_NE(std::find(g.neighbors(pr.first).begin(), g.neighbors(pr.first).end(), pr.second),
              g.neighbors(pr.first).end());
  }
  for (int i = 0; i < 4; ++i) {
    const double q = p.worker_weights[i];
    EXPECT_NEAR(worker[i] / double(kDraws), q, 3 * std::sqrt(q * (1 - q) / kDraws));
    for (int j : g.neighbors(i)) {
      const double pij = q / 2;
      EXPECT_NEAR(pairs[std::make_pair(i, j)] / double(kDraws), pij, 3 * std::sqrt(pij * (1 - pij) / kDraws));
    }
  }
}

TEST(SelectionPolicy, Validation) {
  const auto g = build_ring(3);
  SelectionPolicy p;
  p.worker_weights = Vector::Constant(3, 0.5);
  EXPECT_THROW(p.validate(g), ValidationError);
  p.worker_weights = Vector::Constant(2, 0.5);
  EXPECT_THROW(p.validate(g), ValidationError);
  const TopologyGraph isolated(3, {Edge(0, 1)});
  EXPECT_THROW(SelectionPolicy::uniform(3).validate(isolated), ValidationError);
}

TEST(ConsensusDecay, RingFiveMonteCarloBelowDecayBound) {
  constexpr int n = 5;
  constexpr int kTrials = 10000;
  const auto g = build_ring(n);
  const PairSampler sampler(g, SelectionPolicy::uniform(n));
  const double rho = spectral_gap(expected_gram(g, SelectionPolicy::uniform(n)));
  const std::vector<int> horizons{1, 5, 10, 25, 50};
  for (int i = 0; i < n; ++i) {
    Rng rng(1000 + i);
    std::vector<double> sum(horizons.size(), 0.0), sum_sq(horizons.size(), 0.0);
    for (int t = 0; t < kTrials; ++t) {
      Vector v = Vector::Zero(n);
      v[i] = 1;
      std::size_t h = 0;
      for (int k = 1; k <= horizons.back(); ++k) {
        const auto [a, b] = sampler.sample(rng);
        const double avg = (v[a] + v[b]) / 2;
        v[a] = avg;
        v[b] = avg;
        if (k == horizons[h]) {
          const double d = (Vector::Constant(n, 1.0 / n) - v).squaredNorm();
          sum[h] += d;
          sum_sq[h] += d * d;
          ++h;
        }
      }
    }
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const double mean = sum[h] / kTrials;
      const double se = std::sqrt(std::max(0.0, sum_sq[h] / kTrials - mean * mean) / kTrials);
      const double bound = (n - 1.0) / n * std::pow(rho, horizons[h]);
      EXPECT_LE(mean, bound + 3 * se) << "i=" << i << " K=" << horizons[h];
    }
  }
}

TEST(TopologyJson, RoundTrip) {
  for (const auto& g : {build_ring(6), build_ring(5), build_skip_ring(8, SkipRingMode::kBipartite)}) {
    const auto back = topology_from_json(topology_to_json(g));
    EXPECT_EQ(back.size(), g.size());
    EXPECT_EQ(back.edges(), g.edges());
    EXPECT_EQ(back.has_partition(), g.has_partition());
  }
  EXPECT_THROW(topology_from_json("{\"n\": 3, \"edges\": [[0, 5]]}"), ValidationError);
  EXPECT_THROW(topology_from_json("not json"), ValidationError);
}

}  // namespace
}  // namespace adpsgd
