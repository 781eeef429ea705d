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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "adpsgd/types.hpp"

namespace adpsgd {

/// Undirected edge, stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;

  Edge() = default;
  Edge(int a, int b) : u(a < b ? a : b), v(a < b ? b : a) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Active/passive split used for deadlock-free averaging.
struct Partition {
  std::vector<int> active;
  std::vector<int> passive;
};

/// Undirected worker graph with an optional bipartite (active, passive) split.
///
/// Construction validates endpoint ranges, rejects self-loops, deduplicates
/// edges and checks that a supplied partition covers V disjointly with every
/// edge crossing it. Connectivity is not a construction invariant; callers
/// that need it (spectral analysis, D-PSGD mixing) check `connected()`.
class TopologyGraph {
 public:
  TopologyGraph(int n, std::vector<Edge> edges, std::optional<Partition> partition = std::nullopt);

  int size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int worker) const { return adjacency_.at(worker); }
  int degree(int worker) const { return static_cast<int>(adjacency_.at(worker).size()); }
  int max_degree() const;
  bool connected() const;

  bool has_partition() const { return partition_.has_value(); }
  const std::optional<Partition>& partition() const { return partition_; }
  /// True for workers in the active set; every worker counts as active when no partition exists.
  bool is_active(int worker) const;

  /// Notes recorded by builders, e.g. offsets dropped to keep the graph bipartite.
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  /// Combinatorial Laplacian D - A.
  Matrix laplacian() const;

 private:
  int n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::optional<Partition> partition_;
  std::vector<bool> active_mask_;
  std::vector<std::string> warnings_;
};

/// Which skip-ring offsets to keep.
enum class SkipRingMode {
  kAllOffsets,  ///< every offset 2^i + 1; used by logical runs
  kBipartite,   ///< even offsets dropped so the parity split stays valid
};

TopologyGraph build_ring(int n);
TopologyGraph build_skip_ring(int n, SkipRingMode mode = SkipRingMode::kAllOffsets);
TopologyGraph build_complete(int n);

/// Parity split {even}, {odd} if it is a valid bipartition of `graph`'s edges.
std::optional<Partition> parity_partition(int n, const std::vector<Edge>& edges);

/// Identity except the (i, j) block, which averages the two workers.
Matrix pair_averaging_matrix(int i, int j, int n);

/// In-place X <- X * W for the pair-average W of columns i and j.
template <typename Derived>
void apply_pair_average(Eigen::MatrixBase<Derived>& models, int i, int j) {
  using Scalar = typename Derived::Scalar;
  if (i == j) return;
  for (Eigen::Index r = 0; r < models.rows(); ++r) {
    const Scalar avg = (models(r, i) + models(r, j)) / Scalar(2);
    models(r, i) = avg;
    models(r, j) = avg;
  }
}

/// Nonnegative entries and unit row and column sums within `tol`.
template <typename Derived>
bool is_doubly_stochastic(const Eigen::MatrixBase<Derived>& w, double tol = 1e-12) {
  if (w.rows() != w.cols()) return false;
  if ((w.array() < -tol).any()) return false;
  const auto ones = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>::Ones(w.rows());
  return ((w * ones).array() - 1).abs().maxCoeff() <= tol &&
         ((w.transpose() * ones).array() - 1).abs().maxCoeff() <= tol;
}

/// Probability law over workers; the neighbor is drawn uniformly.
struct SelectionPolicy {
  Vector worker_weights;

  static SelectionPolicy uniform(int n);
  /// Throws ValidationError unless weights form a distribution and every
  /// worker with positive weight has a neighbor (n = 1 is exempt).
  void validate(const TopologyGraph& graph) const;
};

/// Draws (i_k, neighbor) pairs according to a SelectionPolicy.
class PairSampler {
 public:
  PairSampler(const TopologyGraph& graph, const SelectionPolicy& policy);

  /// Returns (worker, neighbor). For an isolated single worker the neighbor equals the worker.
  std::pair<int, int> sample(Rng& rng) const;
  int sample_worker(Rng& rng) const;

 private:
  const TopologyGraph* graph_;
  std::vector<double> cumulative_;
};

/// Exact E[W^T W] under the pair-averaging law, by enumeration of (worker, neighbor) pairs.
Matrix expected_gram(const TopologyGraph& graph, const SelectionPolicy& policy);

/// max(|lambda_2|, |lambda_n|) of a symmetric doubly stochastic matrix.
double spectral_gap(const Matrix& gram);

struct SpectralReport {
  Matrix expected_gram;
  double rho = 0.0;
  double bar_rho = 0.0;
};

SpectralReport analyze_spectrum(const TopologyGraph& graph, const SelectionPolicy& policy);

/// JSON form: {"n": int, "edges": [[i,j],...], "active": [...], "passive": [...]}.
std::string topology_to_json(const TopologyGraph& graph);
TopologyGraph topology_from_json(const std::string& text);

}  // namespace adpsgd
