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

#include "adpsgd/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "json.hpp"

#include "adpsgd/theory.hpp"

namespace adpsgd {

TopologyGraph::TopologyGraph(int n, std::vector<Edge> edges, std::optional<Partition> partition)
    : n_(n), adjacency_(n > 0 ? n : 0), partition_(std::move(partition)) {
  if (n < 1) throw ValidationError("topology: worker count must be positive");
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v >= n) {
      throw ValidationError("topology: edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                            ") out of range for n=" + std::to_string(n));
    }
    if (e.u == e.v) throw ValidationError("topology: self-loop at worker " + std::to_string(e.u));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  for (const Edge& e : edges_) {
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());

  active_mask_.assign(n, true);
  if (partition_) {
    std::vector<int> side(n, -1);
    auto mark = [&](const std::vector<int>& set, int tag) {
      for (int w : set) {
        if (w < 0 || w >= n) throw ValidationError("topology: partition index out of range");
        if (side[w] != -1) throw ValidationError("topology: partition sets overlap at worker " + std::to_string(w));
        side[w] = tag;
      }
    };
    mark(partition_->active, 0);
    mark(partition_->passive, 1);
    if (std::find(side.begin(), side.end(), -1) != side.end())
      throw ValidationError("topology: partition does not cover every worker");
    for (const Edge& e : edges_) {
      if (side[e.u] == side[e.v]) {
        throw ValidationError("topology: edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") does not cross the active/passive partition");
      }
    }
    for (int w = 0; w < n; ++w) active_mask_[w] = side[w] == 0;
  }
}

int TopologyGraph::max_degree() const {
  int d = 0;
  for (const auto& adj : adjacency_) d = std::max(d, static_cast<int>(adj.size()));
  return d;
}

bool TopologyGraph::connected() const {
  std::vector<bool> seen(n_, false);
  std::vector<int> stack{0};
  seen[0] = true;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n_;
}

bool TopologyGraph::is_active(int worker) const { return active_mask_.at(worker); }

Matrix TopologyGraph::laplacian() const {
  Matrix lap = Matrix::Zero(n_, n_);
  for (const Edge& e : edges_) {
    lap(e.u, e.u) += 1;
    lap(e.v, e.v) += 1;
    lap(e.u, e.v) -= 1;
    lap(e.v, e.u) -= 1;
  }
  return lap;
}

std::optional<Partition> parity_partition(int n, const std::vector<Edge>& edges) {
  for (const Edge& e : edges) {
    if ((e.u % 2) == (e.v % 2)) return std::nullopt;
  }
  Partition p;
  for (int w = 0; w < n; ++w) (w % 2 == 0 ? p.active : p.passive).push_back(w);
  return p;
}

TopologyGraph build_ring(int n) {
  if (n < 1) throw ValidationError("build_ring: n must be positive (got " + std::to_string(n) + ")");
  if (n == 1) return TopologyGraph(1, {});
  std::vector<Edge> edges;
  for (int j = 0; j < n; ++j) {
    if (j != (j + 1) % n) edges.emplace_back(j, (j + 1) % n);
  }
  std::optional<Partition> part;
  if (n % 2 == 0) part = parity_partition(n, edges);
  return TopologyGraph(n, std::move(edges), std::move(part));
}

TopologyGraph build_skip_ring(int n, SkipRingMode mode) {
  if (n < 1) throw ValidationError("build_skip_ring: n must be positive (got " + std::to_string(n) + ")");
  if (n == 1) return TopologyGraph(1, {});

  std::vector<int> offsets;
  const int top = n > 1 ? static_cast<int>(std::floor(std::log2(static_cast<double>(n - 1)))) : 0;
  for (int i = 0; i <= top; ++i) offsets.push_back((1 << i) + 1);

  std::vector<std::string> warnings;
  std::vector<Edge> edges;
  for (int off : offsets) {
    if (mode == SkipRingMode::kBipartite && off % 2 == 0) {
      warnings.push_back("skip-ring: dropped even offset " + std::to_string(off) +
                         " to keep the active/passive split");
      continue;
    }
    for (int j = 0; j < n; ++j) {
      const int k = (j + off) % n;
      if (k != j) edges.emplace_back(j, k);
    }
  }
  if (edges.empty()) edges.emplace_back(0, 1);

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::optional<Partition> part;
  if (n % 2 == 0) part = parity_partition(n, edges);
  TopologyGraph g(n, std::move(edges), std::move(part));
  for (auto& w : warnings) g.add_warning(std::move(w));
  if (mode == SkipRingMode::kBipartite && !g.has_partition())
    g.add_warning("skip-ring: no parity partition exists for odd n=" + std::to_string(n));
  return g;
}

TopologyGraph build_complete(int n) {
  if (n < 1) throw ValidationError("build_complete: n must be positive");
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return TopologyGraph(n, std::move(edges));
}

Matrix pair_averaging_matrix(int i, int j, int n) {
  if (n < 1) throw ValidationError("pair_averaging_matrix: n must be positive");
  if (i < 0 || i >= n || j < 0 || j >= n)
    throw std::out_of_range("pair_averaging_matrix: index out of range");
  if (i == j) throw ValidationError("pair_averaging_matrix: a worker cannot average with itself");
  Matrix w = Matrix::Identity(n, n);
  w(i, i) = w(j, j) = w(i, j) = w(j, i) = 0.5;
  return w;
}

SelectionPolicy SelectionPolicy::uniform(int n) {
  if (n < 1) throw ValidationError("selection policy: n must be positive");
  return SelectionPolicy{Vector::Constant(n, 1.0 / n)};
}

void SelectionPolicy::validate(const TopologyGraph& graph) const {
  if (worker_weights.size() != graph.size())
    throw ValidationError("selection policy: weight vector length does not match worker count");
  if (!worker_weights.allFinite() || (worker_weights.array() < 0).any())
    throw ValidationError("selection policy: weights must be finite and nonnegative");
  if (std::abs(worker_weights.sum() - 1.0) > 1e-9)
    throw ValidationError("selection policy: weights must sum to 1");
  if (graph.size() == 1) return;
  for (int i = 0; i < graph.size(); ++i) {
    if (worker_weights[i] > 0 && graph.degree(i) == 0)
      throw ValidationError("selection policy: worker " + std::to_string(i) + " has weight but no neighbor");
  }
}

PairSampler::PairSampler(const TopologyGraph& graph, const SelectionPolicy& policy) : graph_(&graph) {
  policy.validate(graph);
  cumulative_.resize(graph.size());
  std::partial_sum(policy.worker_weights.data(), policy.worker_weights.data() + graph.size(),
                   cumulative_.begin());
}

int PairSampler::sample_worker(Rng& rng) const {
  if (cumulative_.size() == 1) return 0;
  const double u = std::uniform_real_distribution<double>(0.0, cumulative_.back())(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  int w = static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                    static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
  // Skip zero-weight workers that upper_bound can land on at the boundary.
  while (w > 0 && cumulative_[w] == cumulative_[w - 1]) --w;
  return w;
}

std::pair<int, int> PairSampler::sample(Rng& rng) const {
  const int i = sample_worker(rng);
  const auto& nbrs = graph_->neighbors(i);
  if (nbrs.empty()) return {i, i};
  const auto pick = std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(rng);
  return {i, nbrs[pick]};
}

Matrix expected_gram(const TopologyGraph& graph, const SelectionPolicy& policy) {
  const int n = graph.size();
  if (n == 1) return Matrix::Ones(1, 1);
  if (!graph.connected()) throw ConnectivityError("expected_gram: graph is not connected");
  policy.validate(graph);
  Matrix gram = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double pi = policy.worker_weights[i];
    if (pi == 0) continue;
    const double share = pi / graph.degree(i);
    for (int j : graph.neighbors(i)) {
      const Matrix w = pair_averaging_matrix(i, j, n);
      gram.noalias() += share * (w.transpose() * w);
    }
  }
  return gram;
}

double spectral_gap(const Matrix& gram) {
  if (gram.rows() != gram.cols() || gram.rows() == 0)
    throw ValidationError("spectral_gap: matrix must be square and nonempty");
  if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw ValidationError("spectral_gap: matrix is not symmetric");
  const Eigen::Index n = gram.rows();
  if (n == 1) return 0.0;

  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  if (solver.info() != Eigen::Success) throw InvariantError("spectral_gap: eigensolver failed");
  const Vector& values = solver.eigenvalues();  // ascending
  const Matrix& vectors = solver.eigenvectors();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double residual = (gram * vectors.col(k) - values[k] * vectors.col(k)).norm();
    if (residual > 1e-9 * vectors.col(k).norm())
      throw InvariantError("spectral_gap: eigenpair residual above tolerance");
  }
  // Descending order: lambda_1 = values[n-1], lambda_2 = values[n-2], lambda_n = values[0].
  return std::max(std::abs(values[n - 2]), std::abs(values[0]));
}

SpectralReport analyze_spectrum(const TopologyGraph& graph, const SelectionPolicy& policy) {
  SpectralReport r;
  r.expected_gram = expected_gram(graph, policy);
  r.rho = spectral_gap(r.expected_gram);
  r.bar_rho = r.rho < 1 ? theory::bar_rho(r.rho, graph.size()) : std::numeric_limits<double>::infinity();
  return r;
}

std::string topology_to_json(const TopologyGraph& graph) {
  nlohmann::json j;
  j["n"] = graph.size();
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : graph.edges()) j["edges"].push_back({e.u, e.v});
  if (graph.has_partition()) {
    j["active"] = graph.partition()->active;
    j["passive"] = graph.partition()->passive;
  } else {
    j["active"] = nlohmann::json::array();
    j["passive"] = nlohmann::json::array();
  }
  return j.dump();
}

TopologyGraph topology_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("topology json: ") + e.what());
  }
  try {
    const int n = j.at("n").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ValidationError("topology json: each edge must be [i, j]");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    std::optional<Partition> part;
    const auto active = j.value("active", std::vector<int>{});
    const auto passive = j.value("passive", std::vector<int>{});
    if (!active.empty() || !passive.empty()) part = Partition{active, passive};
    return TopologyGraph(n, std::move(edges), std::move(part));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("topology json: ") + e.what());
  }
}

}  // namespace adpsgd
