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

#include "adpsgd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <sstream>

#include "json.hpp"

namespace adpsgd {

SpeedModel SpeedModel::homogeneous(int n, double compute_time, double link_time) {
  SpeedModel m;
  m.compute_time.assign(n, compute_time);
  m.link_time = link_time;
  return m;
}

void SpeedModel::validate(int n) const {
  if (static_cast<int>(compute_time.size()) != n)
    throw ValidationError("speed model: need one compute time per worker");
  for (double c : compute_time)
    if (!(c > 0) || !std::isfinite(c)) throw ValidationError("speed model: compute times must be positive");
  if (!(link_time >= 0) || !std::isfinite(link_time)) throw ValidationError("speed model: link time must be >= 0");
  for (const auto& [e, t] : link_overrides)
    if (!(t >= 0) || !std::isfinite(t)) throw ValidationError("speed model: link times must be >= 0");
  for (const auto& s : slowdowns) {
    if (!(s.factor >= 1)) throw ValidationError("speed model: slowdown factors must be >= 1");
    if (!(s.end >= s.start)) throw ValidationError("speed model: slowdown window ends before it starts");
    if (s.target == Slowdown::Target::kWorker && (s.worker < 0 || s.worker >= n))
      throw ValidationError("speed model: slowdown worker out of range");
  }
}

double SpeedModel::compute_factor(int worker, double t) const {
  double f = 1;
  for (const auto& s : slowdowns)
    if (s.target == Slowdown::Target::kWorker && s.worker == worker && t >= s.start && t < s.end) f *= s.factor;
  return f;
}

double SpeedModel::link_factor(const Edge& edge, double t) const {
  double f = 1;
  for (const auto& s : slowdowns)
    if (s.target == Slowdown::Target::kEdge && s.edge == edge && t >= s.start && t < s.end) f *= s.factor;
  return f;
}

double SpeedModel::link_duration(const Edge& edge, double t) const {
  const auto it = link_overrides.find(edge);
  const double base = it == link_overrides.end() ? link_time : it->second;
  return base * link_factor(edge, t);
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kGradientReady:
      return "gradient-ready";
    case EventKind::kAveragingRequest:
      return "averaging-request";
    case EventKind::kAveragingComplete:
      return "averaging-complete";
    case EventKind::kBufferFlush:
      return "buffer-flush";
  }
  return "unknown";
}

void EventTrace::write_jsonl(std::ostream& out) const {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["seq"] = e.sequence;
    j["time"] = e.time;
    j["kind"] = to_string(e.kind);
    j["worker"] = e.worker;
    j["peer"] = e.peer;
    j["k"] = e.k;
    if (e.kind == EventKind::kBufferFlush || e.kind == EventKind::kGradientReady) j["k_read"] = e.k_read;
    out << j.dump() << '\n';
  }
}

std::string EventTrace::to_jsonl() const {
  std::ostringstream os;
  write_jsonl(os);
  return os.str();
}

namespace {

void validate_spec(const SimulationSpec& spec) {
  if (!spec.problem || !spec.partition || !spec.graph) throw ValidationError("simulate: incomplete specification");
  const int n = spec.graph->size();
  if (static_cast<int>(spec.partition->shards.size()) != n)
    throw ValidationError("simulate: partition shard count must equal worker count");
  if (!(spec.gamma > 0)) throw ValidationError("simulate: gamma must be positive");
  if (spec.batch < 1) throw ValidationError("simulate: batch size must be >= 1");
  if (spec.record_every < 1) throw ValidationError("simulate: record_every must be >= 1");
  if (!(spec.horizon > 0)) throw ValidationError("simulate: horizon must be positive");
  if (spec.initial_model.size() != spec.problem->dimension())
    throw ValidationError("simulate: initial model has the wrong dimension");
  if (spec.policy.worker_weights.size() != n) throw ValidationError("simulate: policy size must equal worker count");
  spec.speed.validate(n);
}

class EventSimulator {
 public:
  explicit EventSimulator(const SimulationSpec& spec) : spec_(spec), n_(spec.graph->size()) {
    validate_spec(spec);
    if (spec.mode == ExchangeMode::kBipartite && n_ > 1 && !spec.graph->has_partition()) {
      throw ValidationError(
          "simulate: deadlock-free mode needs a bipartite active/passive partition; use serialized mode "
          "for non-bipartite graphs");
    }
    models_ = spec.initial_model.replicate(1, n_);
    workers_.resize(n_);
    for (int w = 0; w < n_; ++w) {
      auto& wk = workers_[w];
      wk.data = make_stream(spec.seed, 0x100000 + static_cast<std::uint64_t>(w));
      wk.select = make_stream(spec.seed, 0x200000 + static_cast<std::uint64_t>(w));
      wk.initiator = spec.mode == ExchangeMode::kSerialized || spec.graph->is_active(w);
      if (wk.initiator) wk.targets = spec.graph->neighbors(w);
    }
  }

  SimulationResult run() {
    record(0.0);
    for (int w = 0; w < n_; ++w) start_compute(w, 0.0);

    while (!queue_.empty() && !stopped_) {
      const Pending ev = queue_.top();
      if (ev.time > spec_.horizon) break;
      queue_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::kGradientReady:
          on_gradient_ready(ev.worker);
          break;
        case EventKind::kAveragingRequest:
          on_request(ev.worker, ev.peer);
          break;
        case EventKind::kAveragingComplete:
          on_complete(ev.worker, ev.peer);
          break;
        case EventKind::kBufferFlush:
          break;
      }
    }
    if (queue_.empty() && !stopped_ && now_ < spec_.horizon) throw DeadlockError(deadlock_report());

    SimulationResult res;
    res.end_time = stopped_ || !std::isfinite(spec_.horizon) ? now_ : spec_.horizon;
    if (series_.records.empty() || series_.records.back().k != k_) record(res.end_time);
    res.k = k_;
    res.updates = updates();
    res.max_staleness = max_tau_;
    res.time_to_target = time_to_target_;
    series_.final_average_model = average_model(models_);
    series_.final_loss = spec_.problem->loss(series_.final_average_model);
    series_.final_grad_norm_sq = spec_.problem->full_gradient(series_.final_average_model).squaredNorm();
    res.metrics = std::move(series_);
    res.trace = std::move(trace_);
    res.final_models = models_;
    return res;
  }

 private:
  struct Pending {
    double time;
    std::uint64_t order;
    EventKind kind;
    int worker;
    int peer;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };

  struct Worker {
    Vector computing;
    std::int64_t computing_k_read = 0;
    bool compute_blocked = false;

    Vector buffer;
    std::int64_t buffer_k_read = 0;
    bool buffer_full = false;

    bool initiator = true;
    std::vector<int> targets;
    bool waiting = false;     // initiator's request is outstanding
    bool exchanging = false;  // model locked by an exchange this worker serves
    std::deque<int> requests;

    std::int64_t updates = 0;
    Rng data;
    Rng select;
  };

  void schedule(double time, EventKind kind, int worker, int peer = -1) {
    queue_.push(Pending{time, order_++, kind, worker, peer});
  }

  void emit(EventKind kind, int worker, int peer, std::int64_t k_read = -1) {
    const SimEvent ev{now_, kind, worker, peer, emitted_++, k_, k_read};
    if (spec_.observer) spec_.observer(ev, models_);
    if (spec_.record_trace) trace_.events.push_back(ev);
  }

  void start_compute(int w, double t) {
    auto& wk = workers_[w];
    Vector x = models_.col(w);
    if (spec_.compensation && wk.buffer_full) x -= spec_.gamma * wk.buffer;
    wk.computing_k_read = k_;
    sample_gradient_into(*spec_.problem, *spec_.partition, w, x, spec_.batch, wk.data, wk.computing);
    schedule(t + spec_.speed.compute_duration(w, t), EventKind::kGradientReady, w);
  }

  void deposit(int w) {
    auto& wk = workers_[w];
    wk.buffer.swap(wk.computing);
    wk.buffer_k_read = wk.computing_k_read;
    wk.buffer_full = true;
  }

  void on_gradient_ready(int w) {
    auto& wk = workers_[w];
    emit(EventKind::kGradientReady, w, -1, wk.computing_k_read);
    if (wk.buffer_full) {
      wk.compute_blocked = true;
      return;
    }
    deposit(w);
    comm_loop(w);
    if (stopped_) return;
    start_compute(w, now_);
  }

  void flush(int w) {
    auto& wk = workers_[w];
    models_.col(w) -= spec_.gamma * wk.buffer;
    const int tau = static_cast<int>(k_ - wk.buffer_k_read);
    max_tau_ = std::max(max_tau_, tau);
    ++k_;
    ++wk.updates;
    wk.buffer_full = false;
    emit(EventKind::kBufferFlush, w, -1, wk.buffer_k_read);
    if (!models_.col(w).allFinite()) {
      throw DivergenceError(k_, "divergence: non-finite model at worker " + std::to_string(w) + ", update " +
                                    std::to_string(k_) + ", time " + std::to_string(now_));
    }
    if (k_ % spec_.record_every == 0) record(now_);
    if (spec_.target_loss && !time_to_target_) {
      if (spec_.problem->loss(average_model(models_)) <= *spec_.target_loss) {
        time_to_target_ = now_;
        stopped_ = true;
      }
    }
    if (k_ >= spec_.max_updates) stopped_ = true;
    if (stopped_) return;
    if (wk.compute_blocked) {
      wk.compute_blocked = false;
      deposit(w);
      start_compute(w, now_);
    }
  }

  // The communication thread's loop body, run whenever it becomes free.
  void comm_loop(int w) {
    auto& wk = workers_[w];
    while (!wk.waiting && !wk.exchanging && !stopped_) {
      bool flushed = false;
      if (wk.buffer_full) {
        flush(w);
        flushed = true;
        if (stopped_) return;
      }
      if (wk.initiator && flushed && !wk.targets.empty()) {
        initiate(w);
        return;
      }
      if (!wk.requests.empty()) {
        serve(w);
        return;
      }
      if (!wk.buffer_full) return;
    }
  }

  void initiate(int w) {
    auto& wk = workers_[w];
    const auto pick = std::uniform_int_distribution<std::size_t>(0, wk.targets.size() - 1)(wk.select);
    wk.waiting = true;
    schedule(now_, EventKind::kAveragingRequest, w, wk.targets[pick]);
  }

  void on_request(int from, int to) {
    emit(EventKind::kAveragingRequest, from, to);
    if (spec_.mode == ExchangeMode::kSerialized) {
      global_queue_.emplace_back(from, to);
      try_global();
      return;
    }
    workers_[to].requests.push_back(from);
    comm_loop(to);
  }

  void serve(int j) {
    auto& passive = workers_[j];
    const int i = passive.requests.front();
    passive.requests.pop_front();
    passive.exchanging = true;
    schedule(now_ + spec_.speed.link_duration(Edge(i, j), now_), EventKind::kAveragingComplete, i, j);
  }

  void try_global() {
    if (global_busy_ || global_queue_.empty()) return;
    const auto [i, j] = global_queue_.front();
    global_queue_.pop_front();
    global_busy_ = true;
    workers_[j].exchanging = true;
    schedule(now_ + spec_.speed.link_duration(Edge(i, j), now_), EventKind::kAveragingComplete, i, j);
  }

  void on_complete(int i, int j) {
    models_.col(i) = (models_.col(i) + models_.col(j)) / 2.0;
    models_.col(j) = models_.col(i);
    emit(EventKind::kAveragingComplete, i, j);
    workers_[i].waiting = false;
    workers_[j].exchanging = false;
    global_busy_ = false;
    comm_loop(i);
    comm_loop(j);
    if (spec_.mode == ExchangeMode::kSerialized && !stopped_) try_global();
  }

  std::vector<std::int64_t> updates() const {
    std::vector<std::int64_t> u(n_);
    for (int w = 0; w < n_; ++w) u[w] = workers_[w].updates;
    return u;
  }

  void record(double t) {
    series_.records.push_back(
        make_record(*spec_.problem, models_, spec_.policy.worker_weights, k_, t, max_tau_, updates()));
  }

  std::string deadlock_report() const {
    std::ostringstream os;
    os << "deadlock: no pending events at time " << now_ << " with blocked workers:";
    for (int w = 0; w < n_; ++w) {
      const auto& wk = workers_[w];
      if (wk.compute_blocked || wk.waiting || wk.exchanging) {
        os << " [worker " << w << (wk.compute_blocked ? " compute-blocked" : "") << (wk.waiting ? " waiting" : "")
           << (wk.exchanging ? " exchanging" : "") << "]";
      }
    }
    return os.str();
  }

  const SimulationSpec& spec_;
  int n_;
  ModelMatrix models_;
  std::vector<Worker> workers_;
  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  std::deque<std::pair<int, int>> global_queue_;
  bool global_busy_ = false;
  std::uint64_t order_ = 0;
  std::uint64_t emitted_ = 0;
  double now_ = 0;
  std::int64_t k_ = 0;
  int max_tau_ = 0;
  bool stopped_ = false;
  std::optional<double> time_to_target_;
  MetricsSeries series_;
  EventTrace trace_;
};

}  // namespace

SimulationResult simulate(const SimulationSpec& spec) { return EventSimulator(spec).run(); }

SimulationResult simulate_synchronous(const SimulationSpec& spec, SyncAlgorithm algorithm, const SyncCostModel& cost) {
  validate_spec(spec);
  const TopologyGraph& graph = *spec.graph;
  const int n = graph.size();
  if (cost.allreduce_alpha < 0 || cost.allreduce_beta < 0)
    throw ValidationError("simulate_synchronous: cost parameters must be nonnegative");

  StepContext ctx{spec.problem, spec.partition, spec.graph, spec.policy, spec.gamma, spec.batch};
  AlgoState state(spec.initial_model.replicate(1, n), StalenessModel(), spec.seed);
  Matrix mixing;
  if (algorithm == SyncAlgorithm::kDpsgd) {
    if (!graph.connected()) throw ConnectivityError("simulate_synchronous: D-PSGD needs a connected topology");
    mixing = dpsgd_mixing_matrix(graph);
  }

  SimulationResult res;
  std::uint64_t seq = 0;
  auto emit = [&](double t, EventKind kind, int worker, int peer) {
    if (spec.record_trace) res.trace.events.push_back(SimEvent{t, kind, worker, peer, seq, state.k, -1});
    ++seq;
  };
  auto record = [&](double t) {
    res.metrics.records.push_back(make_record(*spec.problem, state.models, spec.policy.worker_weights, state.k, t, 0,
                                              state.updates));
  };

  double t = 0;
  record(t);
  std::int64_t next_record = spec.record_every;
  bool stopped = false;
  while (!stopped && state.k < spec.max_updates) {
    std::vector<std::pair<double, int>> ready(n);
    double slowest = 0;
    for (int w = 0; w < n; ++w) {
      const double d = spec.speed.compute_duration(w, t);
      ready[w] = {t + d, w};
      slowest = std::max(slowest, d);
    }
    double sync = 0;
    if (algorithm == SyncAlgorithm::kAllreduce) {
      sync = n > 1 ? cost.allreduce_alpha * n + cost.allreduce_beta * spec.problem->dimension() : 0.0;
    } else {
      for (const Edge& e : graph.edges()) sync = std::max(sync, spec.speed.link_duration(e, t));
    }
    const double end = t + slowest + sync;
    if (end > spec.horizon) break;

    std::sort(ready.begin(), ready.end());
    for (const auto& [time, w] : ready) emit(time, EventKind::kGradientReady, w, -1);
    if (algorithm == SyncAlgorithm::kAllreduce) {
      allreduce_step(state, ctx);
    } else {
      dpsgd_step(state, ctx, mixing);
    }
    t = end;
    emit(t, EventKind::kAveragingComplete, -1, -1);

    if (state.k >= next_record) {
      record(t);
      while (next_record <= state.k) next_record += spec.record_every;
    }
    if (spec.target_loss && !res.time_to_target &&
        spec.problem->loss(average_model(state.models)) <= *spec.target_loss) {
      res.time_to_target = t;
      stopped = true;
    }
  }

  res.end_time = stopped || state.k >= spec.max_updates || !std::isfinite(spec.horizon) ? t : spec.horizon;
  if (res.metrics.records.back().k != state.k) record(t);
  res.k = state.k;
  res.updates = state.updates;
  res.final_models = state.models;
  res.metrics.final_average_model = average_model(state.models);
  res.metrics.final_loss = spec.problem->loss(res.metrics.final_average_model);
  res.metrics.final_grad_norm_sq = spec.problem->full_gradient(res.metrics.final_average_model).squaredNorm();
  return res;
}

StalenessSummary staleness_profile(const EventTrace& trace, std::optional<int> cap) {
  if (trace.events.empty()) throw ValidationError("staleness_profile: empty trace");
  StalenessSummary s;
  s.configured_cap = cap;
  std::int64_t count = 0;
  double total = 0;
  for (const auto& e : trace.events) {
    if (e.kind != EventKind::kBufferFlush) continue;
    const int tau = static_cast<int>(e.k - 1 - e.k_read);
    if (e.worker >= static_cast<int>(s.max_tau_per_worker.size())) s.max_tau_per_worker.resize(e.worker + 1, 0);
    s.max_tau_per_worker[e.worker] = std::max(s.max_tau_per_worker[e.worker], tau);
    s.max_tau = std::max(s.max_tau, tau);
    ++s.histogram[tau];
    total += tau;
    ++count;
  }
  s.mean_tau = count > 0 ? total / static_cast<double>(count) : 0.0;
  s.within_cap = !cap || s.max_tau <= *cap;
  return s;
}

DeadlockVerdict detect_deadlock_freedom(const TopologyGraph& graph) {
  const int n = graph.size();
  std::vector<int> color(n, -1), parent(n, -1), depth(n, 0);
  for (int root = 0; root < n; ++root) {
    if (color[root] != -1) continue;
    color[root] = 0;
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : graph.neighbors(u)) {
        if (color[v] == -1) {
          color[v] = 1 - color[u];
          parent[v] = u;
          depth[v] = depth[u] + 1;
          q.push(v);
        } else if (color[v] == color[u]) {
          // Same-color edge closes an odd cycle through the BFS tree.
          std::vector<int> up_u{u}, up_v{v};
          int a = u, b = v;
          while (a != b) {
            if (depth[a] >= depth[b]) {
              a = parent[a];
              up_u.push_back(a);
            } else {
              b = parent[b];
              up_v.push_back(b);
            }
          }
          // up_u ends at the common ancestor; up_v ends there too.
          up_v.pop_back();
          DeadlockVerdict verdict;
          verdict.deadlock_free = false;
          verdict.odd_cycle.assign(up_u.rbegin(), up_u.rend());
          verdict.odd_cycle.insert(verdict.odd_cycle.end(), up_v.begin(), up_v.end());
          return verdict;
        }
      }
    }
  }
  DeadlockVerdict verdict;
  verdict.deadlock_free = true;
  Partition p;
  for (int w = 0; w < n; ++w) (color[w] == 0 ? p.active : p.passive).push_back(w);
  verdict.partition = std::move(p);
  return verdict;
}

}  // namespace adpsgd
