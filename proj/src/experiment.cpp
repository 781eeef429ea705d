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

#include "adpsgd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "adpsgd/algorithms.hpp"

namespace adpsgd {

namespace fs = std::filesystem;

TopologyGraph build_topology(const TopologySpec& spec) {
  if (spec.kind == "ring") return build_ring(spec.n);
  if (spec.kind == "skip_ring") return build_skip_ring(spec.n, spec.skip_ring_mode);
  if (spec.kind == "complete") return build_complete(spec.n);
  if (spec.kind == "file") {
    std::ifstream in(spec.path);
    if (!in) throw ValidationError("cannot read topology file '" + spec.path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return topology_from_json(ss.str());
  }
  throw ValidationError("unknown topology kind '" + spec.kind + "'");
}

Problem build_problem(const ProblemSpec& spec) {
  if (spec.kind == "quadratic") {
    QuadraticOptions o;
    o.dimension = spec.dimension;
    o.condition = spec.condition;
    o.num_samples = spec.samples;
    o.noise = spec.noise;
    o.matrix_noise = spec.matrix_noise;
    o.seed = spec.seed;
    return make_quadratic(o);
  }
  if (spec.kind == "logistic") {
    const LabeledDataset data = spec.data_path.empty()
                                    ? make_synthetic_classification(spec.dimension, spec.samples, spec.label_noise,
                                                                    spec.seed)
                                    : load_labeled_csv(spec.data_path);
    return make_logistic(data, spec.l2);
  }
  if (spec.kind == "mlp") {
    MlpOptions o;
    o.input_dim = spec.dimension;
    o.hidden = spec.hidden;
    o.num_samples = spec.samples;
    o.noise = spec.noise;
    o.seed = spec.seed;
    return make_small_mlp(o);
  }
  throw ValidationError("unknown problem kind '" + spec.kind + "'");
}

namespace {

SpeedModel make_speed(const SpeedSpec& s, int n) {
  SpeedModel m;
  if (s.compute_time.size() == 1) {
    m.compute_time.assign(n, s.compute_time[0]);
  } else if (static_cast<int>(s.compute_time.size()) == n) {
    m.compute_time = s.compute_time;
  } else {
    throw ValidationError("speed.compute_time needs one entry or one per worker");
  }
  m.link_time = s.link_time;
  for (const auto& [e, t] : s.link_overrides) m.link_overrides[e] = t;
  m.slowdowns = s.slowdowns;
  m.validate(n);
  return m;
}

Vector initial_vector(const InitSpec& init, int dim) {
  if (init.kind == "zeros") return Vector::Zero(dim);
  if (init.kind == "constant") return Vector::Constant(dim, init.value);
  Rng rng = make_stream(init.seed, 0);
  std::normal_distribution<double> normal(0.0, init.value);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

ResolvedRun resolve_run(const RunConfig& config) {
  ResolvedRun r(config, build_topology(config.topology), build_problem(config.problem));
  const int n = r.graph.size();
  const bool serial = config.algorithm == Algorithm::kSgd;

  if (config.topology.policy_weights.empty()) {
    r.policy = SelectionPolicy::uniform(n);
  } else {
    if (static_cast<int>(config.topology.policy_weights.size()) != n)
      throw ValidationError("topology.policy needs one weight per worker");
    Vector w = Eigen::Map<const Vector>(config.topology.policy_weights.data(), n);
    if (!(w.sum() > 0)) throw ValidationError("topology.policy weights must not all be zero");
    r.policy.worker_weights = w / w.sum();
  }
  r.policy.validate(r.graph);

  const Vector p = serial ? Vector::Ones(1) : r.policy.worker_weights;
  r.partition = partition_data(r.problem, p, config.partition.strategy, config.partition.shuffle_seed);

  const int dim = r.problem.dimension();
  r.initial_model = initial_vector(config.init, dim);
  if (config.init.per_worker) {
    ModelMatrix m(dim, n);
    for (int w = 0; w < n; ++w) {
      InitSpec s = config.init;
      s.seed = config.init.seed + 1000003ULL * static_cast<std::uint64_t>(w + 1);
      m.col(w) = initial_vector(s, dim);
    }
    r.initial_models = std::move(m);
  }

  r.lipschitz = config.gamma.lipschitz ? *config.gamma.lipschitz : r.problem.lipschitz();
  if (config.gamma.sigma_sq && config.gamma.varsigma_sq) {
    r.sigma_sq = *config.gamma.sigma_sq;
    r.varsigma_sq = *config.gamma.varsigma_sq;
  } else {
    std::vector<Vector> probes{r.initial_model};
    if (r.problem.optimum()) probes.push_back(*r.problem.optimum());
    Rng rng = make_stream(config.problem.seed, 0x7a71a4ce);
    const VarianceEstimate est = estimate_variances(r.problem, r.partition, probes, 200, rng);
    r.sigma_sq = config.gamma.sigma_sq.value_or(est.sigma_sq);
    r.varsigma_sq = config.gamma.varsigma_sq.value_or(est.varsigma_sq);
  }
  r.corollary_k = config.gamma.K.value_or(config.iterations);

  if (config.gamma.value) {
    r.gamma = *config.gamma.value;
  } else {
    if (!(r.lipschitz > 0)) throw ValidationError("corollary step size needs a positive Lipschitz constant");
    r.gamma = config.gamma.scale * theory::corollary_gamma(serial ? 1 : n, config.batch, r.lipschitz, r.sigma_sq,
                                                           r.varsigma_sq, r.corollary_k);
  }
  if (!(r.gamma > 0) || !std::isfinite(r.gamma)) throw ValidationError("resolved step size must be positive");
  if (config.target_gap) {
    if (!r.problem.optimum_value()) throw ValidationError("target_gap needs a problem with a known optimum");
    r.config.target_loss = *r.problem.optimum_value() + *config.target_gap;
    r.config.target_gap.reset();
  }
  return r;
}

theory::TheoryReport theory_check(const ResolvedRun& run) {
  const auto& c = run.config;
  theory::TheoryInputs<double> in;
  in.n = c.algorithm == Algorithm::kSgd ? 1 : run.graph.size();
  in.M = c.batch;
  in.L = run.lipschitz;
  in.T = c.staleness_mode == StalenessMode::kZero ? 0 : c.staleness;
  in.rho = in.n > 1 ? analyze_spectrum(run.graph, run.policy).rho : 0.0;
  in.sigma_sq = run.sigma_sq;
  in.varsigma_sq = run.varsigma_sq;
  in.gamma = run.gamma;
  in.K = run.corollary_k;
  std::optional<double> gap;
  if (run.problem.optimum_value()) gap = run.problem.loss(run.initial_model) - *run.problem.optimum_value();
  return theory::make_report(in, gap);
}

LogicalRun logical_run(const ResolvedRun& r, std::uint64_t seed) {
  const auto& c = r.config;
  LogicalRun lr;
  lr.algorithm = c.algorithm;
  lr.problem = &r.problem;
  lr.partition = &r.partition;
  lr.graph = &r.graph;
  lr.policy = r.policy;
  lr.gamma = r.gamma;
  lr.batch = c.batch;
  lr.staleness_mode = c.staleness_mode;
  lr.staleness = c.staleness;
  lr.iterations = c.iterations;
  lr.seed = seed;
  lr.record_every = c.record_every;
  lr.initial_model = r.initial_model;
  lr.initial_models = r.initial_models;
  return lr;
}

SeedResult run_seed(const ResolvedRun& r, std::uint64_t seed) {
  const auto& c = r.config;
  SeedResult out;
  out.seed = seed;
  if (c.mode == RunMode::kLogical) {
    out.metrics = run_logical(logical_run(r, seed));
  } else {
    SimulationSpec spec;
    spec.problem = &r.problem;
    spec.partition = &r.partition;
    spec.graph = &r.graph;
    spec.policy = r.policy;
    spec.gamma = r.gamma;
    spec.batch = c.batch;
    spec.speed = make_speed(c.speed, r.graph.size());
    spec.horizon = c.horizon;
    spec.max_updates = c.iterations;
    spec.seed = seed;
    spec.record_every = c.record_every;
    spec.compensation = c.compensation;
    spec.mode = c.exchange;
    spec.record_trace = c.trace;
    spec.initial_model = r.initial_model;
    spec.target_loss = c.target_loss;
    SimulationResult res;
    if (c.algorithm == Algorithm::kAdpsgd) {
      res = simulate(spec);
    } else {
      const SyncAlgorithm algo = c.algorithm == Algorithm::kAllreduce ? SyncAlgorithm::kAllreduce : SyncAlgorithm::kDpsgd;
      res = simulate_synchronous(spec, algo, SyncCostModel{c.speed.allreduce_alpha, c.speed.allreduce_beta});
    }
    out.metrics = std::move(res.metrics);
    if (c.trace) out.trace_jsonl = res.trace.to_jsonl();
  }
  out.workers = static_cast<int>(out.metrics.records.front().worker_updates.size());
  out.csv = metrics_to_csv(out.metrics, out.workers);
  out.max_staleness = out.metrics.records.back().max_staleness;
  return out;
}

double epoch_updates(int workers, std::size_t dataset_size, int batch) {
  return static_cast<double>(workers) * static_cast<double>(dataset_size) / static_cast<double>(batch);
}

ExperimentResult run_experiment(const RunConfig& config) {
  const ResolvedRun r = resolve_run(config);
  ExperimentResult result;
  result.config = config;
  result.gamma = r.gamma;
  std::vector<std::pair<std::uint64_t, std::vector<MetricsRecord>>> parsed;
  for (const auto seed : config.seeds) {
    const std::string context = fmt::format("run '{}' seed {}: ", config.name, seed);
    try {
      result.seeds.push_back(run_seed(r, seed));
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.iteration(), context + e.what());
    } catch (const DeadlockError& e) {
      throw DeadlockError(context + e.what());
    }
    parsed.emplace_back(seed, parse_metrics_csv(result.seeds.back().csv));
  }
  const int n = config.algorithm == Algorithm::kSgd ? 1 : r.graph.size();
  result.summary = summarize(r.config, r.gamma, parsed, epoch_updates(n, r.problem.num_samples(), config.batch));
  if (config.algorithm == Algorithm::kAdpsgd && r.graph.connected()) {
    result.summary["theory"] = nlohmann::ordered_json::parse(theory::format_report_json(theory_check(r)));
  }
  return result;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw ValidationError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

void write_experiment(const ExperimentResult& result, const std::string& dir) {
  const fs::path base(dir);
  fs::create_directories(base);
  for (const auto& s : result.seeds) {
    write_file_atomic((base / fmt::format("metrics_seed{}.csv", s.seed)).string(), s.csv);
    if (!s.trace_jsonl.empty()) write_file_atomic((base / fmt::format("trace_seed{}.jsonl", s.seed)).string(), s.trace_jsonl);
  }
  write_file_atomic((base / "config.yaml").string(), emit_config(result.config));
  write_file_atomic((base / "summary.json").string(), result.summary.dump(2) + "\n");
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("metrics CSV is empty");
  const int columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int workers = columns - 6;
  if (workers < 1 || line.rfind("k,simulated_time,", 0) != 0) throw ValidationError("metrics CSV has an unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (static_cast<int>(f.size()) != columns) throw ValidationError("metrics CSV row has the wrong column count");
    MetricsRecord r;
    r.k = std::stoll(f[0]);
    r.simulated_time = std::stod(f[1]);
    r.loss_avg = std::stod(f[2]);
    r.grad_norm_sq_avg = std::stod(f[3]);
    r.consensus_mk = std::stod(f[4]);
    r.max_staleness = std::stoi(f[5]);
    for (int w = 0; w < workers; ++w) r.worker_updates.push_back(std::stoll(f[6 + w]));
    out.push_back(std::move(r));
  }
  return out;
}

std::optional<double> time_to_target(const std::vector<MetricsRecord>& records, double target) {
  for (const auto& r : records)
    if (r.loss_avg <= target) return r.simulated_time;
  return std::nullopt;
}

std::optional<double> seconds_per_epoch(const std::vector<MetricsRecord>& records, double epoch_updates) {
  if (records.empty()) return std::nullopt;
  const auto& last = records.back();
  if (!(last.simulated_time > 0) || last.k <= 0) return std::nullopt;
  return last.simulated_time * epoch_updates / static_cast<double>(last.k);
}

namespace {

struct Stats {
  double mean = 0;
  double std = 0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

nlohmann::ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::ordered_json stats_json(const std::vector<double>& v) {
  const Stats s = stats(v);
  return {{"mean", json_number(s.mean)}, {"std", json_number(s.std)}, {"count", v.size()}};
}

}  // namespace

nlohmann::ordered_json summarize(const RunConfig& config, double gamma,
                                 const std::vector<std::pair<std::uint64_t, std::vector<MetricsRecord>>>& seeds,
                                 double epoch_updates_value) {
  nlohmann::ordered_json j;
  j["name"] = config.name;
  j["algorithm"] = to_string(config.algorithm);
  j["mode"] = config.mode == RunMode::kLogical ? "logical" : "simulate";
  j["gamma"] = gamma;
  j["epoch_updates"] = epoch_updates_value;
  if (config.target_loss) j["target_loss"] = *config.target_loss;

  std::vector<double> ttt, ttt_updates, spe, final_loss, final_grad;
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
  for (const auto& [seed, records] : seeds) {
    const auto& last = records.back();
    nlohmann::ordered_json s;
    s["seed"] = seed;
    s["final_k"] = last.k;
    s["final_time"] = json_number(last.simulated_time);
    s["final_loss"] = json_number(last.loss_avg);
    s["final_grad_norm_sq"] = json_number(last.grad_norm_sq_avg);
    s["max_staleness"] = last.max_staleness;
    final_loss.push_back(last.loss_avg);
    final_grad.push_back(last.grad_norm_sq_avg);
    const auto epoch = seconds_per_epoch(records, epoch_updates_value);
    s["seconds_per_epoch"] = epoch ? json_number(*epoch) : nlohmann::ordered_json(nullptr);
    if (epoch) spe.push_back(*epoch);
    if (config.target_loss) {
      const auto t = time_to_target(records, *config.target_loss);
      s["time_to_target"] = t && config.mode == RunMode::kSimulate ? json_number(*t) : nlohmann::ordered_json(nullptr);
      if (t && config.mode == RunMode::kSimulate) ttt.push_back(*t);
      std::optional<std::int64_t> k_hit;
      for (const auto& r : records)
        if (r.loss_avg <= *config.target_loss) {
          k_hit = r.k;
          break;
        }
      s["updates_to_target"] = k_hit ? nlohmann::ordered_json(*k_hit) : nlohmann::ordered_json(nullptr);
      if (k_hit) ttt_updates.push_back(static_cast<double>(*k_hit));
    }
    per_seed.push_back(std::move(s));
  }
  j["seeds"] = std::move(per_seed);
  j["final_loss"] = stats_json(final_loss);
  j["final_grad_norm_sq"] = stats_json(final_grad);
  j["seconds_per_epoch"] = spe.size() == seeds.size() ? stats_json(spe) : nlohmann::ordered_json(nullptr);
  if (config.target_loss) {
    j["time_to_target"] = !ttt.empty() && ttt.size() == seeds.size() ? stats_json(ttt) : nlohmann::ordered_json(nullptr);
    j["updates_to_target"] =
        ttt_updates.size() == seeds.size() ? stats_json(ttt_updates) : nlohmann::ordered_json(nullptr);
  }

  // Aggregate over the k values every seed recorded.
  std::map<std::int64_t, std::vector<const MetricsRecord*>> by_k;
  for (const auto& [seed, records] : seeds) {
    std::int64_t prev = -1;
    for (const auto& r : records) {
      if (r.k == prev) continue;
      by_k[r.k].push_back(&r);
      prev = r.k;
    }
  }
  nlohmann::ordered_json agg;
  std::vector<std::int64_t> ks;
  std::vector<double> loss_m, loss_s, grad_m, grad_s, mk_m, mk_s, time_m, time_s;
  for (const auto& [k, recs] : by_k) {
    if (recs.size() != seeds.size()) continue;
    std::vector<double> l, g, m, t;
    for (const auto* r : recs) {
      l.push_back(r->loss_avg);
      g.push_back(r->grad_norm_sq_avg);
      m.push_back(r->consensus_mk);
      t.push_back(r->simulated_time);
    }
    ks.push_back(k);
    const Stats sl = stats(l), sg = stats(g), sm = stats(m), st = stats(t);
    loss_m.push_back(sl.mean);
    loss_s.push_back(sl.std);
    grad_m.push_back(sg.mean);
    grad_s.push_back(sg.std);
    mk_m.push_back(sm.mean);
    mk_s.push_back(sm.std);
    time_m.push_back(st.mean);
    time_s.push_back(st.std);
  }
  auto arr = [](const std::vector<double>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (double x : v) a.push_back(json_number(x));
    return a;
  };
  agg["k"] = ks;
  agg["loss_mean"] = arr(loss_m);
  agg["loss_std"] = arr(loss_s);
  agg["grad_norm_sq_mean"] = arr(grad_m);
  agg["grad_norm_sq_std"] = arr(grad_s);
  agg["consensus_mean"] = arr(mk_m);
  agg["consensus_std"] = arr(mk_s);
  agg["time_mean"] = arr(time_m);
  agg["time_std"] = arr(time_s);
  j["matched"] = std::move(agg);
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepAxis parse_vary(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
    throw ValidationError("--vary expects key=v1,v2,... but got '" + spec + "'");
  SweepAxis axis;
  axis.key = spec.substr(0, eq);
  std::stringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    if (v.empty()) throw ValidationError("--vary '" + spec + "' has an empty value");
    axis.values.push_back(v);
  }
  return axis;
}

namespace {

std::string point_name(const std::vector<SweepAxis>& axes, const std::vector<std::string>& values) {
  std::string name;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    if (!name.empty()) name += "_";
    name += axes[a].key + "=" + values[a];
  }
  for (char& ch : name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '=' || ch == '.' || ch == '_' || ch == '-')) ch = '-';
  return name.empty() ? "base" : name;
}

std::string cell(const nlohmann::ordered_json& j) {
  if (j.is_null()) return "";
  if (j.is_number_float()) return format_double(j.get<double>());
  return j.dump();
}

nlohmann::ordered_json mean_of(const nlohmann::ordered_json& summary, const char* key) {
  if (!summary.contains(key) || summary[key].is_null()) return nullptr;
  return summary[key]["mean"];
}

}  // namespace

std::vector<SweepPoint> run_sweep(const YAML::Node& base, const std::vector<SweepAxis>& axes) {
  for (const auto& a : axes)
    if (a.values.empty()) throw ValidationError("sweep axis '" + a.key + "' has no values");
  std::vector<SweepPoint> points;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    YAML::Node doc = YAML::Clone(base);
    std::vector<std::string> values;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_override(doc, axes[a].key, axes[a].values[idx[a]]);
      values.push_back(axes[a].values[idx[a]]);
    }
    RunConfig config = parse_config(doc);
    config.name += "/" + point_name(axes, values);
    points.push_back(SweepPoint{values, run_experiment(config)});

    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) return points;
    }
    if (axes.empty()) return points;
  }
}

std::string sweep_table(const std::vector<SweepAxis>& axes, const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  for (const auto& a : axes) os << a.key << ',';
  os << "gamma,final_loss_mean,final_grad_norm_sq_mean,time_to_target_mean,updates_to_target_mean,"
        "seconds_per_epoch_mean,speedup\n";
  std::optional<double> reference;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& s = points[i].result.summary;
    for (const auto& v : points[i].values) os << v << ',';
    const auto ttt = mean_of(s, "time_to_target");
    std::optional<double> t;
    if (!ttt.is_null()) t = ttt.get<double>();
    if (i == 0) reference = t;
    os << format_double(points[i].result.gamma) << ',' << cell(mean_of(s, "final_loss")) << ','
       << cell(mean_of(s, "final_grad_norm_sq")) << ',' << cell(ttt) << ',' << cell(mean_of(s, "updates_to_target"))
       << ',' << cell(mean_of(s, "seconds_per_epoch")) << ',';
    if (reference && t && *t > 0) os << format_double(*reference / *t);
    os << '\n';
  }
  return os.str();
}

std::string run_sweep_to(const YAML::Node& base, const std::vector<SweepAxis>& axes, const std::string& dir) {
  const auto points = run_sweep(base, axes);
  for (const auto& p : points)
    write_experiment(p.result, (fs::path(dir) / point_name(axes, p.values)).string());
  const std::string table = sweep_table(axes, points);
  write_file_atomic((fs::path(dir) / "sweep.csv").string(), table);
  return table;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

std::vector<std::uint64_t> seed_range(int count) {
  std::vector<std::uint64_t> s(count);
  for (int i = 0; i < count; ++i) s[i] = static_cast<std::uint64_t>(i + 1);
  return s;
}

Preset consistency_sgd() {
  RunConfig base;
  base.mode = RunMode::kLogical;
  base.topology.kind = "ring";
  base.topology.n = 1;
  base.problem.kind = "quadratic";
  base.problem.dimension = 10;
  base.problem.condition = 10;
  base.problem.samples = 100;
  base.problem.noise = 1.0;
  base.problem.seed = 11;
  base.gamma.value = 0.05;
  base.staleness_mode = StalenessMode::kZero;
  base.iterations = 10000;
  base.record_every = 1;
  base.seeds = {2017};
  base.init = InitSpec{"constant", 1.0, 0, false};

  Preset p{"consistency-sgd", "single-worker AD-PSGD with T = 0 against serial SGD, same seed", {}};
  RunConfig a = base;
  a.name = "consistency-sgd/adpsgd";
  a.algorithm = Algorithm::kAdpsgd;
  RunConfig s = base;
  s.name = "consistency-sgd/sgd";
  s.algorithm = Algorithm::kSgd;
  p.runs.push_back({"adpsgd", "consistency", a});
  p.runs.push_back({"sgd", "consistency", s});
  return p;
}

RunConfig rate_base() {
  RunConfig c;
  c.algorithm = Algorithm::kAdpsgd;
  c.mode = RunMode::kLogical;
  c.topology.kind = "ring";
  c.topology.n = 8;
  c.problem.kind = "quadratic";
  c.problem.dimension = 20;
  c.problem.condition = 1.5;
  c.problem.samples = 200;
  c.problem.noise = 225;
  c.problem.seed = 3;
  c.init = InitSpec{"constant", 300.0, 0, false};
  c.seeds = seed_range(10);
  // The targets carry i.i.d. noise around a shared A, so the sample-gradient spread is the same at every model
  // and can be written into the config exactly.
  const Problem problem = build_problem(c.problem);
  const DataPartition shared = partition_data(problem, Vector::Ones(1), PartitionStrategy::kShared);
  c.gamma.sigma_sq = exact_variances(problem, shared, Vector::Zero(c.problem.dimension)).sigma_sq;
  c.gamma.varsigma_sq = 0.0;
  return c;
}

Preset convergence_rate() {
  Preset p{"convergence-rate", "8-worker ring on a noisy shared quadratic, corollary step sizes at K and 4K", {}};
  const std::int64_t k0 = 2500000;
  for (int mult : {1, 4}) {
    RunConfig c = rate_base();
    c.name = fmt::format("convergence-rate/K{}", mult);
    c.iterations = k0 * mult;
    c.record_every = c.iterations / 100;
    c.gamma.value.reset();
    c.gamma.K = c.iterations;
    p.runs.push_back({mult == 1 ? "K" : "4K", "rate", c});
  }
  return p;
}

RunConfig speedup_base(int n) {
  RunConfig c;
  c.algorithm = Algorithm::kAdpsgd;
  c.mode = RunMode::kSimulate;
  c.topology.kind = "ring";
  c.topology.n = n;
  c.problem.kind = "quadratic";
  c.problem.dimension = 20;
  c.problem.condition = 4;
  c.problem.samples = 200;
  c.problem.noise = 1.0;
  c.problem.seed = 5;
  c.init = InitSpec{"constant", 3.0, 0, false};
  c.gamma.value.reset();
  c.gamma.K = 20000;
  c.iterations = 200000;
  c.record_every = 1;
  c.speed.compute_time = {1.0};
  c.speed.link_time = 0.001;
  c.target_gap = 1.0;
  c.trace = false;
  c.seeds = seed_range(10);
  return c;
}

Preset linear_speedup() {
  Preset p{"linear-speedup", "compute-bound simulation, n in {1,2,4,8}, corollary step size, time to a target loss", {}};
  for (int n : {1, 2, 4, 8}) {
    RunConfig c = speedup_base(n);
    c.name = fmt::format("linear-speedup/n{}", n);
    p.runs.push_back({fmt::format("n{}", n), "adpsgd", c});
  }
  return p;
}

Preset straggler() {
  Preset p{"straggler", "16-worker ring with one worker slowed 1x, 2x, 10x, 100x; AD-PSGD against AllReduce and D-PSGD", {}};
  for (Algorithm algo : {Algorithm::kAdpsgd, Algorithm::kAllreduce, Algorithm::kDpsgd}) {
    for (double factor : {1.0, 2.0, 10.0, 100.0}) {
      RunConfig c;
      c.algorithm = algo;
      c.mode = RunMode::kSimulate;
      c.topology.kind = "ring";
      c.topology.n = 16;
      c.problem.kind = "quadratic";
      c.problem.dimension = 20;
      c.problem.condition = 4;
      c.problem.samples = 200;
      c.problem.noise = 1.0;
      c.problem.seed = 9;
      c.gamma.value = 0.01;
      c.horizon = 2000;
      c.iterations = 100000000;
      c.record_every = 1000;
      c.speed.compute_time = {1.0};
      c.speed.link_time = 0.01;
      c.speed.allreduce_alpha = 0.001;
      c.speed.allreduce_beta = 0;
      if (factor > 1) c.speed.slowdowns.push_back(Slowdown{Slowdown::Target::kWorker, 5, Edge(), factor, 0.0});
      c.trace = false;
      c.seeds = {1};
      const std::string label = fmt::format("{}_x{}", to_string(algo), static_cast<int>(factor));
      c.name = "straggler/" + label;
      p.runs.push_back({label, to_string(algo), c});
    }
  }
  return p;
}

Preset consensus_decay() {
  RunConfig c;
  c.name = "consensus-decay/ring5";
  c.algorithm = Algorithm::kAdpsgd;
  c.mode = RunMode::kLogical;
  c.topology.kind = "ring";
  c.topology.n = 5;
  c.problem.kind = "quadratic";
  c.problem.dimension = 4;
  c.problem.condition = 1;
  c.problem.samples = 10;
  c.problem.noise = 0;
  c.gamma.value = 1e-12;
  c.iterations = 100;
  c.record_every = 1;
  c.init = InitSpec{"gaussian", 1.0, 3, true};
  c.seeds = seed_range(10);
  return Preset{"consensus-decay", "pairwise averaging on a 5-worker ring from distinct starting models",
                {{"ring5", "consensus", c}}};
}

Preset theory_grid() {
  Preset p{"theory-grid", "corollary step sizes over (n, M, T) on rings; summaries carry the theory report", {}};
  for (int n : {2, 4, 8, 16}) {
    for (int m : {1, 8}) {
      for (int t : {0, 8}) {
        RunConfig c;
        c.algorithm = Algorithm::kAdpsgd;
        c.mode = RunMode::kLogical;
        c.topology.kind = "ring";
        c.topology.n = n;
        c.problem.kind = "quadratic";
        c.problem.dimension = 5;
        c.problem.condition = 2;
        c.problem.samples = 50;
        c.problem.noise = 1.0;
        c.problem.seed = 1;
        c.batch = m;
        c.staleness_mode = t == 0 ? StalenessMode::kZero : StalenessMode::kFixed;
        c.staleness = t;
        c.iterations = 2000;
        c.record_every = 100;
        c.gamma.value.reset();
        c.seeds = {1};
        const std::string label = fmt::format("n{}_M{}_T{}", n, m, t);
        c.name = "theory-grid/" + label;
        p.runs.push_back({label, "grid", c});
      }
    }
  }
  return p;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"consistency-sgd", "convergence-rate", "linear-speedup", "straggler", "consensus-decay", "theory-grid"};
}

Preset make_preset(const std::string& name) {
  if (name == "consistency-sgd") return consistency_sgd();
  if (name == "convergence-rate") return convergence_rate();
  if (name == "linear-speedup") return linear_speedup();
  if (name == "straggler") return straggler();
  if (name == "consensus-decay") return consensus_decay();
  if (name == "theory-grid") return theory_grid();
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw ValidationError("unknown preset '" + name + "' (known presets: " + list + ")");
}

void emit_preset(const Preset& preset, const std::string& dir) {
  for (const auto& run : preset.runs)
    write_file_atomic((fs::path(dir) / (run.label + ".yaml")).string(), emit_config(run.config));
}

std::vector<PresetRow> run_preset(const Preset& preset) {
  std::vector<PresetRow> rows;
  for (const auto& run : preset.runs) rows.push_back(PresetRow{run.group, run.label, run_experiment(run.config)});
  return rows;
}

std::string preset_table(const std::vector<PresetRow>& rows) {
  std::ostringstream os;
  os << "group,label,algorithm,gamma,seconds_per_epoch,epoch_time_ratio,time_to_target,speedup,final_loss,"
        "final_grad_norm_sq\n";
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> reference;
  for (const auto& row : rows) {
    const auto& s = row.result.summary;
    std::optional<double> epoch, ttt;
    if (const auto e = mean_of(s, "seconds_per_epoch"); !e.is_null()) epoch = e.get<double>();
    if (const auto t = mean_of(s, "time_to_target"); !t.is_null()) ttt = t.get<double>();
    if (!reference.count(row.group)) reference[row.group] = {epoch, ttt};
    const auto& [ref_epoch, ref_ttt] = reference[row.group];
    os << row.group << ',' << row.label << ',' << to_string(row.result.config.algorithm) << ','
       << format_double(row.result.gamma) << ',' << (epoch ? format_double(*epoch) : "") << ',';
    if (epoch && ref_epoch && *ref_epoch > 0) os << format_double(*epoch / *ref_epoch);
    os << ',' << (ttt ? format_double(*ttt) : "") << ',';
    if (ttt && ref_ttt && *ttt > 0) os << format_double(*ref_ttt / *ttt);
    os << ',' << cell(mean_of(s, "final_loss")) << ',' << cell(mean_of(s, "final_grad_norm_sq")) << '\n';
  }
  return os.str();
}

void write_preset_results(const std::vector<PresetRow>& rows, const std::string& dir) {
  for (const auto& row : rows) write_experiment(row.result, (fs::path(dir) / row.label).string());
  write_file_atomic((fs::path(dir) / "table.csv").string(), preset_table(rows));
}

}  // namespace adpsgd
