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

#include "adpsgd/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "adpsgd/metrics.hpp"

namespace adpsgd {

namespace {

std::string where(const YAML::Node& node) {
  const YAML::Mark m = node.Mark();
  if (m.is_null()) return "config";
  return fmt::format("config line {}, column {}", m.line + 1, m.column + 1);
}

[[noreturn]] void fail(const YAML::Node& node, const std::string& message) {
  throw ConfigError(where(node) + ": " + message);
}

void require_map(const YAML::Node& node, const std::string& section) {
  if (!node.IsMap()) fail(node, "'" + section + "' must be a mapping");
}

void check_keys(const YAML::Node& map, std::initializer_list<const char*> allowed, const std::string& section) {
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (auto it = map.begin(); it != map.end(); ++it) {
    const auto key = it->first.as<std::string>();
    if (!keys.count(key)) {
      std::string list;
      for (const auto& k : keys) list += (list.empty() ? "" : ", ") + k;
      fail(it->first, "unknown key '" + key + "' in " + section + " (allowed: " + list + ")");
    }
  }
}

template <typename T>
T as(const YAML::Node& node, const std::string& what) {
  if (!node.IsScalar()) fail(node, what + " must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::BadConversion&) {
    fail(node, what + " has an invalid value '" + node.Scalar() + "'");
  }
}

double as_real(const YAML::Node& node, const std::string& what) {
  if (node.IsScalar()) {
    const std::string s = node.Scalar();
    if (s == "inf" || s == ".inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  return as<double>(node, what);
}

template <typename T>
void read(const YAML::Node& map, const char* key, T& out, const std::string& section) {
  if (const YAML::Node n = map[key]) out = as<T>(n, section + "." + key);
}

void read_real(const YAML::Node& map, const char* key, double& out, const std::string& section) {
  if (const YAML::Node n = map[key]) out = as_real(n, section + "." + key);
}

std::vector<double> real_list(const YAML::Node& node, const std::string& what) {
  std::vector<double> out;
  if (node.IsScalar()) {
    out.push_back(as_real(node, what));
  } else if (node.IsSequence()) {
    for (const auto& item : node) out.push_back(as_real(item, what));
  } else {
    fail(node, what + " must be a number or a list of numbers");
  }
  return out;
}

Edge parse_edge(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence() || node.size() != 2) fail(node, what + " must be a pair [u, v]");
  const int u = as<int>(node[0], what);
  const int v = as<int>(node[1], what);
  if (u == v) fail(node, what + " must join two different workers");
  return Edge(u, v);
}

void parse_topology(const YAML::Node& node, TopologySpec& t) {
  require_map(node, "topology");
  check_keys(node, {"kind", "n", "mode", "path", "policy"}, "topology");
  read(node, "kind", t.kind, "topology");
  if (t.kind != "ring" && t.kind != "skip_ring" && t.kind != "complete" && t.kind != "file")
    fail(node["kind"], "topology.kind must be ring, skip_ring, complete or file");
  read(node, "n", t.n, "topology");
  if (t.n < 1) fail(node["n"], "topology.n must be >= 1");
  if (const YAML::Node m = node["mode"]) {
    const auto s = as<std::string>(m, "topology.mode");
    if (s == "all_offsets") {
      t.skip_ring_mode = SkipRingMode::kAllOffsets;
    } else if (s == "bipartite") {
      t.skip_ring_mode = SkipRingMode::kBipartite;
    } else {
      fail(m, "topology.mode must be all_offsets or bipartite");
    }
  }
  read(node, "path", t.path, "topology");
  if (t.kind == "file" && t.path.empty()) fail(node, "topology.path is required when kind is file");
  if (const YAML::Node p = node["policy"]) {
    if (!(p.IsScalar() && p.Scalar() == "uniform")) {
      t.policy_weights = real_list(p, "topology.policy");
      for (double w : t.policy_weights)
        if (!(w >= 0)) fail(p, "topology.policy weights must be nonnegative");
    }
  }
}

void parse_problem(const YAML::Node& node, ProblemSpec& p) {
  require_map(node, "problem");
  check_keys(node,
             {"kind", "dimension", "condition", "samples", "noise", "matrix_noise", "l2", "label_noise", "data",
              "hidden", "seed"},
             "problem");
  read(node, "kind", p.kind, "problem");
  if (p.kind != "quadratic" && p.kind != "logistic" && p.kind != "mlp")
    fail(node["kind"], "problem.kind must be quadratic, logistic or mlp");
  read(node, "dimension", p.dimension, "problem");
  read_real(node, "condition", p.condition, "problem");
  read(node, "samples", p.samples, "problem");
  read_real(node, "noise", p.noise, "problem");
  read_real(node, "matrix_noise", p.matrix_noise, "problem");
  read_real(node, "l2", p.l2, "problem");
  read_real(node, "label_noise", p.label_noise, "problem");
  read(node, "data", p.data_path, "problem");
  read(node, "hidden", p.hidden, "problem");
  read(node, "seed", p.seed, "problem");
  if (p.dimension < 1) fail(node["dimension"], "problem.dimension must be >= 1");
  if (!(p.condition >= 1)) fail(node["condition"], "problem.condition must be >= 1");
  if (p.samples < 1) fail(node["samples"], "problem.samples must be >= 1");
  if (!(p.noise >= 0) || !(p.matrix_noise >= 0) || !(p.l2 >= 0))
    fail(node, "problem noise levels and l2 must be nonnegative");
  if (p.hidden < 1) fail(node["hidden"], "problem.hidden must be >= 1");
}

void parse_gamma(const YAML::Node& root, GammaSpec& g) {
  const YAML::Node node = root["gamma"];
  if (node) {
    if (node.IsScalar() && node.Scalar() == "corollary") {
      g.value.reset();
    } else {
      g.value = as<double>(node, "gamma");
      if (!(*g.value > 0) || !std::isfinite(*g.value)) fail(node, "gamma must be positive and finite");
    }
  }
  if (const YAML::Node c = root["corollary"]) {
    require_map(c, "corollary");
    check_keys(c, {"K", "sigma_sq", "varsigma_sq", "lipschitz", "scale"}, "corollary");
    if (c["K"]) {
      g.K = as<std::int64_t>(c["K"], "corollary.K");
      if (*g.K < 1) fail(c["K"], "corollary.K must be >= 1");
    }
    if (c["sigma_sq"]) g.sigma_sq = as_real(c["sigma_sq"], "corollary.sigma_sq");
    if (c["varsigma_sq"]) g.varsigma_sq = as_real(c["varsigma_sq"], "corollary.varsigma_sq");
    if (c["lipschitz"]) g.lipschitz = as_real(c["lipschitz"], "corollary.lipschitz");
    read_real(c, "scale", g.scale, "corollary");
    if (!(g.scale > 0)) fail(c, "corollary.scale must be positive");
    if ((g.sigma_sq && !(*g.sigma_sq >= 0)) || (g.varsigma_sq && !(*g.varsigma_sq >= 0)) ||
        (g.lipschitz && !(*g.lipschitz > 0)))
      fail(c, "corollary noise levels must be >= 0 and lipschitz > 0");
  }
}

Slowdown parse_slowdown(const YAML::Node& node) {
  require_map(node, "speed.slowdowns entry");
  check_keys(node, {"worker", "edge", "factor", "start", "end"}, "speed.slowdowns entry");
  Slowdown s;
  if (node["worker"] && node["edge"]) fail(node, "a slowdown targets either a worker or an edge, not both");
  if (node["worker"]) {
    s.target = Slowdown::Target::kWorker;
    s.worker = as<int>(node["worker"], "slowdown worker");
  } else if (node["edge"]) {
    s.target = Slowdown::Target::kEdge;
    s.edge = parse_edge(node["edge"], "slowdown edge");
  } else {
    fail(node, "a slowdown needs a worker or an edge");
  }
  if (!node["factor"]) fail(node, "a slowdown needs a factor");
  s.factor = as_real(node["factor"], "slowdown factor");
  read_real(node, "start", s.start, "slowdown");
  read_real(node, "end", s.end, "slowdown");
  if (!(s.factor >= 1)) fail(node["factor"], "slowdown factor must be >= 1");
  if (!(s.end >= s.start)) fail(node, "slowdown end must be >= start");
  return s;
}

void parse_speed(const YAML::Node& node, SpeedSpec& s) {
  require_map(node, "speed");
  check_keys(node, {"compute_time", "link_time", "links", "slowdowns", "allreduce_alpha", "allreduce_beta"}, "speed");
  if (const YAML::Node c = node["compute_time"]) {
    s.compute_time = real_list(c, "speed.compute_time");
    for (double v : s.compute_time)
      if (!(v > 0) || !std::isfinite(v)) fail(c, "speed.compute_time entries must be positive and finite");
  }
  read_real(node, "link_time", s.link_time, "speed");
  if (!(s.link_time >= 0) || !std::isfinite(s.link_time)) fail(node["link_time"], "speed.link_time must be >= 0");
  if (const YAML::Node links = node["links"]) {
    if (!links.IsSequence()) fail(links, "speed.links must be a list");
    for (const auto& l : links) {
      require_map(l, "speed.links entry");
      check_keys(l, {"edge", "time"}, "speed.links entry");
      if (!l["edge"] || !l["time"]) fail(l, "speed.links entries need edge and time");
      const double t = as_real(l["time"], "link time");
      if (!(t >= 0) || !std::isfinite(t)) fail(l["time"], "link time must be >= 0");
      s.link_overrides.emplace_back(parse_edge(l["edge"], "link edge"), t);
    }
  }
  if (const YAML::Node sl = node["slowdowns"]) {
    if (!sl.IsSequence()) fail(sl, "speed.slowdowns must be a list");
    for (const auto& item : sl) s.slowdowns.push_back(parse_slowdown(item));
  }
  read_real(node, "allreduce_alpha", s.allreduce_alpha, "speed");
  read_real(node, "allreduce_beta", s.allreduce_beta, "speed");
  if (!(s.allreduce_alpha >= 0) || !(s.allreduce_beta >= 0)) fail(node, "allreduce costs must be >= 0");
}

}  // namespace

YAML::Node load_config_node(const std::string& path) {
  try {
    return YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file '" + path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}: config line {}, column {}: {}", path, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
}

RunConfig parse_config(const YAML::Node& root) {
  if (!root || !root.IsMap()) throw ConfigError("config: top level must be a mapping");
  check_keys(root,
             {"name", "algorithm", "mode", "topology", "problem", "partition", "gamma", "corollary", "batch",
              "staleness", "iterations", "horizon", "seeds", "record_every", "init", "speed", "simulation",
              "target_loss", "target_gap", "output"},
             "config");
  RunConfig c;
  read(root, "name", c.name, "config");
  if (const YAML::Node a = root["algorithm"]) {
    try {
      c.algorithm = algorithm_from_string(as<std::string>(a, "algorithm"));
    } catch (const ConfigError&) {
      throw;
    } catch (const ValidationError& e) {
      fail(a, e.what());
    }
  }
  if (const YAML::Node m = root["mode"]) {
    const auto s = as<std::string>(m, "mode");
    if (s == "logical") {
      c.mode = RunMode::kLogical;
    } else if (s == "simulate") {
      c.mode = RunMode::kSimulate;
    } else {
      fail(m, "mode must be logical or simulate");
    }
  }
  if (root["topology"]) parse_topology(root["topology"], c.topology);
  if (root["problem"]) parse_problem(root["problem"], c.problem);
  if (const YAML::Node p = root["partition"]) {
    require_map(p, "partition");
    check_keys(p, {"strategy", "shuffle_seed"}, "partition");
    if (p["strategy"]) {
      const auto s = as<std::string>(p["strategy"], "partition.strategy");
      if (s == "shared") {
        c.partition.strategy = PartitionStrategy::kShared;
      } else if (s == "split") {
        c.partition.strategy = PartitionStrategy::kSplit;
      } else {
        fail(p["strategy"], "partition.strategy must be shared or split");
      }
    }
    read(p, "shuffle_seed", c.partition.shuffle_seed, "partition");
  }
  parse_gamma(root, c.gamma);
  read(root, "batch", c.batch, "config");
  if (c.batch < 1) fail(root["batch"], "batch must be >= 1");
  if (const YAML::Node s = root["staleness"]) {
    require_map(s, "staleness");
    check_keys(s, {"mode", "tau"}, "staleness");
    if (s["mode"]) {
      const auto m = as<std::string>(s["mode"], "staleness.mode");
      if (m == "zero") {
        c.staleness_mode = StalenessMode::kZero;
      } else if (m == "fixed") {
        c.staleness_mode = StalenessMode::kFixed;
      } else if (m == "uniform") {
        c.staleness_mode = StalenessMode::kUniform;
      } else {
        fail(s["mode"], "staleness.mode must be zero, fixed or uniform");
      }
    }
    read(s, "tau", c.staleness, "staleness");
    if (c.staleness < 0) fail(s["tau"], "staleness.tau must be >= 0");
  }
  read(root, "iterations", c.iterations, "config");
  if (c.iterations < 1) fail(root["iterations"], "iterations must be >= 1");
  if (root["horizon"]) c.horizon = as_real(root["horizon"], "horizon");
  if (!(c.horizon > 0)) fail(root["horizon"], "horizon must be positive");
  if (const YAML::Node s = root["seeds"]) {
    c.seeds.clear();
    if (s.IsScalar()) {
      c.seeds.push_back(as<std::uint64_t>(s, "seeds"));
    } else if (s.IsSequence()) {
      for (const auto& item : s) c.seeds.push_back(as<std::uint64_t>(item, "seeds"));
    } else {
      fail(s, "seeds must be an integer or a list of integers");
    }
    if (c.seeds.empty()) fail(s, "seeds must not be empty");
  }
  read(root, "record_every", c.record_every, "config");
  if (c.record_every < 1) fail(root["record_every"], "record_every must be >= 1");
  if (const YAML::Node i = root["init"]) {
    require_map(i, "init");
    check_keys(i, {"kind", "value", "seed", "per_worker"}, "init");
    read(i, "kind", c.init.kind, "init");
    if (c.init.kind != "zeros" && c.init.kind != "constant" && c.init.kind != "gaussian")
      fail(i["kind"], "init.kind must be zeros, constant or gaussian");
    read_real(i, "value", c.init.value, "init");
    read(i, "seed", c.init.seed, "init");
    read(i, "per_worker", c.init.per_worker, "init");
    if (c.init.per_worker && c.init.kind != "gaussian") fail(i, "init.per_worker needs kind gaussian");
  }
  if (root["speed"]) parse_speed(root["speed"], c.speed);
  if (const YAML::Node s = root["simulation"]) {
    require_map(s, "simulation");
    check_keys(s, {"exchange", "compensation", "trace"}, "simulation");
    if (s["exchange"]) {
      const auto e = as<std::string>(s["exchange"], "simulation.exchange");
      if (e == "bipartite") {
        c.exchange = ExchangeMode::kBipartite;
      } else if (e == "serialized") {
        c.exchange = ExchangeMode::kSerialized;
      } else {
        fail(s["exchange"], "simulation.exchange must be bipartite or serialized");
      }
    }
    read(s, "compensation", c.compensation, "simulation");
    read(s, "trace", c.trace, "simulation");
  }
  if (const YAML::Node t = root["target_loss"]) {
    c.target_loss = as_real(t, "target_loss");
    if (!std::isfinite(*c.target_loss)) fail(t, "target_loss must be finite");
  }
  if (const YAML::Node t = root["target_gap"]) {
    c.target_gap = as_real(t, "target_gap");
    if (!(*c.target_gap >= 0) || !std::isfinite(*c.target_gap)) fail(t, "target_gap must be finite and >= 0");
    if (c.target_loss) fail(t, "give target_loss or target_gap, not both");
  }
  read(root, "output", c.output_dir, "config");

  if (c.mode == RunMode::kSimulate && c.algorithm != Algorithm::kAdpsgd && c.algorithm != Algorithm::kAllreduce &&
      c.algorithm != Algorithm::kDpsgd) {
    fail(root["algorithm"] ? root["algorithm"] : root, "simulate mode supports adpsgd, allreduce and dpsgd only");
  }
  if (c.speed.compute_time.size() != 1 && static_cast<int>(c.speed.compute_time.size()) != c.topology.n &&
      c.topology.kind != "file") {
    fail(root["speed"], "speed.compute_time needs one entry or one per worker");
  }
  if (!c.topology.policy_weights.empty() && static_cast<int>(c.topology.policy_weights.size()) != c.topology.n &&
      c.topology.kind != "file") {
    fail(root["topology"], "topology.policy needs one weight per worker");
  }
  if (c.init.per_worker && (c.mode != RunMode::kLogical ||
                            (c.algorithm != Algorithm::kAdpsgd && c.algorithm != Algorithm::kDpsgd))) {
    fail(root["init"], "init.per_worker is supported for logical adpsgd and dpsgd runs only");
  }
  if (c.mode == RunMode::kSimulate && !std::isfinite(c.horizon) && !c.target_loss && !c.target_gap && !root["iterations"]) {
    fail(root, "simulate mode needs a finite horizon, iterations or target_loss");
  }
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("config line {}, column {}: {}", e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  return parse_config(root);
}

RunConfig load_config(const std::string& path) {
  try {
    return parse_config(load_config_node(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

namespace {

std::string real(double v) { return format_double(v); }

void emit_edge(YAML::Emitter& out, const Edge& e) {
  out << YAML::Flow << YAML::BeginSeq << e.u << e.v << YAML::EndSeq;
}

const char* strategy_name(PartitionStrategy s) { return s == PartitionStrategy::kShared ? "shared" : "split"; }

const char* staleness_name(StalenessMode m) {
  switch (m) {
    case StalenessMode::kZero:
      return "zero";
    case StalenessMode::kFixed:
      return "fixed";
    case StalenessMode::kUniform:
      return "uniform";
  }
  return "zero";
}

}  // namespace

std::string emit_config(const RunConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "algorithm" << YAML::Value << to_string(c.algorithm);
  out << YAML::Key << "mode" << YAML::Value << (c.mode == RunMode::kLogical ? "logical" : "simulate");

  out << YAML::Key << "topology" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << c.topology.kind;
  out << YAML::Key << "n" << YAML::Value << c.topology.n;
  if (c.topology.kind == "skip_ring")
    out << YAML::Key << "mode" << YAML::Value
        << (c.topology.skip_ring_mode == SkipRingMode::kAllOffsets ? "all_offsets" : "bipartite");
  if (!c.topology.path.empty()) out << YAML::Key << "path" << YAML::Value << c.topology.path;
  if (c.topology.policy_weights.empty()) {
    out << YAML::Key << "policy" << YAML::Value << "uniform";
  } else {
    out << YAML::Key << "policy" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double w : c.topology.policy_weights) out << real(w);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;

  const auto& p = c.problem;
  out << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << p.kind;
  out << YAML::Key << "dimension" << YAML::Value << p.dimension;
  out << YAML::Key << "condition" << YAML::Value << real(p.condition);
  out << YAML::Key << "samples" << YAML::Value << p.samples;
  out << YAML::Key << "noise" << YAML::Value << real(p.noise);
  out << YAML::Key << "matrix_noise" << YAML::Value << real(p.matrix_noise);
  out << YAML::Key << "l2" << YAML::Value << real(p.l2);
  out << YAML::Key << "label_noise" << YAML::Value << real(p.label_noise);
  if (!p.data_path.empty()) out << YAML::Key << "data" << YAML::Value << p.data_path;
  out << YAML::Key << "hidden" << YAML::Value << p.hidden;
  out << YAML::Key << "seed" << YAML::Value << p.seed;
  out << YAML::EndMap;

  out << YAML::Key << "partition" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "strategy" << YAML::Value << strategy_name(c.partition.strategy);
  out << YAML::Key << "shuffle_seed" << YAML::Value << c.partition.shuffle_seed;
  out << YAML::EndMap;

  if (c.gamma.value) {
    out << YAML::Key << "gamma" << YAML::Value << real(*c.gamma.value);
  } else {
    out << YAML::Key << "gamma" << YAML::Value << "corollary";
  }
  if (c.gamma.K || c.gamma.sigma_sq || c.gamma.varsigma_sq || c.gamma.lipschitz || c.gamma.scale != 1) {
    out << YAML::Key << "corollary" << YAML::Value << YAML::BeginMap;
    if (c.gamma.K) out << YAML::Key << "K" << YAML::Value << *c.gamma.K;
    if (c.gamma.sigma_sq) out << YAML::Key << "sigma_sq" << YAML::Value << real(*c.gamma.sigma_sq);
    if (c.gamma.varsigma_sq) out << YAML::Key << "varsigma_sq" << YAML::Value << real(*c.gamma.varsigma_sq);
    if (c.gamma.lipschitz) out << YAML::Key << "lipschitz" << YAML::Value << real(*c.gamma.lipschitz);
    if (c.gamma.scale != 1) out << YAML::Key << "scale" << YAML::Value << real(c.gamma.scale);
    out << YAML::EndMap;
  }

  out << YAML::Key << "batch" << YAML::Value << c.batch;
  out << YAML::Key << "staleness" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << staleness_name(c.staleness_mode);
  out << YAML::Key << "tau" << YAML::Value << c.staleness;
  out << YAML::EndMap;
  out << YAML::Key << "iterations" << YAML::Value << c.iterations;
  out << YAML::Key << "horizon" << YAML::Value << real(c.horizon);
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto s : c.seeds) out << s;
  out << YAML::EndSeq;
  out << YAML::Key << "record_every" << YAML::Value << c.record_every;

  out << YAML::Key << "init" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << c.init.kind;
  out << YAML::Key << "value" << YAML::Value << real(c.init.value);
  out << YAML::Key << "seed" << YAML::Value << c.init.seed;
  if (c.init.per_worker) out << YAML::Key << "per_worker" << YAML::Value << true;
  out << YAML::EndMap;

  const auto& s = c.speed;
  out << YAML::Key << "speed" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "compute_time" << YAML::Value;
  if (s.compute_time.size() == 1) {
    out << real(s.compute_time[0]);
  } else {
    out << YAML::Flow << YAML::BeginSeq;
    for (double v : s.compute_time) out << real(v);
    out << YAML::EndSeq;
  }
  out << YAML::Key << "link_time" << YAML::Value << real(s.link_time);
  if (!s.link_overrides.empty()) {
    out << YAML::Key << "links" << YAML::Value << YAML::BeginSeq;
    for (const auto& [e, t] : s.link_overrides) {
      out << YAML::BeginMap << YAML::Key << "edge" << YAML::Value;
      emit_edge(out, e);
      out << YAML::Key << "time" << YAML::Value << real(t) << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  if (!s.slowdowns.empty()) {
    out << YAML::Key << "slowdowns" << YAML::Value << YAML::BeginSeq;
    for (const auto& sl : s.slowdowns) {
      out << YAML::BeginMap;
      if (sl.target == Slowdown::Target::kWorker) {
        out << YAML::Key << "worker" << YAML::Value << sl.worker;
      } else {
        out << YAML::Key << "edge" << YAML::Value;
        emit_edge(out, sl.edge);
      }
      out << YAML::Key << "factor" << YAML::Value << real(sl.factor);
      out << YAML::Key << "start" << YAML::Value << real(sl.start);
      out << YAML::Key << "end" << YAML::Value << real(sl.end);
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  out << YAML::Key << "allreduce_alpha" << YAML::Value << real(s.allreduce_alpha);
  out << YAML::Key << "allreduce_beta" << YAML::Value << real(s.allreduce_beta);
  out << YAML::EndMap;

  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "exchange" << YAML::Value << (c.exchange == ExchangeMode::kBipartite ? "bipartite" : "serialized");
  out << YAML::Key << "compensation" << YAML::Value << c.compensation;
  out << YAML::Key << "trace" << YAML::Value << c.trace;
  out << YAML::EndMap;

  if (c.target_loss) out << YAML::Key << "target_loss" << YAML::Value << real(*c.target_loss);
  if (c.target_gap) out << YAML::Key << "target_gap" << YAML::Value << real(*c.target_gap);
  if (!c.output_dir.empty()) out << YAML::Key << "output" << YAML::Value << c.output_dir;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

namespace {

void set_path(YAML::Node node, const std::vector<std::string>& parts, std::size_t i, const YAML::Node& value) {
  if (i + 1 == parts.size()) {
    node[parts[i]] = value;
    return;
  }
  if (!node[parts[i]] || !node[parts[i]].IsMap()) node[parts[i]] = YAML::Node(YAML::NodeType::Map);
  set_path(node[parts[i]], parts, i + 1, value);
}

}  // namespace

void apply_override(YAML::Node& root, const std::string& dotted_key, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted_key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + dotted_key + "' has an empty component");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("override key must not be empty");
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("override " + dotted_key + "=" + value + ": " + e.msg);
  }
  set_path(root, parts, 0, parsed);
}

std::string resolve_output_dir(const RunConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "out";
}

}  // namespace adpsgd
