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

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "adpsgd/experiment.hpp"
#include "json.hpp"

namespace adpsgd {
namespace {

namespace fs = std::filesystem;

const std::string kData = ADPSGD_TEST_DATA_DIR;
const std::string kCli = ADPSGD_CLI_PATH;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("adpsgd_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Minimal CSV reader kept separate from the library's parser.
std::vector<std::map<std::string, double>> read_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::map<std::string, double> row;
    for (const auto& h : header) {
      std::getline(ss, cell, ',');
      row[h] = std::stod(cell);
    }
    rows.push_back(row);
  }
  return rows;
}

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(ConsensusMk, HandValues) {
  ModelMatrix same = ModelMatrix::Constant(3, 4, 2.5);
  EXPECT_EQ(consensus_distance(same, Vector::Constant(4, 0.25)), 0.0);
  ModelMatrix two(1, 2);
  two << 0, 2;
  EXPECT_DOUBLE_EQ(consensus_distance(two, Vector::Constant(2, 0.5)), 1.0);
  ModelMatrix one = ModelMatrix::Constant(5, 1, 7.0);
  EXPECT_EQ(consensus_distance(one, Vector::Ones(1)), 0.0);
  EXPECT_THROW(consensus_distance(two, Vector::Ones(3)), ValidationError);
}

TEST(Config, ParsesFileAndDefaults) {
  const RunConfig c = load_config(kData + "/small_run.yaml");
  EXPECT_EQ(c.name, "small");
  EXPECT_EQ(c.algorithm, Algorithm::kAdpsgd);
  EXPECT_EQ(c.mode, RunMode::kLogical);
  EXPECT_EQ(c.topology.n, 4);
  EXPECT_EQ(c.problem.dimension, 3);
  ASSERT_TRUE(c.gamma.value.has_value());
  EXPECT_DOUBLE_EQ(*c.gamma.value, 0.05);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.batch, 1);
  EXPECT_EQ(c.staleness_mode, StalenessMode::kZero);
}

TEST(Config, CorollaryStepAndStaleness) {
  const RunConfig c = parse_config_text(
      "algorithm: apsgd\n"
      "gamma: corollary\n"
      "corollary:\n  K: 5000\n  scale: 0.5\n"
      "staleness:\n  mode: uniform\n  tau: 3\n"
      "horizon: inf\n");
  EXPECT_FALSE(c.gamma.value.has_value());
  EXPECT_EQ(c.gamma.K, 5000);
  EXPECT_DOUBLE_EQ(c.gamma.scale, 0.5);
  EXPECT_EQ(c.staleness_mode, StalenessMode::kUniform);
  EXPECT_EQ(c.staleness, 3);
  EXPECT_TRUE(std::isinf(c.horizon));
}

void expect_config_error(const std::string& text, const std::string& fragment) {
  try {
    parse_config_text(text);
    FAIL() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Config, ErrorsCarryPositions) {
  expect_config_error("name: x\ntopology:\n  kind: ring\n  nodes: 4\n", "line 4, column 3");
  expect_config_error("algorithm: easgd\n", "line 1");
  expect_config_error("name: a\nbatch: -2\n", "line 2");
  expect_config_error("name: a\nseeds: []\n", "seeds");
  expect_config_error("gamma: -0.1\n", "gamma");
  expect_config_error("topology:\n  n: two\n", "line 2");
  expect_config_error("speed:\n  compute_time: 0\n", "line 2");
  expect_config_error("- just\n- a list\n", "mapping");
}

TEST(Config, LoadErrorsNameTheFile) {
  try {
    load_config(kData + "/unknown_key.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("unknown_key.yaml"), std::string::npos);
    EXPECT_NE(what.find("line 5, column 3"), std::string::npos);
  }
  EXPECT_THROW(load_config(kData + "/missing.yaml"), ValidationError);
}

TEST(Config, EmitRoundTripsEveryPreset) {
  for (const auto& name : preset_names()) {
    for (const auto& run : make_preset(name).runs) {
      const std::string text = emit_config(run.config);
      const RunConfig back = parse_config_text(text);
      EXPECT_EQ(emit_config(back), text) << name << "/" << run.label;
    }
  }
}

TEST(Config, OverrideSetsNestedScalars) {
  YAML::Node root = load_config_node(kData + "/small_run.yaml");
  apply_override(root, "topology.n", "8");
  apply_override(root, "gamma", "corollary");
  apply_override(root, "speed.link_time", "0.5");
  const RunConfig c = parse_config(root);
  EXPECT_EQ(c.topology.n, 8);
  EXPECT_FALSE(c.gamma.value.has_value());
  EXPECT_DOUBLE_EQ(c.speed.link_time, 0.5);
  YAML::Node bad = load_config_node(kData + "/small_run.yaml");
  apply_override(bad, "topology.nodes", "8");
  EXPECT_THROW(parse_config(bad), ConfigError);
}

TEST(Config, OutputDirFallsBackToEnvironment) {
  RunConfig c;
  unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir(c), "out");
  setenv(kOutputDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(c), "/tmp/from_env");
  c.output_dir = "explicit";
  EXPECT_EQ(resolve_output_dir(c), "explicit");
  unsetenv(kOutputDirEnv);
}

TEST(Metrics, CsvHeaderIsFixed) {
  EXPECT_EQ(metrics_csv_header(3),
            "k,simulated_time,loss_avg_model,grad_norm_sq_avg_model,consensus_Mk,max_staleness,"
            "worker_updates_0,worker_updates_1,worker_updates_2");
}

TEST(Metrics, GoldenSimulationCsv) {
  const ExperimentResult r = run_experiment(load_config(kData + "/golden_run.yaml"));
  ASSERT_EQ(r.seeds.size(), 1u);
  EXPECT_EQ(r.seeds[0].csv, read_file(kData + "/golden_metrics.csv"));
}

TEST(Metrics, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Experiment, NoiselessSeedsGiveIdenticalCsvs) {
  RunConfig c = load_config(kData + "/small_run.yaml");
  c.algorithm = Algorithm::kSgd;
  c.problem.noise = 0;
  const auto r = run_experiment(c);
  ASSERT_EQ(r.seeds.size(), 2u);
  EXPECT_EQ(r.seeds[0].csv, r.seeds[1].csv);
}

TEST(Experiment, RecordsAreMonotone) {
  const auto r = run_experiment(load_config(kData + "/small_run.yaml"));
  for (const auto& s : r.seeds) {
    const auto rows = read_csv(s.csv);
    ASSERT_EQ(rows.size(), 5u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_GE(rows[i].at("consensus_Mk"), 0.0);
      if (i > 0) {
        EXPECT_GT(rows[i].at("k"), rows[i - 1].at("k"));
      }
    }
  }
}

TEST(Experiment, SummaryIsRecomputableFromCsvs) {
  const fs::path dir = scratch_dir("summary");
  const auto r = run_experiment(load_config(kData + "/golden_run.yaml"));
  RunConfig c = load_config(kData + "/small_run.yaml");
  c.seeds = {4, 5, 6};
  const auto logical = run_experiment(c);
  write_experiment(logical, dir.string());
  const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));

  std::vector<double> finals;
  std::vector<std::vector<double>> losses;
  for (std::uint64_t seed : c.seeds) {
    const auto rows = read_csv(read_file(dir / ("metrics_seed" + std::to_string(seed) + ".csv")));
    finals.push_back(rows.back().at("loss_avg_model"));
    losses.emplace_back();
    for (const auto& row : rows) losses.back().push_back(row.at("loss_avg_model"));
  }
  const double mean = (finals[0] + finals[1] + finals[2]) / 3;
  double var = 0;
  for (double f : finals) var += (f - mean) * (f - mean);
  EXPECT_NEAR(summary["final_loss"]["mean"].get<double>(), mean, 1e-15);
  EXPECT_NEAR(summary["final_loss"]["std"].get<double>(), std::sqrt(var / 2), 1e-15);
  const auto& matched = summary["matched"]["loss_mean"];
  ASSERT_EQ(matched.size(), losses[0].size());
  for (std::size_t i = 0; i < matched.size(); ++i)
    EXPECT_NEAR(matched[i].get<double>(), (losses[0][i] + losses[1][i] + losses[2][i]) / 3, 1e-15);
  EXPECT_TRUE(fs::exists(dir / "config.yaml"));
  EXPECT_EQ(parse_config_text(read_file(dir / "config.yaml")).seeds, c.seeds);

  // Epoch-equivalent timing: n * S / M updates; 2 * 10 / 1 = 20 here.
  const auto golden = read_csv(read_file(kData + "/golden_metrics.csv"));
  const double expected = golden.back().at("simulated_time") * 20 / golden.back().at("k");
  EXPECT_DOUBLE_EQ(r.summary["seconds_per_epoch"]["mean"].get<double>(), expected);
}

TEST(Experiment, SweepSpeedupMatchesCsvs) {
  const fs::path dir = scratch_dir("sweep");
  const YAML::Node base = load_config_node(kData + "/speedup_sweep.yaml");
  const std::vector<SweepAxis> axes{parse_vary("topology.n=1,2,4")};
  ASSERT_EQ(axes[0].values, (std::vector<std::string>{"1", "2", "4"}));
  run_sweep_to(base, axes, dir.string());
  const auto table = read_csv(read_file(dir / "sweep.csv"));
  ASSERT_EQ(table.size(), 3u);

  auto time_to_target = [&](const std::string& n) {
    const fs::path point = dir / ("topology.n=" + n);
    const auto summary = nlohmann::json::parse(read_file(point / "summary.json"));
    const double target = summary["target_loss"].get<double>();
    double total = 0;
    for (int seed : {1, 2}) {
      const auto rows = read_csv(read_file(point / ("metrics_seed" + std::to_string(seed) + ".csv")));
      double hit = NAN;
      for (const auto& row : rows) {
        if (row.at("loss_avg_model") <= target) {
          hit = row.at("simulated_time");
          break;
        }
      }
      total += hit;
    }
    return total / 2;
  };
  const double t1 = time_to_target("1");
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string n = axes[0].values[i];
    const double tn = time_to_target(n);
    EXPECT_DOUBLE_EQ(table[i].at("time_to_target_mean"), tn);
    EXPECT_NEAR(table[i].at("speedup"), t1 / tn, 1e-12);
  }
  EXPECT_GT(table[2].at("speedup"), 2.0);
  EXPECT_THROW(parse_vary("topology.n"), ValidationError);
  EXPECT_THROW(parse_vary("=1,2"), ValidationError);
}

TEST(Experiment, DivergenceCarriesRunContext) {
  try {
    run_experiment(load_config(kData + "/diverging.yaml"));
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("run 'boom' seed 0"), std::string::npos);
  }
}

TEST(Experiment, AtomicWriteLeavesNoTemporaries) {
  const fs::path dir = scratch_dir("atomic");
  write_file_atomic((dir / "a.txt").string(), "first");
  write_file_atomic((dir / "a.txt").string(), "second");
  EXPECT_EQ(read_file(dir / "a.txt"), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator()), 1);
}

TEST(Presets, NamesAndShapes) {
  EXPECT_EQ(preset_names(), (std::vector<std::string>{"consistency-sgd", "convergence-rate", "linear-speedup",
                                                      "straggler", "consensus-decay", "theory-grid"}));
  try {
    make_preset("straggler-10x");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("consistency-sgd"), std::string::npos);
  }
  const Preset consistency = make_preset("consistency-sgd");
  ASSERT_EQ(consistency.runs.size(), 2u);
  EXPECT_EQ(consistency.runs[0].config.topology.n, 1);
  EXPECT_EQ(consistency.runs[0].config.seeds, consistency.runs[1].config.seeds);

  const Preset straggler = make_preset("straggler");
  ASSERT_EQ(straggler.runs.size(), 12u);
  std::set<double> factors;
  for (const auto& run : straggler.runs) {
    EXPECT_EQ(run.config.topology.n, 16);
    double factor = 1;
    for (const auto& s : run.config.speed.slowdowns) factor *= s.factor;
    factors.insert(factor);
  }
  EXPECT_EQ(factors, (std::set<double>{1, 2, 10, 100}));

  const Preset speedup = make_preset("linear-speedup");
  std::set<int> ns;
  for (const auto& run : speedup.runs) {
    ns.insert(run.config.topology.n);
    EXPECT_FALSE(run.config.gamma.value.has_value());
  }
  EXPECT_EQ(ns, (std::set<int>{1, 2, 4, 8}));
}

TEST(Presets, EmittedFilesLoadBack) {
  const fs::path dir = scratch_dir("emit");
  const Preset p = make_preset("straggler");
  emit_preset(p, dir.string());
  for (const auto& run : p.runs) {
    const RunConfig back = load_config((dir / (run.label + ".yaml")).string());
    EXPECT_EQ(emit_config(back), emit_config(run.config));
  }
}

TEST(Cli, RunWritesArtifacts) {
  const fs::path dir = scratch_dir("cli_run");
  const auto r = run_cli("run " + kData + "/golden_run.yaml -o " + dir.string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_file(dir / "metrics_seed3.csv"), read_file(kData + "/golden_metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "trace_seed3.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const fs::path dir = scratch_dir("cli_env");
  const std::string cmd =
      std::string(kOutputDirEnv) + "=" + dir.string() + " " + kCli + " run " + kData + "/small_run.yaml >/dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("run " + kData + "/unknown_key.yaml").code, 2);
  EXPECT_EQ(run_cli("run " + kData + "/missing.yaml").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("preset no-such-preset --emit /tmp/x").code, 2);
  const fs::path dir = scratch_dir("cli_div");
  const auto div = run_cli("run " + kData + "/diverging.yaml -o " + dir.string());
  EXPECT_EQ(div.code, 3);
  EXPECT_NE(div.output.find("divergence"), std::string::npos);
}

TEST(Cli, AnalyzeTopology) {
  const auto odd = run_cli("analyze-topology " + kData + "/ring5.json");
  EXPECT_EQ(odd.code, 0);
  EXPECT_NE(odd.output.find("odd cycle [0,1,2,3,4]"), std::string::npos) << odd.output;
  const auto even = run_cli("analyze-topology " + kData + "/ring4.json --json");
  EXPECT_EQ(even.code, 0);
  const auto j = nlohmann::json::parse(even.output);
  EXPECT_EQ(j["deadlock_free"], true);
  EXPECT_NEAR(j["rho"].get<double>(), 0.75, 1e-12);
}

TEST(Cli, TheoryCheckPrintsTextAndJson) {
  const auto r = run_cli("theory-check " + kData + "/small_run.yaml");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("bar_rho                   75.37"), std::string::npos) << r.output;
  const auto brace = r.output.find('{');
  ASSERT_NE(brace, std::string::npos);
  const auto j = nlohmann::json::parse(r.output.substr(brace));
  EXPECT_EQ(j["valid"], false);
  EXPECT_NEAR(j["inputs"]["rho"].get<double>(), 0.75, 1e-12);
  const auto only = run_cli("theory-check --json " + kData + "/small_run.yaml");
  EXPECT_NO_THROW(nlohmann::json::parse(only.output));
}

TEST(Cli, PresetEmit) {
  const fs::path dir = scratch_dir("cli_preset");
  const auto r = run_cli("preset consistency-sgd --emit " + dir.string());
  EXPECT_EQ(r.code, 0) << r.output;
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) files += entry.path().extension() == ".yaml";
  EXPECT_EQ(files, 2u);
}

}  // namespace
}  // namespace adpsgd
