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

// Command-line front end: run, sweep, analyze-topology, theory-check, preset.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "adpsgd/config.hpp"
#include "adpsgd/experiment.hpp"
#include "adpsgd/simulator.hpp"
#include "adpsgd/theory.hpp"
#include "adpsgd/topology.hpp"

namespace {

using namespace adpsgd;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_result(const ExperimentResult& r, const std::string& dir) {
  const auto& s = r.summary;
  std::cout << "run " << r.config.name << ": gamma=" << format_double(r.gamma) << " seeds=" << r.seeds.size()
            << " final_loss=" << s["final_loss"]["mean"].dump();
  if (s.contains("time_to_target") && !s["time_to_target"].is_null())
    std::cout << " time_to_target=" << s["time_to_target"]["mean"].dump();
  if (!s["seconds_per_epoch"].is_null()) std::cout << " seconds_per_epoch=" << s["seconds_per_epoch"]["mean"].dump();
  std::cout << "\nwrote " << dir << "\n";
}

int cmd_run(const std::string& config_path, const std::string& output) {
  RunConfig config = load_config(config_path);
  if (!output.empty()) config.output_dir = output;
  const ExperimentResult result = run_experiment(config);
  const std::string dir = resolve_output_dir(config);
  write_experiment(result, dir);
  print_result(result, dir);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& vary, const std::string& output) {
  YAML::Node base = load_config_node(config_path);
  RunConfig probe = parse_config(base);
  if (!output.empty()) probe.output_dir = output;
  std::vector<SweepAxis> axes;
  for (const auto& v : vary) axes.push_back(parse_vary(v));
  const std::string dir = resolve_output_dir(probe);
  std::cout << run_sweep_to(base, axes, dir);
  std::cout << "wrote " << dir << "\n";
  return 0;
}

int cmd_analyze(const std::string& path, bool as_json) {
  const TopologyGraph graph = topology_from_json(read_text(path));
  const DeadlockVerdict verdict = detect_deadlock_freedom(graph);
  nlohmann::ordered_json j;
  j["n"] = graph.size();
  j["edges"] = graph.edges().size();
  j["connected"] = graph.connected();
  j["max_degree"] = graph.max_degree();
  j["deadlock_free"] = verdict.deadlock_free;
  if (verdict.partition) {
    j["active"] = verdict.partition->active;
    j["passive"] = verdict.partition->passive;
  } else {
    j["odd_cycle"] = verdict.odd_cycle;
  }
  if (graph.connected()) {
    const SpectralReport spec = analyze_spectrum(graph, SelectionPolicy::uniform(graph.size()));
    j["rho"] = spec.rho;
    j["bar_rho"] = spec.bar_rho;
  } else {
    j["rho"] = nullptr;
    j["bar_rho"] = nullptr;
  }
  j["warnings"] = graph.warnings();
  if (as_json) {
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "workers: " << graph.size() << "\nedges: " << graph.edges().size()
            << "\nconnected: " << (graph.connected() ? "yes" : "no") << "\nmax degree: " << graph.max_degree() << "\n";
  if (verdict.deadlock_free) {
    std::cout << "deadlock-free: yes (active " << j["active"].dump() << ", passive " << j["passive"].dump() << ")\n";
  } else {
    std::cout << "deadlock-free: no (odd cycle " << j["odd_cycle"].dump() << "); use serialized exchange\n";
  }
  if (graph.connected()) {
    std::cout << "rho: " << format_double(j["rho"].get<double>()) << "\nbar_rho: "
              << format_double(j["bar_rho"].get<double>()) << "\n";
  }
  for (const auto& w : graph.warnings()) std::cout << "warning: " << w << "\n";
  return 0;
}

int cmd_theory(const std::string& config_path, bool json_only, bool text_only) {
  const ResolvedRun run = resolve_run(load_config(config_path));
  const theory::TheoryReport report = theory_check(run);
  if (!json_only) std::cout << theory::format_report_text(report);
  if (!json_only && !text_only) std::cout << "\n";
  if (!text_only) std::cout << theory::format_report_json(report) << "\n";
  return 0;
}

int cmd_preset(const std::string& name, const std::string& emit, bool run, bool list) {
  if (list) {
    for (const auto& n : preset_names()) std::cout << n << ": " << make_preset(n).description << "\n";
    return 0;
  }
  const Preset preset = make_preset(name);
  if (emit.empty()) throw ValidationError("preset needs --emit <dir>");
  emit_preset(preset, emit);
  std::cout << "wrote " << preset.runs.size() << " config(s) to " << emit << "\n";
  if (run) {
    const auto rows = run_preset(preset);
    write_preset_results(rows, emit);
    std::cout << preset_table(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adpsgd: gossip-averaging SGD runs, simulations and checks"};
  app.require_subcommand(1);

  std::string config_path, output, topology_path, preset_name, emit_dir;
  std::vector<std::string> vary;
  bool as_json = false, run_preset_flag = false, list_presets = false;

  auto* run = app.add_subcommand("run", "run every seed of a config and write metrics");
  run->add_option("config", config_path, "YAML run config")->required();
  run->add_option("-o,--output", output, std::string("output directory (default: $") + kOutputDirEnv + " or ./out)");

  auto* sweep = app.add_subcommand("sweep", "run the cartesian product of --vary values");
  sweep->add_option("config", config_path, "YAML run config")->required();
  sweep->add_option("--vary", vary, "dotted.key=v1,v2,... (repeatable)")->required();
  sweep->add_option("-o,--output", output, "output directory");

  auto* analyze = app.add_subcommand("analyze-topology", "connectivity, deadlock freedom and spectral gap");
  analyze->add_option("topology", topology_path, "topology JSON file")->required();
  analyze->add_flag("--json", as_json, "print JSON");

  auto* theory_cmd = app.add_subcommand("theory-check", "evaluate the convergence conditions for a config");
  theory_cmd->add_option("config", config_path, "YAML run config")->required();
  bool text_only = false;
  auto* json_flag = theory_cmd->add_flag("--json", as_json, "print only the JSON report");
  theory_cmd->add_flag("--text", text_only, "print only the text report")->excludes(json_flag);

  auto* preset = app.add_subcommand("preset", "emit (and optionally run) a named scenario");
  preset->add_option("name", preset_name, "preset name");
  preset->add_option("--emit", emit_dir, "directory for the generated configs");
  preset->add_flag("--run", run_preset_flag, "also run the configs and write a comparison table");
  preset->add_flag("--list", list_presets, "list presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path, output);
    if (*sweep) return cmd_sweep(config_path, vary, output);
    if (*analyze) return cmd_analyze(topology_path, as_json);
    if (*theory_cmd) return cmd_theory(config_path, as_json, text_only);
    if (*preset) {
      if (preset_name.empty() && !list_presets) throw ValidationError("preset needs a name (see --list)");
      return cmd_preset(preset_name, emit_dir, run_preset_flag, list_presets);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const DeadlockError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
