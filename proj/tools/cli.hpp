#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pbds/pbds.hpp"
#include "support/acceptance.hpp"

namespace pbds::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kSelftest = 3 };

struct Source {
  std::string scenario_path;
  std::string preset;
};

inline Scenario load(const Source& src) {
  if (!src.preset.empty()) return presets::by_name(src.preset);
  std::ifstream in(src.scenario_path);
  if (!in) throw ScenarioError({src.scenario_path + ": cannot open scenario file"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

/// Chosen path, else the scenario's, else a default; PBDS_OUTPUT_DIR replaces
/// the directory part.
inline std::filesystem::path output_path(const std::string& flag, const std::optional<std::string>& from_scenario,
                                         const std::string& fallback) {
  std::filesystem::path p = !flag.empty() ? flag : from_scenario.value_or(fallback);
  if (const char* dir = std::getenv("PBDS_OUTPUT_DIR"); dir && *dir) p = std::filesystem::path(dir) / p.filename();
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline std::string base_name(const Scenario& sc) { return sc.name.empty() ? "scenario" : sc.name; }

inline int cmd_validate(const Source& src, std::ostream& out) {
  const Scenario sc = load(src);
  const BuiltScenario b = build(sc);
  std::size_t nodes = 0;
  visit_nodes(b.tree, DsState{b.initial.q, b.initial.qd}, [&](const TaskNode&, const std::string&, const DsState&) { ++nodes; });
  out << "ok: " << base_name(sc) << " (" << b.model.preset << ", n=" << b.model.dof() << ", " << nodes << " task nodes)\n";
  return kOk;
}

inline int cmd_run(const Source& src, const std::string& out_flag, const std::string& metrics_flag, std::ostream& out) {
  const Scenario sc = load(src);
  const BuiltScenario b = build(sc);
  const RunResult r = run_closed_loop(b.model, b.tree, b.controller, b.sim, b.initial);
  const auto csv = output_path(out_flag, sc.output.trajectory, base_name(sc) + "_trajectory.csv");
  const auto js = output_path(metrics_flag, sc.output.metrics, base_name(sc) + "_metrics.json");
  {
    auto f = open_out(csv);
    write_trajectory_csv(f, r.records, b.model.dof(), b.model.n_tau(), obstacle_count(b.tree));
  }
  {
    auto f = open_out(js);
    write_metrics_json(f, r);
  }
  out << "wrote " << csv.string() << " (" << r.records.size() << " records) and " << js.string() << "\n";
  if (r.status != RunStatus::completed) {
    throw std::runtime_error("run diverged: " + (r.events.empty() ? std::string("non-finite state") : r.events.back()));
  }
  return kOk;
}

inline int cmd_reference(const Source& src, const std::string& out_flag, const std::string& node_path, std::ostream& out) {
  const Scenario sc = load(src);
  const BuiltScenario b = build(sc);
  const std::string want = node_path.empty() ? b.tree.children.at(b.tree.primary).name : node_path;
  const TaskNode* node = nullptr;
  DsState init;
  visit_nodes(b.tree, DsState{b.initial.q, b.initial.qd}, [&](const TaskNode& n, const std::string& path, const DsState& s) {
    if (!node && path == want) {
      node = &n;
      init = s;
    }
  });
  if (!node) throw ScenarioError({"--node: no task node at path '" + want + "'"});
  std::vector<RolloutSample> samples;
  if (node->is_leaf()) {
    std::vector<ChartPtr> atlas;
    if (is_sphere(*node->chart)) {
      atlas.push_back(node->chart);
      for (const auto& c : sphere_atlas())
        if (c->kind() != node->chart->kind()) atlas.push_back(c);
    }
    samples = reference_rollout(node->ds(), init, b.sim, atlas);
  } else {
    samples = reference_rollout(*node, init, b.sim, b.tree.regularization);
  }
  const auto path = output_path(out_flag, sc.output.reference, base_name(sc) + "_reference.csv");
  auto f = open_out(path);
  write_reference_csv(f, samples);
  out << "wrote " << path.string() << " (" << samples.size() << " samples of node '" << want << "')\n";
  return kOk;
}

inline int cmd_presets(const std::string& dump_dir, std::ostream& out) {
  for (const auto& name : presets::names()) {
    if (dump_dir.empty()) {
      out << name << "\n";
      continue;
    }
    std::filesystem::create_directories(dump_dir);
    auto f = open_out(std::filesystem::path(dump_dir) / (name + ".json"));
    f << serialize(presets::by_name(name));
    out << "wrote " << (std::filesystem::path(dump_dir) / (name + ".json")).string() << "\n";
  }
  return kOk;
}

inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Pullback-bundle DS trees with a QP torque controller: closed-loop simulation"};
  app.require_subcommand(1);

  Source src;
  std::string out_flag, metrics_flag, node_path, dump_dir;
  std::vector<int> only;
  auto add_source = [&](CLI::App* sub) {
    auto* g = sub->add_option_group("source");
    g->add_option("--scenario", src.scenario_path, "scenario JSON file");
    g->add_option("--preset", src.preset, "built-in preset name");
    g->require_option(1);
  };
  auto* run = app.add_subcommand("run", "simulate the closed loop and write trajectory CSV + metrics JSON");
  add_source(run);
  run->add_option("--out", out_flag, "trajectory CSV path");
  run->add_option("--metrics", metrics_flag, "metrics JSON path");
  auto* validate = app.add_subcommand("validate", "parse and validate a scenario");
  add_source(validate);
  auto* reference = app.add_subcommand("reference", "integrate a task-space DS without the robot");
  add_source(reference);
  reference->add_option("--out", out_flag, "reference CSV path");
  reference->add_option("--node", node_path, "task node path, e.g. ee/sphere (default: the primary task)");
  auto* selftest = app.add_subcommand("selftest", "run the acceptance suite");
  selftest->add_option("--only", only, "criterion numbers to run");
  auto* list = app.add_subcommand("presets", "list presets, or write them as scenario files");
  list->add_option("--dump", dump_dir, "directory to write <preset>.json files into");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (*run) return cmd_run(src, out_flag, metrics_flag, out);
    if (*validate) return cmd_validate(src, out);
    if (*reference) return cmd_reference(src, out_flag, node_path, out);
    if (*list) return cmd_presets(dump_dir, out);
    if (*selftest) return acceptance::run_all(out, only) == 0 ? kOk : kSelftest;
  } catch (const ScenarioError& e) {
    err << "invalid scenario:\n";
    for (const auto& m : e.errors()) err << "  " << m << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "invalid scenario: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}

}  // namespace pbds::cli
