/* Copyright 2026 The Parashard Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "parashard/fixtures.h"
#include "parashard/parser.h"
#include "parashard/planner.h"

namespace {

using namespace parashard;

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

TensorProgram LoadGraph(const std::string& path, const std::string& format) {
  std::string text = ReadFile(path);
  if (format == "json" || (format == "auto" && !text.empty() && text.find_first_not_of(" \t\r\n") != std::string::npos && text[text.find_first_not_of(" \t\r\n")] == '{')) {
    return ParseProgramJson(text);
  }
  return parse_program(text);
}

int RunPlan(const std::string& graph_path, const std::string& format,
            const std::string& cluster_path, const std::string& out_path, int opt_level,
            const std::string& pipeline_stages, const std::string& microbatches,
            int64_t memory_limit, double ilp_time_limit, double epsilon,
            const std::string& dump_candidates, const std::string& dump_ilp, bool sequential) {
  TensorProgram g = LoadGraph(graph_path, format);
  ClusterConfig cluster = ClusterConfig::FromJsonText(ReadFile(cluster_path));

  PlanOptions opts;
  opts.opt_level = opt_level;
  if (pipeline_stages == "none") {
    opts.pipeline_stages = -1;
  } else if (pipeline_stages != "auto") {
    opts.pipeline_stages = std::stoi(pipeline_stages);
  }
  if (microbatches != "auto") opts.microbatches = std::stoi(microbatches);
  opts.memory_limit_bytes = memory_limit;
  opts.ilp_time_limit = ilp_time_limit;
  opts.pipeline_epsilon = epsilon;
  opts.parallel_candidates = !sequential;

  ExecutionPlan result = plan(g, cluster, opts);
  WriteFile(out_path, PlanToJsonText(result, g));
  std::cerr << "plan: " << result.descriptor
            << " makespan=" << result.cost.simulated_makespan << "s over "
            << result.candidate_log.size() << " candidates -> " << out_path << "\n";

  if (!dump_candidates.empty() || !dump_ilp.empty()) {
    // Whole-graph per-axis view of the search inputs on the chosen mesh.
    nlohmann::ordered_json dump;
    std::vector<std::vector<AxisSpec>> prev;
    std::vector<int> prev_d;
    for (int axis = 0; axis < result.mesh.num_axes(); ++axis) {
      if (axis == result.pipeline_axis || result.mesh.dims[axis] < 2) continue;
      std::vector<TensorShape> shapes = EffectiveShapes(g, prev, prev_d);
      CandidateMap cand = generate_candidates(g, shapes, result.mesh.dims[axis], 0.0, axis);
      if (!dump_candidates.empty()) {
        nlohmann::ordered_json ja;
        for (int i = 0; i < g.size(); ++i) {
          nlohmann::ordered_json ops = nlohmann::ordered_json::array();
          for (const auto& s : cand[i]) {
            nlohmann::ordered_json js;
            js["output"] = s.output_spec.ToString();
            nlohmann::ordered_json ins = nlohmann::ordered_json::array();
            for (const auto& in : s.input_specs) ins.push_back(in.ToString());
            js["inputs"] = ins;
            js["comp_flops"] = s.comp_flops;
            ops.push_back(js);
          }
          ja[g.op(i).id] = ops;
        }
        dump["axis" + std::to_string(axis)] = ja;
      }
      if (!dump_ilp.empty()) {
        SpmdAxisContext ctx;
        ctx.g = &g;
        ctx.shapes = shapes;
        ctx.mesh = result.mesh;
        ctx.axis = axis;
        ctx.device_flops = cluster.device_flops;
        StrategyIlp si = build_ilp(ctx, cand);
        WriteFile(dump_ilp + ".axis" + std::to_string(axis) + ".lp", si.problem.ToLpText());
      }
      prev.push_back(result.sharding[axis]);
      prev_d.push_back(result.mesh.dims[axis]);
    }
    if (!dump_candidates.empty()) WriteFile(dump_candidates, dump.dump(2) + "\n");
  }
  return 0;
}

int RunSimulate(const std::string& plan_path, const std::string& trace_path) {
  TensorProgram g;
  ExecutionPlan p = PlanFromJsonText(ReadFile(plan_path), &g);
  SimResult sim = simulate(p.task_graph);
  std::cout << "makespan_seconds " << sim.makespan << "\n";
  for (size_t s = 0; s < sim.busy_seconds.size(); ++s) {
    double busy = sim.busy_seconds[s];
    std::cout << "group " << s << " busy " << busy << " comm " << sim.comm_seconds[s]
              << " peak_in_flight " << sim.peak_in_flight[s] << " peak_activation_bytes "
              << sim.peak_activation_bytes[s] << "\n";
  }
  if (!trace_path.empty()) {
    WriteFile(trace_path, EmitChromeTrace(p.task_graph, sim));
    std::cerr << "trace -> " << trace_path << "\n";
  }
  return 0;
}

int RunValidate(const std::string& plan_path) {
  TensorProgram g;
  ExecutionPlan p = PlanFromJsonText(ReadFile(plan_path), &g);
  ValidatePlan(g, p);
  std::cout << "plan OK: " << p.descriptor << "\n";
  return 0;
}

int RunGen(const std::string& family, int layers, int hidden, int batch, uint64_t seed,
           const std::string& out_path, const std::string& format) {
  FixtureSpec spec{family, layers, hidden, batch, seed};
  TensorProgram g = generate(spec);
  WriteFile(out_path, format == "json" ? SerializeProgramJson(g) : SerializeProgram(g));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parashard: SPMD + pipeline execution planner for tensor programs"};
  app.require_subcommand(1);

  std::string graph_path, cluster_path, out_path = "plan.json", format = "auto";
  std::string pipeline_stages = "auto", microbatches = "auto";
  std::string dump_candidates, dump_ilp;
  int opt_level = 0;
  int64_t memory_limit = 0;
  double ilp_time_limit = 60.0, epsilon = 0.3;
  bool sequential = false;

  auto* plan_cmd = app.add_subcommand("plan", "search for an execution plan");
  plan_cmd->add_option("--graph", graph_path, "tensor program (.ir text or .json)")->required();
  plan_cmd->add_option("--format", format, "graph format: text|json|auto");
  plan_cmd->add_option("--cluster", cluster_path, "cluster config JSON")->required();
  plan_cmd->add_option("-o,--output", out_path, "output plan path");
  plan_cmd->add_option("--opt-level", opt_level, "2 or 3 (0 = auto: 3 below 5k ops)");
  plan_cmd->add_option("--pipeline-stages", pipeline_stages, "auto | none | stage count");
  plan_cmd->add_option("--microbatches", microbatches, "auto | count");
  plan_cmd->add_option("--memory-limit-bytes", memory_limit, "per-device budget");
  plan_cmd->add_option("--ilp-time-limit", ilp_time_limit, "seconds per subproblem");
  plan_cmd->add_option("--pipeline-epsilon", epsilon, "stage balance tolerance");
  plan_cmd->add_option("--dump-candidates", dump_candidates, "sharding candidates JSON");
  plan_cmd->add_option("--dump-ilp", dump_ilp, "LP-format dump path prefix");
  plan_cmd->add_flag("--sequential", sequential, "evaluate mesh candidates one at a time");

  std::string plan_path, trace_path;
  auto* sim_cmd = app.add_subcommand("simulate", "re-simulate a plan");
  sim_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  sim_cmd->add_option("--emit-trace", trace_path, "chrome trace output path");

  auto* val_cmd = app.add_subcommand("validate", "validate a plan");
  val_cmd->add_option("--plan", plan_path, "plan JSON")->required();

  std::string family = "mlp";
  int layers = 2, hidden = 8, batch = 4;
  uint64_t seed = 0;
  std::string gen_out = "-", gen_format = "text";
  auto* gen_cmd = app.add_subcommand("gen", "emit a benchmark-like fixture");
  gen_cmd->add_option("--family", family, "mlp|gpt_like|moe_like|skipnet")->required();
  gen_cmd->add_option("--layers", layers, "layer/block count");
  gen_cmd->add_option("--hidden", hidden, "hidden width");
  gen_cmd->add_option("--batch", batch, "batch rows");
  gen_cmd->add_option("--seed", seed, "generator seed");
  gen_cmd->add_option("-o,--output", gen_out, "output path (- for stdout)");
  gen_cmd->add_option("--format", gen_format, "text|json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan_cmd->parsed()) {
      return RunPlan(graph_path, format, cluster_path, out_path, opt_level, pipeline_stages,
                     microbatches, memory_limit, ilp_time_limit, epsilon, dump_candidates,
                     dump_ilp, sequential);
    }
    if (sim_cmd->parsed()) return RunSimulate(plan_path, trace_path);
    if (val_cmd->parsed()) return RunValidate(plan_path);
    if (gen_cmd->parsed()) return RunGen(family, layers, hidden, batch, seed, gen_out, gen_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
