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

#include "parashard/planner.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "parashard/parser.h"

namespace parashard {

using json = nlohmann::ordered_json;

namespace {
constexpr double kForwardShare = 1.0 / 3.0;  // fwd : bwd = 1 : 2
}

std::string MeshCandidate::Descriptor() const {
  std::string s = mesh.Descriptor();
  if (pipeline_axis >= 0) s += "/pp" + std::to_string(pipeline_axis);
  return s;
}

std::vector<MeshCandidate> enumerate_meshes(const ClusterConfig& cluster) {
  cluster.CheckValid();
  std::vector<MeshCandidate> out;
  auto add_with_pipeline_options = [&](const DeviceMesh& mesh) {
    out.push_back({mesh, -1});
    for (int a = 0; a < mesh.num_axes(); ++a) {
      if (mesh.dims[a] >= 2) out.push_back({mesh, a});
    }
  };

  DeviceMesh flat;
  flat.dims = {cluster.devices()};
  bool crosses = cluster.machines > 1;
  flat.bandwidth = {crosses ? cluster.inter_bandwidth : cluster.intra_bandwidth};
  flat.alpha = {crosses ? cluster.inter_alpha : cluster.intra_alpha};
  add_with_pipeline_options(flat);

  if (cluster.machines > 1 && cluster.gpus_per_machine > 1) {
    DeviceMesh grid;
    grid.dims = {cluster.machines, cluster.gpus_per_machine};
    grid.bandwidth = {cluster.inter_bandwidth, cluster.intra_bandwidth};
    grid.alpha = {cluster.inter_alpha, cluster.intra_alpha};
    add_with_pipeline_options(grid);
  }
  return out;
}

namespace {

struct StageSub {
  TensorProgram prog;
  std::vector<int> global_op;  // sub index -> global index, -1 for cut placeholders
};

StageSub ExtractStage(const TensorProgram& g, const std::vector<int>& stage_of, int s) {
  StageSub sub;
  std::set<int> external;
  for (int i = 0; i < g.size(); ++i) {
    if (stage_of[i] != s) continue;
    for (int p : g.input_indices(i)) {
      if (stage_of[p] != s) external.insert(p);
    }
  }
  for (int p : external) {
    Operator ph;
    ph.id = "__cut_" + g.op(p).id;
    ph.kind = OpKind::kInput;
    ph.output_shape = g.op(p).output_shape;
    sub.prog.Add(std::move(ph));
    sub.global_op.push_back(-1);
  }
  std::set<int> global_outputs(g.output_indices().begin(), g.output_indices().end());
  std::vector<OpId> outputs;
  for (int i = 0; i < g.size(); ++i) {
    if (stage_of[i] != s) continue;
    Operator op = g.op(i);
    for (OpId& in : op.inputs) {
      int p = g.IndexOf(in);
      if (stage_of[p] != s) in = "__cut_" + in;
    }
    sub.prog.Add(std::move(op));
    sub.global_op.push_back(i);
    bool is_out = global_outputs.count(i) > 0;
    for (int c : g.consumer_indices(i)) is_out = is_out || stage_of[c] != s;
    if (is_out) outputs.push_back(g.op(i).id);
  }
  if (!outputs.empty()) sub.prog.SetOutputs(std::move(outputs));
  sub.prog.Validate();
  return sub;
}

struct AxisSearchOutput {
  std::vector<std::vector<AxisSpec>> specs;  // [mesh axis][sub op]
  double comp_seconds = 0;
  double comm_seconds = 0;
  double comm_bytes = 0;
  std::map<std::string, int> counts;
  double params_bytes = 0;  // realized per device, optimizer states included
  std::vector<std::pair<int, int>> pessimistic;  // sub-local ops
};

AxisSearchOutput SpmdSearchAllAxes(const TensorProgram& sub, const DeviceMesh& mesh, int skip_axis,
                                   const ClusterConfig& cluster, const PlanOptions& opts,
                                   int opt_level) {
  AxisSearchOutput out;
  out.specs.assign(mesh.num_axes(),
                   std::vector<AxisSpec>(sub.size(), AxisSpec::Replicated()));
  for (const Operator& op : sub.ops()) out.comp_seconds += op.flops / cluster.device_flops;

  std::vector<std::vector<AxisSpec>> chosen;
  std::vector<int> chosen_d;
  for (int axis = 0; axis < mesh.num_axes(); ++axis) {
    if (axis == skip_axis || mesh.dims[axis] < 2) continue;
    SpmdAxisContext ctx;
    ctx.g = &sub;
    ctx.shapes = EffectiveShapes(sub, chosen, chosen_d);
    ctx.mesh = mesh;
    ctx.axis = axis;
    ctx.device_flops = cluster.device_flops;
    ctx.ilp_time_limit = opts.ilp_time_limit;
    ctx.flops_threshold = opts.flops_threshold;
    CandidateMap cand =
        generate_candidates(sub, ctx.shapes, mesh.dims[axis], opts.flops_threshold, axis);
    std::optional<MemoryBudget> budget;
    if (opts.memory_limit_bytes > 0) {
      budget = MemoryBudget{opts.memory_limit_bytes, opts.optimizer_multiplier};
    }
    SpmdResult r = opt_level >= 3 ? search_o3(ctx, cand, budget ? &*budget : nullptr)
                                  : search_o2(ctx, cand, budget ? &*budget : nullptr);
    out.specs[axis] = r.specs;
    out.comp_seconds = r.stats.comp_seconds;  // last axis sees all divisions
    out.comm_seconds += r.stats.comm_seconds;
    out.comm_bytes += r.stats.comm_bytes;
    for (const auto& [k, v] : r.stats.collective_counts) out.counts[k] += v;
    for (auto e : r.pessimistic_edges) out.pessimistic.push_back(e);
    chosen.push_back(r.specs);
    chosen_d.push_back(mesh.dims[axis]);
  }
  std::vector<TensorShape> final_shapes = EffectiveShapes(sub, chosen, chosen_d);
  for (int i = 0; i < sub.size(); ++i) {
    if (sub.op(i).kind == OpKind::kParameter) {
      out.params_bytes +=
          static_cast<double>(final_shapes[i].bytes()) * (1.0 + opts.optimizer_multiplier);
    }
  }
  return out;
}

struct CandidatePlan {
  bool ok = false;
  std::string error;
  ExecutionPlan plan;
};

CandidatePlan TryCandidate(const TensorProgram& g, const ClusterConfig& cluster,
                           const PlanOptions& opts, const MeshCandidate& mc, int opt_level) {
  CandidatePlan out;
  try {
    ExecutionPlan plan;
    plan.cluster = cluster;
    plan.mesh = mc.mesh;
    plan.pipeline_axis = mc.pipeline_axis;
    plan.opt_level = opt_level;
    plan.memory_limit_bytes = opts.memory_limit_bytes;
    plan.optimizer_multiplier = opts.optimizer_multiplier;

    int S = 1;
    plan.stages.d = 1;
    plan.stages.stage_of.assign(g.size(), 0);
    plan.stages.per_stage_comp.assign(1, 0.0);
    double spmd_group = static_cast<double>(mc.mesh.devices());
    if (mc.pipeline_axis >= 0) {
      S = mc.mesh.dims[mc.pipeline_axis];
      spmd_group = static_cast<double>(mc.mesh.devices()) / S;
      PipelineWorkload w = DefaultWorkload(g);
      for (double& c : w.comp) c = c / cluster.device_flops / spmd_group;
      for (double& b : w.edge_bytes) b /= spmd_group;
      PipelineConfig pc;
      pc.stages = S;
      pc.epsilon = opts.pipeline_epsilon;
      plan.stages = assign_stages(g, w, pc, opts.ilp_time_limit);
    }

    plan.sharding.assign(mc.mesh.num_axes(),
                         std::vector<AxisSpec>(g.size(), AxisSpec::Replicated()));
    std::vector<double> stage_comp(S, 0), stage_comm(S, 0), stage_params(S, 0);
    CostReport cost;
    for (int s = 0; s < S; ++s) {
      StageSub sub;
      if (S == 1) {
        sub.prog = g;
        for (int i = 0; i < g.size(); ++i) sub.global_op.push_back(i);
      } else {
        sub = ExtractStage(g, plan.stages.stage_of, s);
      }
      AxisSearchOutput so =
          SpmdSearchAllAxes(sub.prog, mc.mesh, mc.pipeline_axis, cluster, opts, opt_level);
      for (int axis = 0; axis < mc.mesh.num_axes(); ++axis) {
        for (int i = 0; i < sub.prog.size(); ++i) {
          if (sub.global_op[i] >= 0) plan.sharding[axis][sub.global_op[i]] = so.specs[axis][i];
        }
      }
      stage_comp[s] = so.comp_seconds;
      stage_comm[s] = so.comm_seconds;
      stage_params[s] = so.params_bytes;
      cost.communication_bytes += so.comm_bytes;
      for (const auto& [k, v] : so.counts) cost.collective_counts[k] += v;
      for (auto [a, b] : so.pessimistic) {
        if (sub.global_op[a] >= 0 && sub.global_op[b] >= 0) {
          plan.pessimistic_edges.emplace_back(g.op(sub.global_op[a]).id,
                                              g.op(sub.global_op[b]).id);
        }
      }
    }

    std::vector<double> stage_act(S, 0);
    for (int i = 0; i < g.size(); ++i) {
      if (g.op(i).kind == OpKind::kParameter) continue;
      stage_act[plan.stages.stage_of[i]] +=
          static_cast<double>(LocalOutputBytes(g, plan, i));
    }
    std::vector<double> boundary_bytes(std::max(0, S - 1), 0);
    if (S > 1) {
      for (const auto& [p, c] : g.Edges()) {
        int sp = plan.stages.stage_of[p], sc = plan.stages.stage_of[c];
        for (int b = sp; b < sc; ++b) {
          boundary_bytes[b] += static_cast<double>(LocalOutputBytes(g, plan, p));
        }
      }
    }

    double p2p_alpha = 0, p2p_bw = 1;
    if (mc.pipeline_axis >= 0) {
      p2p_alpha = mc.mesh.alpha[mc.pipeline_axis];
      p2p_bw = mc.mesh.bandwidth[mc.pipeline_axis];
    }

    std::vector<int> m_grid;
    if (opts.microbatches > 0) {
      m_grid = {opts.microbatches};
    } else if (S == 1) {
      m_grid = {1};
    } else {
      m_grid = {1, 2, 4, 8};
    }
    double best_makespan = std::numeric_limits<double>::infinity();
    for (int m : m_grid) {
      std::vector<StageCosts> costs(S);
      for (int s = 0; s < S; ++s) {
        double step = (stage_comp[s] + stage_comm[s]) / m;
        costs[s].fwd_seconds = step * kForwardShare;
        costs[s].bwd_seconds = step * (1.0 - kForwardShare);
        costs[s].send_bytes = (S > 1 && s + 1 < S) ? boundary_bytes[s] / m : 0;
        double param_elems = stage_params[s] / (1.0 + opts.optimizer_multiplier) / 4.0;
        costs[s].accum_seconds = param_elems / cluster.device_flops;
        costs[s].apply_seconds = 2.0 * param_elems / cluster.device_flops;
        costs[s].activation_bytes = stage_act[s] / m;
      }
      TaskGraph tg = build_task_graph(costs, m, p2p_alpha, p2p_bw);
      SimResult sim = simulate(tg);
      if (sim.makespan < best_makespan) {
        best_makespan = sim.makespan;
        plan.task_graph = std::move(tg);
        plan.microbatches = m;
        cost.simulated_makespan = sim.makespan;
        cost.peak_memory_bytes.assign(S, 0);
        for (int s = 0; s < S; ++s) {
          cost.peak_memory_bytes[s] = stage_params[s] + sim.peak_activation_bytes[s];
        }
      }
    }

    for (int s = 0; s < S; ++s) {
      cost.computation_seconds += stage_comp[s];
      cost.communication_seconds += stage_comm[s];
    }
    if (S > 1) {
      for (double b : boundary_bytes) cost.communication_bytes += 2.0 * b;  // fwd + bwd
      cost.collective_counts["p2p_send"] += 2 * (S - 1) * plan.microbatches;
    }
    plan.cost = cost;
    plan.descriptor = mc.Descriptor() + "/m" + std::to_string(plan.microbatches);
    out.plan = std::move(plan);
    out.ok = true;
    (void)spmd_group;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

}  // namespace

int64_t LocalOutputBytes(const TensorProgram& g, const ExecutionPlan& plan, int op) {
  int64_t bytes = g.op(op).output_shape.bytes();
  for (int axis = 0; axis < plan.mesh.num_axes(); ++axis) {
    if (plan.sharding[axis][op].is_shard()) bytes /= plan.mesh.dims[axis];
  }
  return bytes;
}

ExecutionPlan plan(const TensorProgram& g, const ClusterConfig& cluster, const PlanOptions& opts) {
  int opt_level = opts.opt_level > 0 ? opts.opt_level : (g.size() < 5000 ? 3 : 2);
  std::vector<MeshCandidate> meshes = enumerate_meshes(cluster);
  std::vector<MeshCandidate> picked;
  for (const MeshCandidate& mc : meshes) {
    if (opts.pipeline_stages == -1 && mc.pipeline_axis >= 0) continue;
    if (opts.pipeline_stages > 0 &&
        (mc.pipeline_axis < 0 || mc.mesh.dims[mc.pipeline_axis] != opts.pipeline_stages)) {
      continue;
    }
    picked.push_back(mc);
  }
  if (picked.empty()) {
    throw InfeasibleError("no mesh candidate matches the requested pipeline configuration");
  }

  std::vector<CandidatePlan> results(picked.size());
  if (opts.parallel_candidates && picked.size() > 1) {
    std::vector<std::future<CandidatePlan>> futures;
    futures.reserve(picked.size());
    for (const MeshCandidate& mc : picked) {
      futures.push_back(std::async(std::launch::async, [&, mc]() {
        return TryCandidate(g, cluster, opts, mc, opt_level);
      }));
    }
    for (size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < picked.size(); ++i) {
      results[i] = TryCandidate(g, cluster, opts, picked[i], opt_level);
    }
  }

  std::vector<CandidateOutcome> log;
  int best = -1;
  for (size_t i = 0; i < results.size(); ++i) {
    CandidateOutcome o;
    o.descriptor = results[i].ok ? results[i].plan.descriptor : picked[i].Descriptor();
    o.ok = results[i].ok;
    o.makespan = results[i].ok ? results[i].plan.cost.simulated_makespan : 0;
    o.error = results[i].error;
    log.push_back(std::move(o));
    if (!results[i].ok) continue;
    if (best < 0 ||
        results[i].plan.cost.simulated_makespan < results[best].plan.cost.simulated_makespan ||
        (results[i].plan.cost.simulated_makespan == results[best].plan.cost.simulated_makespan &&
         results[i].plan.descriptor < results[best].plan.descriptor)) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    std::string msg = "no feasible plan:";
    for (const auto& o : log) msg += "\n  " + o.descriptor + ": " + o.error;
    throw InfeasibleError(msg);
  }
  ExecutionPlan chosen = std::move(results[best].plan);
  chosen.candidate_log = std::move(log);
  ValidatePlan(g, chosen);
  return chosen;
}

// ----------------------------------------------------------------------------
// Plan document

std::string PlanToJsonText(const ExecutionPlan& plan, const TensorProgram& g) {
  json j;
  j["schema_version"] = 1;
  j["descriptor"] = plan.descriptor;
  j["graph"] = json::parse(SerializeProgramJson(g));
  j["cluster"] = json::parse(plan.cluster.ToJsonText());
  j["mesh"] = {{"dims", plan.mesh.dims},
               {"bandwidth", plan.mesh.bandwidth},
               {"alpha", plan.mesh.alpha}};
  j["pipeline_axis"] = plan.pipeline_axis;
  j["opt_level"] = plan.opt_level;
  j["microbatches"] = plan.microbatches;
  j["memory_limit_bytes"] = plan.memory_limit_bytes;
  j["optimizer_multiplier"] = plan.optimizer_multiplier;
  json sharding = json::array();
  for (const auto& axis_specs : plan.sharding) {
    json axis = json::array();
    for (const AxisSpec& s : axis_specs) axis.push_back(s.ToString());
    sharding.push_back(axis);
  }
  j["sharding"] = sharding;
  j["stages"] = {{"count", plan.stages.d},
                 {"assignment", plan.stages.stage_of},
                 {"cut_volume_bytes", plan.stages.cut_volume},
                 {"per_stage_comp", plan.stages.per_stage_comp}};
  j["task_graph"] = json::parse(TaskGraphToJsonText(plan.task_graph));
  j["cost_report"] = {{"computation_seconds", plan.cost.computation_seconds},
                      {"communication_seconds", plan.cost.communication_seconds},
                      {"communication_bytes", plan.cost.communication_bytes},
                      {"simulated_makespan", plan.cost.simulated_makespan},
                      {"peak_memory_bytes", plan.cost.peak_memory_bytes},
                      {"collective_counts", plan.cost.collective_counts}};
  json diag;
  json clog = json::array();
  for (const auto& o : plan.candidate_log) {
    clog.push_back({{"descriptor", o.descriptor},
                    {"ok", o.ok},
                    {"makespan", o.makespan},
                    {"error", o.error}});
  }
  diag["candidate_log"] = clog;
  json pess = json::array();
  for (const auto& [a, b] : plan.pessimistic_edges) pess.push_back({a, b});
  diag["pessimistic_edges"] = pess;
  j["diagnostics"] = diag;
  return j.dump(2) + "\n";
}

ExecutionPlan PlanFromJsonText(const std::string& text, TensorProgram* graph_out) {
  json j = json::parse(text);
  if (j.value("schema_version", 0) != 1) {
    throw ValidationError("unsupported plan schema version");
  }
  TensorProgram g = ParseProgramJson(j.at("graph").dump());
  ExecutionPlan plan;
  plan.cluster = ClusterConfig::FromJsonText(j.at("cluster").dump());
  plan.mesh.dims = j.at("mesh").at("dims").get<std::vector<int>>();
  plan.mesh.bandwidth = j.at("mesh").at("bandwidth").get<std::vector<double>>();
  plan.mesh.alpha = j.at("mesh").at("alpha").get<std::vector<double>>();
  plan.pipeline_axis = j.at("pipeline_axis").get<int>();
  plan.opt_level = j.at("opt_level").get<int>();
  plan.microbatches = j.at("microbatches").get<int>();
  plan.memory_limit_bytes = j.value("memory_limit_bytes", int64_t{0});
  plan.optimizer_multiplier = j.value("optimizer_multiplier", 3.0);
  plan.descriptor = j.value("descriptor", std::string());
  for (const auto& axis : j.at("sharding")) {
    std::vector<AxisSpec> specs;
    for (const auto& s : axis) {
      auto spec = AxisSpec::FromString(s.get<std::string>());
      if (!spec) throw ValidationError("bad sharding spec in plan: " + s.get<std::string>());
      specs.push_back(*spec);
    }
    plan.sharding.push_back(std::move(specs));
  }
  plan.stages.d = j.at("stages").at("count").get<int>();
  plan.stages.stage_of = j.at("stages").at("assignment").get<std::vector<int>>();
  plan.stages.cut_volume = j.at("stages").at("cut_volume_bytes").get<double>();
  plan.stages.per_stage_comp = j.at("stages").at("per_stage_comp").get<std::vector<double>>();
  for (int i = 0; i < g.size(); ++i) plan.stages.by_id[g.op(i).id] = plan.stages.stage_of[i];
  plan.task_graph = TaskGraphFromJsonText(j.at("task_graph").dump());
  const auto& cr = j.at("cost_report");
  plan.cost.computation_seconds = cr.at("computation_seconds").get<double>();
  plan.cost.communication_seconds = cr.at("communication_seconds").get<double>();
  plan.cost.communication_bytes = cr.at("communication_bytes").get<double>();
  plan.cost.simulated_makespan = cr.at("simulated_makespan").get<double>();
  plan.cost.peak_memory_bytes = cr.at("peak_memory_bytes").get<std::vector<double>>();
  for (auto it = cr.at("collective_counts").begin(); it != cr.at("collective_counts").end(); ++it) {
    plan.cost.collective_counts[it.key()] = it.value().get<int>();
  }
  if (graph_out) *graph_out = std::move(g);
  return plan;
}

void ValidatePlan(const TensorProgram& g, const ExecutionPlan& plan) {
  plan.cluster.CheckValid();
  plan.mesh.CheckValid(plan.cluster.devices());
  if (static_cast<int>(plan.sharding.size()) != plan.mesh.num_axes()) {
    throw ValidationError("plan: sharding axis count does not match the mesh");
  }

  // Spec validity per axis over effective shapes, plus Partial placement and
  // pin conformance.
  std::vector<std::vector<AxisSpec>> prev;
  std::vector<int> prev_d;
  for (int axis = 0; axis < plan.mesh.num_axes(); ++axis) {
    const auto& specs = plan.sharding[axis];
    if (static_cast<int>(specs.size()) != g.size()) {
      throw ValidationError("plan: sharding entry count mismatch on axis " + std::to_string(axis));
    }
    std::vector<TensorShape> shapes = EffectiveShapes(g, prev, prev_d);
    for (int i = 0; i < g.size(); ++i) {
      if (!SpecValidForShape(specs[i], shapes[i], plan.mesh.dims[axis])) {
        throw ValidationError("plan: invalid spec " + specs[i].ToString() + " for op '" +
                              g.op(i).id + "' on axis " + std::to_string(axis));
      }
      if (specs[i].is_partial() && g.op(i).kind != OpKind::kMatMul &&
          g.op(i).kind != OpKind::kReduceSum) {
        throw ValidationError("plan: partial spec on non-contracting op '" + g.op(i).id + "'");
      }
      auto pin_it = g.op(i).pin.find(axis);
      if (pin_it != g.op(i).pin.end()) {
        auto pin = AxisSpec::FromString(pin_it->second);
        if (pin && !(specs[i] == *pin)) {
          throw ValidationError("plan: pin not honored on op '" + g.op(i).id + "'");
        }
      }
    }
    prev.push_back(specs);
    prev_d.push_back(plan.mesh.dims[axis]);
  }

  // Stage assignment: precedence and full prefix usage.
  const StageAssignment& st = plan.stages;
  if (static_cast<int>(st.stage_of.size()) != g.size()) {
    throw ValidationError("plan: stage assignment size mismatch");
  }
  std::vector<int> used(st.d, 0);
  for (int s : st.stage_of) {
    if (s < 0 || s >= st.d) throw ValidationError("plan: stage index out of range");
    ++used[s];
  }
  for (int s = 0; s < st.d; ++s) {
    if (used[s] == 0) throw ValidationError("plan: stage " + std::to_string(s) + " is empty");
  }
  for (const auto& [p, c] : g.Edges()) {
    if (st.stage_of[c] < st.stage_of[p]) {
      throw ValidationError("plan: stage precedence violated on edge " + g.op(p).id + " -> " +
                            g.op(c).id);
    }
  }

  // Task graph sanity: matched send/recv pairs, schedule covers each group.
  const TaskGraph& tg = plan.task_graph;
  if (tg.num_stages != st.d) throw ValidationError("plan: task graph stage count mismatch");
  for (const TaskNode& node : tg.nodes) {
    if (node.kind == TaskKind::kSend || node.kind == TaskKind::kRecv) {
      if (node.peer < 0 || node.peer >= static_cast<int>(tg.nodes.size())) {
        throw ValidationError("plan: unmatched send/recv");
      }
      const TaskNode& peer = tg.nodes[node.peer];
      bool pair_ok = peer.peer == node.id && peer.bytes == node.bytes &&
                     ((node.kind == TaskKind::kSend && peer.kind == TaskKind::kRecv) ||
                      (node.kind == TaskKind::kRecv && peer.kind == TaskKind::kSend));
      if (!pair_ok) throw ValidationError("plan: send/recv pair inconsistent");
    }
  }
  if (static_cast<int>(tg.schedule.size()) != tg.num_stages) {
    throw ValidationError("plan: schedule group count mismatch");
  }
  std::vector<int> seen(tg.nodes.size(), 0);
  for (int s = 0; s < tg.num_stages; ++s) {
    for (int id : tg.schedule[s]) {
      if (id < 0 || id >= static_cast<int>(tg.nodes.size()) || tg.nodes[id].stage != s) {
        throw ValidationError("plan: scheduled node not in its group");
      }
      ++seen[id];
    }
  }
  for (const TaskNode& node : tg.nodes) {
    if (node.stage >= 0 && seen[node.id] != 1) {
      throw ValidationError("plan: node scheduled " + std::to_string(seen[node.id]) + " times");
    }
  }
  // Linear extension: the simulation must complete, and reproduce the report.
  SimResult sim = simulate(tg);
  double tol = 1e-9 * (1.0 + std::abs(plan.cost.simulated_makespan));
  if (std::abs(sim.makespan - plan.cost.simulated_makespan) > tol) {
    throw ValidationError("plan: simulated makespan does not match the cost report");
  }

  // Memory estimate against the embedded limit (parameters + states).
  if (plan.memory_limit_bytes > 0) {
    std::vector<double> per_stage(st.d, 0);
    for (int i = 0; i < g.size(); ++i) {
      if (g.op(i).kind != OpKind::kParameter) continue;
      per_stage[st.stage_of[i]] += static_cast<double>(LocalOutputBytes(g, plan, i)) *
                                   (1.0 + plan.optimizer_multiplier);
    }
    for (int s = 0; s < st.d; ++s) {
      if (per_stage[s] > static_cast<double>(plan.memory_limit_bytes)) {
        throw ValidationError("plan: per-device memory estimate exceeds the limit on stage " +
                              std::to_string(s));
      }
    }
  }
}

}  // namespace parashard
