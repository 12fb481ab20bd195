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

#ifndef PARASHARD_PLANNER_H_
#define PARASHARD_PLANNER_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parashard/mesh.h"
#include "parashard/pipeline.h"
#include "parashard/spmd.h"
#include "parashard/taskgraph.h"

namespace parashard {

struct MeshCandidate {
  DeviceMesh mesh;
  int pipeline_axis = -1;  // -1: SPMD only
  std::string Descriptor() const;
};

// 1D and machine-aligned 2D factorizations (inter-machine axis first), each
// with every pipeline-axis designation of size >= 2.
std::vector<MeshCandidate> enumerate_meshes(const ClusterConfig& cluster);

struct PlanOptions {
  int opt_level = 0;        // 0 auto: 3 below 5000 ops, else 2
  int pipeline_stages = 0;  // 0 auto, -1 forbid, d>0 require d stages
  int microbatches = 0;     // 0 auto: try {1,2,4,8}
  int64_t memory_limit_bytes = 0;  // 0 unlimited
  double optimizer_multiplier = 3.0;
  double ilp_time_limit = 60.0;
  double pipeline_epsilon = 0.3;
  double flops_threshold = 0.0;
  bool parallel_candidates = true;
};

struct CostReport {
  double computation_seconds = 0;       // per-device compute, full batch
  double communication_seconds = 0;     // collectives, full batch
  double communication_bytes = 0;       // collectives + p2p wire bytes
  double simulated_makespan = 0;
  std::vector<double> peak_memory_bytes;  // per device group
  std::map<std::string, int> collective_counts;
};

struct CandidateOutcome {
  std::string descriptor;
  bool ok = false;
  double makespan = 0;
  std::string error;
};

struct ExecutionPlan {
  ClusterConfig cluster;
  DeviceMesh mesh;
  int pipeline_axis = -1;
  int opt_level = 3;
  int microbatches = 1;
  int64_t memory_limit_bytes = 0;
  double optimizer_multiplier = 3.0;
  std::vector<std::vector<AxisSpec>> sharding;  // [mesh axis][op index]
  StageAssignment stages;                       // d == 1 when no pipeline
  TaskGraph task_graph;
  CostReport cost;
  std::string descriptor;
  std::vector<CandidateOutcome> candidate_log;
  std::vector<std::pair<OpId, OpId>> pessimistic_edges;  // O2 diagnostics
};

// Enumerates mesh candidates, plans each (pipeline split, per-stage SPMD
// search per axis, task graph, simulation), and returns the plan with the
// smallest simulated makespan (ties: lexicographic descriptor). Throws
// InfeasibleError with the aggregated per-candidate reasons when nothing
// plans.
ExecutionPlan plan(const TensorProgram& g, const ClusterConfig& cluster, const PlanOptions& opts);

// Self-contained, versioned plan document (embeds the graph).
std::string PlanToJsonText(const ExecutionPlan& plan, const TensorProgram& g);
ExecutionPlan PlanFromJsonText(const std::string& text, TensorProgram* graph_out);

// Independent validation: spec validity per mesh axis, Partial placement,
// stage precedence and prefix usage, schedule linear-extension via
// re-simulation (makespan must match the report), and the memory estimate
// against the embedded limit. Throws ValidationError on any violation.
void ValidatePlan(const TensorProgram& g, const ExecutionPlan& plan);

// Per-op sharded output bytes after all mesh axes (task-graph payloads).
int64_t LocalOutputBytes(const TensorProgram& g, const ExecutionPlan& plan, int op);

}  // namespace parashard

#endif  // PARASHARD_PLANNER_H_
