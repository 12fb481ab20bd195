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

#ifndef PARASHARD_TASKGRAPH_H_
#define PARASHARD_TASKGRAPH_H_

#include <string>
#include <vector>

#include "parashard/ir.h"

namespace parashard {

enum class TaskKind {
  kSource,
  kSink,
  kCompute,   // combined step compute (no pipeline)
  kForward,   // per-stage forward microbatch
  kBackward,  // per-stage backward microbatch
  kLocalAccumulate,
  kApplyGradients,
  kSend,
  kRecv,
};
const char* TaskKindName(TaskKind k);

struct TaskNode {
  int id = -1;
  TaskKind kind = TaskKind::kCompute;
  int stage = 0;       // device group; -1 for source/sink
  int microbatch = 0;  // 1-based; 0 when not applicable
  int dir = 0;         // 0 none, 1 forward, 2 backward (compute and p2p)
  double duration = 0;
  double bytes = 0;  // Send/Recv payload
  int peer = -1;     // matched node of a Send/Recv pair
  std::string label;
};

struct TaskGraph {
  std::vector<TaskNode> nodes;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> schedule;  // per device group, static order
  int num_stages = 1;
  int num_microbatches = 1;
  std::vector<double> activation_bytes;  // per stage, one microbatch in flight

  int AddNode(TaskKind kind, int stage, int microbatch, double duration, double bytes = 0);
  void AddEdge(int from, int to) { edges.emplace_back(from, to); }
};

// Per-stage inputs distilled from a plan: per-microbatch compute halves,
// boundary transfer size, and bookkeeping costs.
struct StageCosts {
  double fwd_seconds = 0;
  double bwd_seconds = 0;
  double send_bytes = 0;  // activation bytes sent to the next stage
  double accum_seconds = 0;
  double apply_seconds = 0;
  double activation_bytes = 0;
};

// Builds the node set for S stages and m microbatches (Source/Sink, CG or
// F/B per (stage, microbatch), Send/Recv pairs on stage boundaries, an
// m-1-long LocalAccumulate chain and one ApplyGradients per stage) and runs
// schedule_1f1b to fill the per-device order.
TaskGraph build_task_graph(const std::vector<StageCosts>& stages, int m, double p2p_alpha,
                           double p2p_bandwidth);

// Static 1F1B order: stage s runs min(m, S - s) warmup forwards, alternates
// backward/forward, then drains. Send/Recv nodes sit next to their compute.
void schedule_1f1b(TaskGraph& tg, int num_stages, int m);

struct SimResult {
  double makespan = 0;
  std::vector<double> busy_seconds;  // per device group, compute
  std::vector<double> comm_seconds;  // per device group, send/recv
  std::vector<int> peak_in_flight;   // per stage, microbatches
  std::vector<double> peak_activation_bytes;
  std::vector<double> node_start;  // per node id
  std::vector<double> node_finish;
};

// Discrete-event simulation: a node starts when its predecessors are done,
// it is next in its group's static order, and the group is idle. Throws
// std::logic_error on deadlock (schedule not a linear extension).
SimResult simulate(const TaskGraph& tg);

std::string TaskGraphToJsonText(const TaskGraph& tg);
TaskGraph TaskGraphFromJsonText(const std::string& text);

// Chrome trace format ("traceEvents"), one complete event per node.
std::string EmitChromeTrace(const TaskGraph& tg, const SimResult& sim);

}  // namespace parashard

#endif  // PARASHARD_TASKGRAPH_H_
