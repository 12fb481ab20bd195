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

#include "parashard/taskgraph.h"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "nlohmann/json.hpp"

namespace parashard {

using json = nlohmann::ordered_json;

const char* TaskKindName(TaskKind k) {
  switch (k) {
    case TaskKind::kSource: return "source";
    case TaskKind::kSink: return "sink";
    case TaskKind::kCompute: return "cg";
    case TaskKind::kForward: return "fwd";
    case TaskKind::kBackward: return "bwd";
    case TaskKind::kLocalAccumulate: return "la";
    case TaskKind::kApplyGradients: return "ag";
    case TaskKind::kSend: return "send";
    case TaskKind::kRecv: return "recv";
  }
  return "?";
}

namespace {

TaskKind TaskKindFromName(const std::string& s) {
  for (TaskKind k : {TaskKind::kSource, TaskKind::kSink, TaskKind::kCompute, TaskKind::kForward,
                     TaskKind::kBackward, TaskKind::kLocalAccumulate, TaskKind::kApplyGradients,
                     TaskKind::kSend, TaskKind::kRecv}) {
    if (s == TaskKindName(k)) return k;
  }
  throw std::runtime_error("unknown task kind '" + s + "'");
}

// Map key distinguishing the forward and backward Send/Recv of one
// (stage, microbatch); interior stages carry both.
using NodeKey = std::tuple<int, int, int, int>;  // kind, stage, microbatch, dir

NodeKey KeyOf(const TaskNode& n) {
  return {static_cast<int>(n.kind), n.stage, n.microbatch, n.dir};
}

}  // namespace

int TaskGraph::AddNode(TaskKind kind, int stage, int microbatch, double duration, double bytes) {
  TaskNode node;
  node.id = static_cast<int>(nodes.size());
  node.kind = kind;
  node.stage = stage;
  node.microbatch = microbatch;
  node.duration = duration;
  node.bytes = bytes;
  node.label = std::string(TaskKindName(kind));
  if (stage >= 0) node.label += "_s" + std::to_string(stage);
  if (microbatch > 0) node.label += "_m" + std::to_string(microbatch);
  nodes.push_back(std::move(node));
  return nodes.back().id;
}

TaskGraph build_task_graph(const std::vector<StageCosts>& stages, int m, double p2p_alpha,
                           double p2p_bandwidth) {
  if (stages.empty() || m < 1) throw ValidationError("build_task_graph: invalid plan");
  const int S = static_cast<int>(stages.size());
  TaskGraph tg;
  tg.num_stages = S;
  tg.num_microbatches = m;
  for (const auto& sc : stages) tg.activation_bytes.push_back(sc.activation_bytes);

  int source = tg.AddNode(TaskKind::kSource, -1, 0, 0);
  std::map<NodeKey, int> at;
  auto put = [&](int id) { at[KeyOf(tg.nodes[id])] = id; };
  auto get = [&](TaskKind k, int s, int i, int dir = 0) {
    return at.at(NodeKey{static_cast<int>(k), s, i, dir});
  };

  if (S == 1) {
    const StageCosts& sc = stages[0];
    for (int i = 1; i <= m; ++i) {
      int cg = tg.AddNode(TaskKind::kCompute, 0, i, sc.fwd_seconds + sc.bwd_seconds);
      put(cg);
      tg.AddEdge(source, cg);
    }
  } else {
    for (int s = 0; s < S; ++s) {
      for (int i = 1; i <= m; ++i) {
        int f = tg.AddNode(TaskKind::kForward, s, i, stages[s].fwd_seconds);
        tg.nodes[f].dir = 1;
        put(f);
        int b = tg.AddNode(TaskKind::kBackward, s, i, stages[s].bwd_seconds);
        tg.nodes[b].dir = 2;
        put(b);
      }
    }
    auto add_pair = [&](int from_stage, int to_stage, int i, int dir, double bytes) {
      double seconds = bytes > 0 ? p2p_alpha + bytes / p2p_bandwidth : 0;
      int snd = tg.AddNode(TaskKind::kSend, from_stage, i, seconds, bytes);
      int rcv = tg.AddNode(TaskKind::kRecv, to_stage, i, 0, bytes);
      tg.nodes[snd].dir = dir;
      tg.nodes[rcv].dir = dir;
      tg.nodes[snd].peer = rcv;
      tg.nodes[rcv].peer = snd;
      const char* suffix = dir == 1 ? "_f" : "_b";
      tg.nodes[snd].label += suffix;
      tg.nodes[rcv].label += suffix;
      put(snd);
      put(rcv);
      tg.AddEdge(snd, rcv);
      return std::make_pair(snd, rcv);
    };
    for (int s = 0; s < S; ++s) {
      for (int i = 1; i <= m; ++i) {
        int f = get(TaskKind::kForward, s, i, 1);
        int b = get(TaskKind::kBackward, s, i, 2);
        if (s == 0) tg.AddEdge(source, f);
        tg.AddEdge(f, b);  // backward consumes the locally saved activations
        if (s + 1 < S) {
          auto [sf, rf] = add_pair(s, s + 1, i, 1, stages[s].send_bytes);
          tg.AddEdge(f, sf);
          tg.AddEdge(rf, get(TaskKind::kForward, s + 1, i, 1));
          auto [sb, rb] = add_pair(s + 1, s, i, 2, stages[s].send_bytes);
          tg.AddEdge(get(TaskKind::kBackward, s + 1, i, 2), sb);
          tg.AddEdge(rb, b);
        }
      }
    }
  }

  // Local accumulation chain (m-1 merges) and apply per stage.
  int sink = tg.AddNode(TaskKind::kSink, -1, 0, 0);
  for (int s = 0; s < S; ++s) {
    auto grad_of = [&](int i) {
      return S == 1 ? get(TaskKind::kCompute, 0, i) : get(TaskKind::kBackward, s, i, 2);
    };
    int tail = grad_of(1);
    for (int i = 2; i <= m; ++i) {
      int la = tg.AddNode(TaskKind::kLocalAccumulate, s, i, stages[s].accum_seconds);
      put(la);
      tg.AddEdge(tail, la);
      tg.AddEdge(grad_of(i), la);
      tail = la;
    }
    int ag = tg.AddNode(TaskKind::kApplyGradients, s, 0, stages[s].apply_seconds);
    put(ag);
    tg.AddEdge(tail, ag);
    tg.AddEdge(ag, sink);
  }

  schedule_1f1b(tg, S, m);
  return tg;
}

void schedule_1f1b(TaskGraph& tg, int num_stages, int m) {
  const int S = num_stages;
  tg.schedule.assign(S, {});
  std::map<NodeKey, int> at;
  for (const TaskNode& node : tg.nodes) at[KeyOf(node)] = node.id;
  auto emit = [&](int s, TaskKind k, int i, int dir = 0) {
    auto it = at.find(NodeKey{static_cast<int>(k), s, i, dir});
    if (it != at.end()) tg.schedule[s].push_back(it->second);
  };

  if (S == 1) {
    for (int i = 1; i <= m; ++i) emit(0, TaskKind::kCompute, i);
    for (int i = 2; i <= m; ++i) emit(0, TaskKind::kLocalAccumulate, i);
    emit(0, TaskKind::kApplyGradients, 0);
    return;
  }

  for (int s = 0; s < S; ++s) {
    const int warmup = std::min(m, S - s);
    auto forward = [&](int i) {
      if (s > 0) emit(s, TaskKind::kRecv, i, 1);  // activations arrive
      emit(s, TaskKind::kForward, i, 1);
      if (s + 1 < S) emit(s, TaskKind::kSend, i, 1);
    };
    auto backward = [&](int i) {
      if (s + 1 < S) emit(s, TaskKind::kRecv, i, 2);  // gradient arrives
      emit(s, TaskKind::kBackward, i, 2);
      if (s > 0) emit(s, TaskKind::kSend, i, 2);
      if (i >= 2) emit(s, TaskKind::kLocalAccumulate, i);
    };
    int next_fwd = 1;
    for (; next_fwd <= warmup && next_fwd <= m; ++next_fwd) forward(next_fwd);
    for (int b = 1; b <= m; ++b) {
      backward(b);
      if (next_fwd <= m) forward(next_fwd++);
    }
    emit(s, TaskKind::kApplyGradients, 0);
  }
}

SimResult simulate(const TaskGraph& tg) {
  const int n = static_cast<int>(tg.nodes.size());
  const int S = tg.num_stages;
  std::vector<std::vector<int>> succs(n);
  std::vector<int> pending(n, 0);
  for (auto [a, b] : tg.edges) {
    succs[a].push_back(b);
    ++pending[b];
  }
  std::vector<int> floating;  // source/sink nodes, not tied to a group
  for (const TaskNode& node : tg.nodes) {
    if (node.stage < 0) floating.push_back(node.id);
  }

  SimResult res;
  res.busy_seconds.assign(S, 0);
  res.comm_seconds.assign(S, 0);
  res.peak_in_flight.assign(S, 0);
  res.peak_activation_bytes.assign(S, 0);
  res.node_start.assign(n, 0);
  res.node_finish.assign(n, 0);

  std::vector<int> head(S, 0);
  std::vector<bool> group_busy(S, false);
  std::vector<bool> started(n, false);
  std::vector<int> in_flight(S, 0);
  int completed = 0;

  using Event = std::pair<double, int>;  // (finish time, node)
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;

  auto try_start = [&](double now) {
    for (int id : floating) {
      if (!started[id] && pending[id] == 0) {
        started[id] = true;
        res.node_start[id] = now;
        events.emplace(now + tg.nodes[id].duration, id);
      }
    }
    for (int s = 0; s < S; ++s) {
      if (group_busy[s] || head[s] >= static_cast<int>(tg.schedule[s].size())) continue;
      int id = tg.schedule[s][head[s]];
      if (started[id] || pending[id] > 0) continue;
      started[id] = true;
      group_busy[s] = true;
      ++head[s];
      res.node_start[id] = now;
      const TaskNode& node = tg.nodes[id];
      if (node.kind == TaskKind::kForward || node.kind == TaskKind::kCompute) {
        ++in_flight[s];
        res.peak_in_flight[s] = std::max(res.peak_in_flight[s], in_flight[s]);
        double act = s < static_cast<int>(tg.activation_bytes.size()) ? tg.activation_bytes[s] : 0;
        res.peak_activation_bytes[s] =
            std::max(res.peak_activation_bytes[s], in_flight[s] * act);
      }
      events.emplace(now + node.duration, id);
    }
  };

  try_start(0.0);
  while (!events.empty()) {
    auto [t, id] = events.top();
    events.pop();
    ++completed;
    res.node_finish[id] = t;
    const TaskNode& node = tg.nodes[id];
    if (node.stage >= 0) {
      group_busy[node.stage] = false;
      if (node.kind == TaskKind::kSend || node.kind == TaskKind::kRecv) {
        res.comm_seconds[node.stage] += node.duration;
      } else {
        res.busy_seconds[node.stage] += node.duration;
      }
      if (node.kind == TaskKind::kBackward || node.kind == TaskKind::kCompute) {
        --in_flight[node.stage];
      }
    }
    for (int b : succs[id]) --pending[b];
    res.makespan = std::max(res.makespan, t);
    try_start(t);
  }
  if (completed != n) {
    throw std::logic_error("task graph deadlock: schedule is not a linear extension");
  }
  return res;
}

std::string TaskGraphToJsonText(const TaskGraph& tg) {
  json j;
  j["num_stages"] = tg.num_stages;
  j["num_microbatches"] = tg.num_microbatches;
  j["activation_bytes"] = tg.activation_bytes;
  j["nodes"] = json::array();
  for (const TaskNode& node : tg.nodes) {
    json jn;
    jn["id"] = node.id;
    jn["kind"] = TaskKindName(node.kind);
    jn["stage"] = node.stage;
    jn["microbatch"] = node.microbatch;
    jn["dir"] = node.dir;
    jn["duration"] = node.duration;
    jn["bytes"] = node.bytes;
    if (node.peer >= 0) jn["peer"] = node.peer;
    jn["label"] = node.label;
    j["nodes"].push_back(jn);
  }
  j["edges"] = json::array();
  for (auto [a, b] : tg.edges) j["edges"].push_back({a, b});
  j["schedule"] = tg.schedule;
  return j.dump();
}

TaskGraph TaskGraphFromJsonText(const std::string& text) {
  json j = json::parse(text);
  TaskGraph tg;
  tg.num_stages = j.at("num_stages").get<int>();
  tg.num_microbatches = j.at("num_microbatches").get<int>();
  tg.activation_bytes = j.at("activation_bytes").get<std::vector<double>>();
  for (const auto& jn : j.at("nodes")) {
    TaskNode node;
    node.id = jn.at("id").get<int>();
    node.kind = TaskKindFromName(jn.at("kind").get<std::string>());
    node.stage = jn.at("stage").get<int>();
    node.microbatch = jn.at("microbatch").get<int>();
    node.dir = jn.value("dir", 0);
    node.duration = jn.at("duration").get<double>();
    node.bytes = jn.at("bytes").get<double>();
    node.peer = jn.value("peer", -1);
    node.label = jn.value("label", std::string());
    tg.nodes.push_back(std::move(node));
  }
  for (const auto& je : j.at("edges")) {
    tg.edges.emplace_back(je.at(0).get<int>(), je.at(1).get<int>());
  }
  tg.schedule = j.at("schedule").get<std::vector<std::vector<int>>>();
  return tg;
}

std::string EmitChromeTrace(const TaskGraph& tg, const SimResult& sim) {
  json j;
  j["traceEvents"] = json::array();
  for (const TaskNode& node : tg.nodes) {
    if (node.stage < 0) continue;
    json e;
    e["name"] = node.label;
    e["cat"] = TaskKindName(node.kind);
    e["ph"] = "X";
    e["ts"] = sim.node_start[node.id] * 1e6;
    e["dur"] = (sim.node_finish[node.id] - sim.node_start[node.id]) * 1e6;
    e["pid"] = node.stage;
    e["tid"] = (node.kind == TaskKind::kSend || node.kind == TaskKind::kRecv) ? 1 : 0;
    j["traceEvents"].push_back(e);
  }
  return j.dump();
}

}  // namespace parashard
