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

#ifndef PARASHARD_SPMD_H_
#define PARASHARD_SPMD_H_

#include <map>
#include <vector>

#include "parashard/ilp.h"
#include "parashard/sharding.h"

namespace parashard {

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// Everything a single-axis strategy search needs.
struct SpmdAxisContext {
  const TensorProgram* g = nullptr;
  std::vector<TensorShape> shapes;  // effective shapes for this axis
  DeviceMesh mesh;
  int axis = 0;
  double device_flops = 1e12;
  double ilp_time_limit = 60.0;
  double flops_threshold = 0.0;

  int d() const { return mesh.dims[axis]; }
};

// ----------------------------------------------------------------------------
// Memory constraints (top-k forced parameter sharding)

struct MemoryBudget {
  int64_t limit_bytes = 0;
  double optimizer_multiplier = 3.0;  // state bytes per parameter byte
};

struct MemoryPlan {
  CandidateMap candidates;
  int k = 0;                  // parameters forced to shard
  double estimate_bytes = 0;  // a-priori per-device estimate at k
  std::vector<int> forced;    // op indices, descending size order
};

// Parameters in descending byte order; the estimate charges B*(1+mult)/d for
// the first k and full replication for the rest.
double MemoryEstimateForK(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                          const MemoryBudget& budget, int d, int k);

// Smallest k whose estimate fits (or the forced `force_k`), with Replicated
// removed from the forced parameters' candidates. Throws InfeasibleError when
// no k fits or a forced parameter has no shard candidate.
MemoryPlan apply_memory_constraint(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                                   const CandidateMap& candidates, const MemoryBudget& budget,
                                   int d, int force_k = -1);

// Per-device parameter + optimizer-state bytes under chosen output specs.
double RealizedParameterBytes(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                              const MemoryBudget& budget, int d,
                              const std::vector<AxisSpec>& out_specs);

// ----------------------------------------------------------------------------
// Cones

struct Cone {
  int root = -1;
  std::vector<int> members;  // sorted op indices, includes root
};

// Multi-input ops are roots, extended upward through single-input chains
// until another root or an already-claimed op; leftovers become synthetic
// cones rooted at their sinks. Every op lands in exactly one cone.
std::vector<Cone> detect_cones(const TensorProgram& g);

// Exact tree DP for a fixed root choice, minimizing member compute plus
// internal resharding. Returns (member op index -> candidate index, cost).
std::pair<std::map<int, int>, double> solve_cone(const SpmdAxisContext& ctx,
                                                 const CandidateMap& candidates, const Cone& cone,
                                                 int root_choice);

// ----------------------------------------------------------------------------
// ILP over strategy choices

// Node choices with additive costs and per-edge pair costs; the shared shape
// both the op-level formulation and the cone-level searches lower to.
struct ChoiceGraph {
  std::vector<std::vector<double>> node_cost;
  struct Edge {
    int a = 0, b = 0;
    std::vector<std::vector<double>> comm;  // comm[choice_a][choice_b]
  };
  std::vector<Edge> edges;
};

struct StrategyIlp {
  IlpProblem problem;
  std::vector<std::vector<int>> x_var;  // node -> choice -> var index
};

// The quadratic-cost formulation rewritten with linking variables
// A >= X1 + X2 - 1. `all_pairs` emits A vars even for zero-cost pairs.
StrategyIlp BuildChoiceIlp(const ChoiceGraph& cg, bool all_pairs);

// Op-level problem: one choice set per operator, one linking family per edge.
StrategyIlp build_ilp(const SpmdAxisContext& ctx, const CandidateMap& candidates);

std::pair<std::vector<int>, IlpStatus> SolveChoiceGraph(const ChoiceGraph& cg, double time_limit);

// ----------------------------------------------------------------------------
// Searches

// Aggregate collective statistics of a chosen strategy map.
struct StrategyStats {
  double comp_seconds = 0;
  double comm_seconds = 0;
  double comm_bytes = 0;
  std::map<std::string, int> collective_counts;
};

struct SpmdResult {
  std::vector<int> choice;      // per-op candidate index
  std::vector<AxisSpec> specs;  // per-op output spec
  double cost = 0;              // canonical objective of the chosen map
  IlpStatus status = IlpStatus::kOptimal;
  int forced_k = 0;
  double memory_estimate_bytes = 0;  // realized, parameters + states
  StrategyStats stats;
  // O2 diagnostics: op edges priced pessimistically across segment bounds.
  std::vector<std::pair<int, int>> pessimistic_edges;
  int segment_count = 1;
};

// Whole-graph search: cone tables + one ILP over all cones.
SpmdResult search_o3(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                     const MemoryBudget* budget = nullptr, int force_k = -1);

// Three-level search: cone tables, per-segment ILPs between critical-node
// pivots, and a chain DP over the pivot choices.
SpmdResult search_o2(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                     const MemoryBudget* budget = nullptr, int force_k = -1);

StrategyStats CollectStrategyStats(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                                   const std::vector<int>& choice);

}  // namespace parashard

#endif  // PARASHARD_SPMD_H_
