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

#ifndef PARASHARD_PIPELINE_H_
#define PARASHARD_PIPELINE_H_

#include <map>
#include <vector>

#include "parashard/ilp.h"
#include "parashard/ir.h"

namespace parashard {

struct PipelineConfig {
  int stages = 2;  // d
  int num_microbatches = 1;
  double epsilon = 0.3;  // balance tolerance in units of time-per-stage
};

// Per-op costs and per-edge tensor sizes the stage ILP optimizes over. Units
// only need to be internally consistent; edge order matches g.Edges().
struct PipelineWorkload {
  std::vector<double> comp;
  std::vector<double> edge_bytes;
};
PipelineWorkload DefaultWorkload(const TensorProgram& g);

struct StageBounds {
  std::vector<int> lo, hi;
  bool feasible = true;
  std::vector<int> conflicting_ops;  // lo > hi
  int var_count = 0;                 // one-hot stage vars implied
};

// Ancestor/descendant workload sums shrink each op's stage range:
//   lo_i = max(0, floor(sum_A comp / tps - eps))
//   hi_i = min(d-1, d - ceil((comp_i + sum_D comp) / tps - eps))
StageBounds tighten_bounds(const TensorProgram& g, const PipelineWorkload& w, int d,
                           double epsilon);

struct StageIlp {
  IlpProblem problem;
  std::vector<std::vector<int>> stage_var;  // op -> var per stage in [lo, hi]
  std::vector<int> cut_var;                 // per edge (g.Edges() order)
  StageBounds bounds;
};

// One-hot stage variables, big-M cut indicators (M = d-1), nonempty-prefix
// rows, and the bound-tightened domains.
StageIlp build_stage_ilp(const TensorProgram& g, const PipelineWorkload& w, int d, double epsilon,
                         bool tighten = true);

struct StageAssignment {
  int d = 1;
  std::vector<int> stage_of;  // by op index
  double cut_volume = 0;      // bytes across stages, per the edge objective
  std::vector<double> per_stage_comp;
  std::map<OpId, int> B() const;  // id-keyed view, filled by assign_stages
  std::map<OpId, int> by_id;
};

// Solves the tightened ILP. Throws InfeasibleError (see spmd.h) when the
// tolerance admits no balanced split; the message says to raise epsilon.
StageAssignment assign_stages(const TensorProgram& g, const PipelineWorkload& w,
                              const PipelineConfig& config,
                              double ilp_time_limit = 60.0);

// Canonical objective of an assignment: bytes summed over stage-crossing
// edges in g.Edges() order.
double StageCutVolume(const TensorProgram& g, const PipelineWorkload& w,
                      const std::vector<int>& stage_of);

}  // namespace parashard

#endif  // PARASHARD_PIPELINE_H_
