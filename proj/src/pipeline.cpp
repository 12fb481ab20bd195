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

#include "parashard/pipeline.h"

#include <algorithm>
#include <cmath>

#include "parashard/spmd.h"

namespace parashard {

PipelineWorkload DefaultWorkload(const TensorProgram& g) {
  PipelineWorkload w;
  for (const Operator& op : g.ops()) w.comp.push_back(op.flops);
  for (const auto& [p, c] : g.Edges()) {
    (void)c;
    w.edge_bytes.push_back(static_cast<double>(g.op(p).output_shape.bytes()));
  }
  return w;
}

StageBounds tighten_bounds(const TensorProgram& g, const PipelineWorkload& w, int d,
                           double epsilon) {
  StageBounds bounds;
  const int n = g.size();
  bounds.lo.assign(n, 0);
  bounds.hi.assign(n, d - 1);
  double total = 0;
  for (double c : w.comp) total += c;
  double tps = total / d;
  if (tps > 0) {
    for (int i = 0; i < n; ++i) {
      std::vector<bool> anc = AncestorMask(g, i);
      std::vector<bool> desc = DescendantMask(g, i);
      double before = 0, after = w.comp[i];
      for (int j = 0; j < n; ++j) {
        if (anc[j]) before += w.comp[j];
        if (desc[j]) after += w.comp[j];
      }
      // The 1e-9 nudges round toward looser bounds so float noise can only
      // relax, never cut off, a feasible stage.
      int lo = static_cast<int>(std::floor(before / tps - epsilon + 1e-9));
      int hi = d - static_cast<int>(std::ceil(after / tps - epsilon - 1e-9));
      bounds.lo[i] = std::max(0, lo);
      bounds.hi[i] = std::min(d - 1, hi);
      if (bounds.lo[i] > bounds.hi[i]) {
        bounds.feasible = false;
        bounds.conflicting_ops.push_back(i);
      }
    }
  }
  for (int i = 0; i < n; ++i) bounds.var_count += std::max(0, bounds.hi[i] - bounds.lo[i] + 1);
  return bounds;
}

StageIlp build_stage_ilp(const TensorProgram& g, const PipelineWorkload& w, int d, double epsilon,
                         bool tighten) {
  StageIlp out;
  if (tighten) {
    out.bounds = tighten_bounds(g, w, d, epsilon);
  } else {
    out.bounds.lo.assign(g.size(), 0);
    out.bounds.hi.assign(g.size(), d - 1);
    out.bounds.var_count = g.size() * d;
  }
  if (!out.bounds.feasible) return out;  // caller reports infeasible-at-epsilon

  IlpProblem& p = out.problem;
  out.stage_var.assign(g.size(), {});
  for (int i = 0; i < g.size(); ++i) {
    std::vector<std::pair<int, double>> group;
    for (int s = out.bounds.lo[i]; s <= out.bounds.hi[i]; ++s) {
      int v = p.AddBinary(0.0, "b_" + g.op(i).id + "_" + std::to_string(s));
      out.stage_var[i].push_back(v);
      group.emplace_back(v, 1.0);
    }
    p.AddConstraint(std::move(group), IlpRelation::kEq, 1.0);
  }

  auto stage_terms = [&](int i, double scale, std::vector<std::pair<int, double>>* terms) {
    for (int s = out.bounds.lo[i]; s <= out.bounds.hi[i]; ++s) {
      if (s != 0) terms->emplace_back(out.stage_var[i][s - out.bounds.lo[i]], scale * s);
    }
  };

  const auto edges = g.Edges();
  const double big_m = d - 1;
  for (size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    int f = p.AddBinary(w.edge_bytes[e], "f_" + g.op(i).id + "_" + g.op(j).id);
    out.cut_var.push_back(f);
    // F <= Bj - Bi  and  Bj - Bi <= F * M
    std::vector<std::pair<int, double>> low{{f, -1.0}};
    stage_terms(j, 1.0, &low);
    stage_terms(i, -1.0, &low);
    p.AddConstraint(std::move(low), IlpRelation::kGe, 0.0);
    std::vector<std::pair<int, double>> high{{f, big_m}};
    stage_terms(j, -1.0, &high);
    stage_terms(i, 1.0, &high);
    p.AddConstraint(std::move(high), IlpRelation::kGe, 0.0);
  }

  // Stage indices in use must form the full prefix 0..d-1.
  for (int s = 0; s < d; ++s) {
    std::vector<std::pair<int, double>> any;
    for (int i = 0; i < g.size(); ++i) {
      if (s >= out.bounds.lo[i] && s <= out.bounds.hi[i]) {
        any.emplace_back(out.stage_var[i][s - out.bounds.lo[i]], 1.0);
      }
    }
    if (any.empty()) {
      out.bounds.feasible = false;
      return out;
    }
    p.AddConstraint(std::move(any), IlpRelation::kGe, 1.0);
  }
  return out;
}

double StageCutVolume(const TensorProgram& g, const PipelineWorkload& w,
                      const std::vector<int>& stage_of) {
  double total = 0;
  const auto edges = g.Edges();
  for (size_t e = 0; e < edges.size(); ++e) {
    if (stage_of[edges[e].first] != stage_of[edges[e].second]) total += w.edge_bytes[e];
  }
  return total;
}

StageAssignment assign_stages(const TensorProgram& g, const PipelineWorkload& w,
                              const PipelineConfig& config, double ilp_time_limit) {
  if (config.stages < 2) throw ValidationError("assign_stages: need at least 2 stages");
  StageIlp si = build_stage_ilp(g, w, config.stages, config.epsilon, /*tighten=*/true);
  if (!si.bounds.feasible) {
    throw InfeasibleError("pipeline balance infeasible at epsilon=" +
                          std::to_string(config.epsilon) +
                          "; increase --pipeline-epsilon");
  }
  IlpSolution sol = solve(si.problem, ilp_time_limit);
  if (sol.status == IlpStatus::kInfeasible || sol.assignment.empty()) {
    throw InfeasibleError("pipeline stage ILP infeasible at epsilon=" +
                          std::to_string(config.epsilon) +
                          "; increase --pipeline-epsilon");
  }

  StageAssignment out;
  out.d = config.stages;
  out.stage_of.assign(g.size(), 0);
  for (int i = 0; i < g.size(); ++i) {
    for (size_t k = 0; k < si.stage_var[i].size(); ++k) {
      if (sol.assignment[si.stage_var[i][k]] == 1) {
        out.stage_of[i] = si.bounds.lo[i] + static_cast<int>(k);
      }
    }
    out.by_id[g.op(i).id] = out.stage_of[i];
  }
  out.cut_volume = StageCutVolume(g, w, out.stage_of);
  out.per_stage_comp.assign(config.stages, 0);
  for (int i = 0; i < g.size(); ++i) out.per_stage_comp[out.stage_of[i]] += w.comp[i];

  // Precedence must hold by construction; verify anyway.
  for (const auto& [i, j] : g.Edges()) {
    if (out.stage_of[j] < out.stage_of[i]) {
      throw std::logic_error("assign_stages: precedence violated in returned assignment");
    }
  }
  return out;
}

std::map<OpId, int> StageAssignment::B() const { return by_id; }

}  // namespace parashard
