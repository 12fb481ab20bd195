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

#include "parashard/spmd.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace parashard {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ----------------------------------------------------------------------------
// Memory constraints

namespace {

std::vector<int> ParamsBySizeDesc(const TensorProgram& g, const std::vector<TensorShape>& shapes) {
  std::vector<int> params;
  for (int i = 0; i < g.size(); ++i) {
    if (g.op(i).kind == OpKind::kParameter) params.push_back(i);
  }
  std::stable_sort(params.begin(), params.end(), [&](int a, int b) {
    int64_t ba = shapes[a].bytes(), bb = shapes[b].bytes();
    if (ba != bb) return ba > bb;
    return g.op(a).id < g.op(b).id;
  });
  return params;
}

}  // namespace

double MemoryEstimateForK(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                          const MemoryBudget& budget, int d, int k) {
  auto params = ParamsBySizeDesc(g, shapes);
  double total = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    double b = static_cast<double>(shapes[params[i]].bytes()) * (1.0 + budget.optimizer_multiplier);
    total += static_cast<int>(i) < k ? b / d : b;
  }
  return total;
}

MemoryPlan apply_memory_constraint(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                                   const CandidateMap& candidates, const MemoryBudget& budget,
                                   int d, int force_k) {
  auto params = ParamsBySizeDesc(g, shapes);
  MemoryPlan plan;
  plan.candidates = candidates;

  int k = force_k;
  if (k < 0) {
    k = -1;
    for (int trial = 0; trial <= static_cast<int>(params.size()); ++trial) {
      if (MemoryEstimateForK(g, shapes, budget, d, trial) <= static_cast<double>(budget.limit_bytes)) {
        k = trial;
        break;
      }
    }
    if (k < 0) {
      throw InfeasibleError(
          "memory budget infeasible: even with all " + std::to_string(params.size()) +
          " parameters sharded the per-device estimate " +
          std::to_string(MemoryEstimateForK(g, shapes, budget, d, static_cast<int>(params.size()))) +
          " bytes exceeds the limit " + std::to_string(budget.limit_bytes));
    }
  }
  k = std::min<int>(k, static_cast<int>(params.size()));
  plan.k = k;
  plan.estimate_bytes = MemoryEstimateForK(g, shapes, budget, d, k);

  for (int i = 0; i < k; ++i) {
    int op = params[i];
    plan.forced.push_back(op);
    std::vector<OpStrategy> kept;
    for (const auto& s : plan.candidates[op]) {
      if (s.output_spec.is_shard()) kept.push_back(s);
    }
    if (kept.empty()) {
      throw InfeasibleError("memory budget infeasible: parameter '" + g.op(op).id +
                            "' must be sharded but has no shard candidate");
    }
    plan.candidates[op] = std::move(kept);
  }
  return plan;
}

double RealizedParameterBytes(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                              const MemoryBudget& budget, int d,
                              const std::vector<AxisSpec>& out_specs) {
  double total = 0;
  for (int i = 0; i < g.size(); ++i) {
    if (g.op(i).kind != OpKind::kParameter) continue;
    double b = static_cast<double>(shapes[i].bytes()) * (1.0 + budget.optimizer_multiplier);
    total += out_specs[i].is_shard() ? b / d : b;
  }
  return total;
}

// ----------------------------------------------------------------------------
// Cones

namespace {

std::vector<int> DistinctInputs(const TensorProgram& g, int op) {
  std::vector<int> in = g.input_indices(op);
  std::sort(in.begin(), in.end());
  in.erase(std::unique(in.begin(), in.end()), in.end());
  return in;
}

}  // namespace

std::vector<Cone> detect_cones(const TensorProgram& g) {
  const int n = g.size();
  std::vector<int> cone_of(n, -1);
  std::vector<Cone> cones;
  std::vector<bool> is_root(n, false);

  std::vector<int> topo = TopoOrderIndices(g);
  auto climb = [&](int root, int cone_id) {
    std::vector<int> stack = DistinctInputs(g, root);
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      if (cone_of[u] >= 0 || is_root[u]) continue;
      cone_of[u] = cone_id;
      cones[cone_id].members.push_back(u);
      for (int in : DistinctInputs(g, u)) stack.push_back(in);
    }
  };

  for (int i : topo) {
    if (DistinctInputs(g, i).size() >= 2) is_root[i] = true;
  }
  for (int i : topo) {
    if (!is_root[i]) continue;
    int id = static_cast<int>(cones.size());
    cones.push_back({i, {i}});
    cone_of[i] = id;
    climb(i, id);
  }
  // Leftover single-input chains become synthetic cones rooted at their
  // last unclaimed op.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int i = *it;
    if (cone_of[i] >= 0) continue;
    bool sink_here = true;
    for (int c : g.consumer_indices(i)) sink_here = sink_here && cone_of[c] >= 0;
    if (!sink_here) continue;
    int id = static_cast<int>(cones.size());
    cones.push_back({i, {i}});
    cone_of[i] = id;
    climb(i, id);
  }
  for (auto& cone : cones) std::sort(cone.members.begin(), cone.members.end());
  return cones;
}

// ----------------------------------------------------------------------------
// Cone internals shared by solve_cone and the table builder

namespace {

struct ConeLayout {
  const Cone* cone = nullptr;
  std::map<int, int> pos_of;             // op -> member position
  std::vector<int> parent;               // internal producer position, -1 for tops
  std::vector<std::vector<int>> children;
  std::vector<std::vector<int>> root_slots;  // root input slots fed per member
  std::vector<bool> exposed;             // consumers outside the cone
  std::vector<int> rev_order;            // non-root member positions, consumers first
  std::vector<int> tops;                 // positions with no internal parent
  int root_pos = -1;
};

ConeLayout MakeLayout(const TensorProgram& g, const Cone& cone) {
  ConeLayout layout;
  layout.cone = &cone;
  const int m = static_cast<int>(cone.members.size());
  for (int p = 0; p < m; ++p) layout.pos_of[cone.members[p]] = p;
  layout.root_pos = layout.pos_of.at(cone.root);
  layout.parent.assign(m, -1);
  layout.children.assign(m, {});
  layout.root_slots.assign(m, {});
  layout.exposed.assign(m, false);

  const auto& root_inputs = g.input_indices(cone.root);
  for (int slot = 0; slot < static_cast<int>(root_inputs.size()); ++slot) {
    auto it = layout.pos_of.find(root_inputs[slot]);
    if (it != layout.pos_of.end() && it->second != layout.root_pos) {
      layout.root_slots[it->second].push_back(slot);
    }
  }
  for (int p = 0; p < m; ++p) {
    int op = cone.members[p];
    if (p != layout.root_pos) {
      auto di = DistinctInputs(g, op);
      if (!di.empty()) {
        auto it = layout.pos_of.find(di[0]);
        if (it != layout.pos_of.end()) {
          layout.parent[p] = it->second;
          layout.children[it->second].push_back(p);
        }
      }
      if (layout.parent[p] < 0) layout.tops.push_back(p);
    }
    for (int c : g.consumer_indices(op)) {
      if (!layout.pos_of.count(c)) layout.exposed[p] = true;
    }
  }
  // Reverse topological order of the non-root members (consumers first).
  std::vector<int> topo = TopoOrderIndices(g);
  std::vector<int> topo_pos(g.size());
  for (int i = 0; i < static_cast<int>(topo.size()); ++i) topo_pos[topo[i]] = i;
  for (int p = 0; p < m; ++p) {
    if (p != layout.root_pos) layout.rev_order.push_back(p);
  }
  std::sort(layout.rev_order.begin(), layout.rev_order.end(),
            [&](int a, int b) { return topo_pos[cone.members[a]] > topo_pos[cone.members[b]]; });
  return layout;
}

double EdgeSeconds(const SpmdAxisContext& ctx, int producer_op, const AxisSpec& out,
                   const Operator& consumer, const std::vector<int>& consumer_inputs,
                   const OpStrategy& consumer_strategy) {
  double total = 0;
  for (size_t slot = 0; slot < consumer_inputs.size(); ++slot) {
    if (consumer_inputs[slot] != producer_op) continue;
    total += reshard_cost(out, consumer_strategy.input_specs[slot], ctx.shapes[producer_op],
                          ctx.mesh, ctx.axis)
                 .seconds;
  }
  (void)consumer;
  return total;
}

}  // namespace

std::pair<std::map<int, int>, double> solve_cone(const SpmdAxisContext& ctx,
                                                 const CandidateMap& cand, const Cone& cone,
                                                 int root_choice) {
  const TensorProgram& g = *ctx.g;
  ConeLayout layout = MakeLayout(g, cone);
  const OpStrategy& root_strat = cand[cone.root][root_choice];

  const int m = static_cast<int>(cone.members.size());
  std::vector<std::vector<double>> table(m);
  std::vector<std::vector<std::vector<int>>> arg(m);  // per choice: child picks

  for (int pos : layout.rev_order) {
    int op = cone.members[pos];
    const auto& in_idx = g.input_indices(op);
    table[pos].assign(cand[op].size(), 0);
    arg[pos].assign(cand[op].size(), {});
    for (size_t c = 0; c < cand[op].size(); ++c) {
      double cost = cand[op][c].comp_flops / ctx.device_flops;
      const AxisSpec& out = cand[op][c].output_spec;
      for (int slot : layout.root_slots[pos]) {
        cost += reshard_cost(out, root_strat.input_specs[slot], ctx.shapes[op], ctx.mesh, ctx.axis)
                    .seconds;
      }
      for (int w : layout.children[pos]) {
        int wop = cone.members[w];
        double best = kInf;
        int best_choice = 0;
        for (size_t wc = 0; wc < cand[wop].size(); ++wc) {
          double e = EdgeSeconds(ctx, op, out, g.op(wop), g.input_indices(wop), cand[wop][wc]) +
                     table[w][wc];
          if (e < best) {
            best = e;
            best_choice = static_cast<int>(wc);
          }
        }
        cost += best;
        arg[pos][c].push_back(best_choice);
      }
      table[pos][c] = cost;
      (void)in_idx;
    }
  }

  std::map<int, int> assignment;
  assignment[cone.root] = root_choice;
  double total = root_strat.comp_flops / ctx.device_flops;
  // Walk each tree from its top-level min.
  std::vector<std::pair<int, int>> stack;  // (position, choice)
  for (int top : layout.tops) {
    double best = kInf;
    int best_choice = 0;
    for (size_t c = 0; c < cand[cone.members[top]].size(); ++c) {
      if (table[top][c] < best) {
        best = table[top][c];
        best_choice = static_cast<int>(c);
      }
    }
    total += best;
    stack.emplace_back(top, best_choice);
  }
  while (!stack.empty()) {
    auto [pos, choice] = stack.back();
    stack.pop_back();
    assignment[cone.members[pos]] = choice;
    for (size_t wi = 0; wi < layout.children[pos].size(); ++wi) {
      stack.emplace_back(layout.children[pos][wi], arg[pos][choice][wi]);
    }
  }
  return {std::move(assignment), total};
}

// ----------------------------------------------------------------------------
// Cone strategy tables: entries keyed by what the rest of the graph can see

namespace {

// One interface slot of a cone: either an input requirement (member consuming
// an external tensor) or an output spec (member feeding an external consumer).
struct SigSlot {
  bool is_out = false;
  int op = -1;    // the member
  int slot = -1;  // input slot (in-slots only)
  int peer = -1;  // external producer (in-slots)
};

struct ConeEntry {
  std::vector<int> choice;  // per member position
  double cost = 0;          // internal seconds, root compute included
};

struct ConeTable {
  ConeLayout layout;
  std::vector<SigSlot> sig_slots;
  std::vector<ConeEntry> entries;
};

using Sig = std::map<int, AxisSpec>;  // sig-slot index -> spec

struct Partial {
  int choice = 0;
  Sig sig;
  double cost = 0;
  std::map<int, int> choices;  // member position -> choice
};

std::vector<SigSlot> MakeSigSlots(const TensorProgram& g, const ConeLayout& layout) {
  std::vector<SigSlot> slots;
  const Cone& cone = *layout.cone;
  for (int p = 0; p < static_cast<int>(cone.members.size()); ++p) {
    int op = cone.members[p];
    const auto& in_idx = g.input_indices(op);
    for (int s = 0; s < static_cast<int>(in_idx.size()); ++s) {
      if (!layout.pos_of.count(in_idx[s])) {
        slots.push_back({false, op, s, in_idx[s]});
      }
    }
    if (layout.exposed[p]) slots.push_back({true, op, -1, -1});
  }
  return slots;
}

Sig OwnSig(const TensorProgram& g, const ConeLayout& layout,
           const std::vector<SigSlot>& sig_slots, int pos, const OpStrategy& strat) {
  Sig sig;
  int op = layout.cone->members[pos];
  for (int si = 0; si < static_cast<int>(sig_slots.size()); ++si) {
    const SigSlot& ss = sig_slots[si];
    if (ss.op != op) continue;
    sig[si] = ss.is_out ? strat.output_spec : strat.input_specs[ss.slot];
  }
  (void)g;
  return sig;
}

void MergeSig(Sig& into, const Sig& from) {
  for (const auto& [k, v] : from) into.emplace(k, v);
}

// Builds all undominated entries of a cone over every root choice.
ConeTable BuildConeTable(const SpmdAxisContext& ctx, const CandidateMap& cand, const Cone& cone) {
  const TensorProgram& g = *ctx.g;
  ConeTable table;
  table.layout = MakeLayout(g, cone);
  table.sig_slots = MakeSigSlots(g, table.layout);
  const ConeLayout& layout = table.layout;
  const int m = static_cast<int>(cone.members.size());

  for (int j = 0; j < static_cast<int>(cand[cone.root].size()); ++j) {
    const OpStrategy& root_strat = cand[cone.root][j];
    std::vector<std::vector<Partial>> plist(m);

    for (int pos : layout.rev_order) {
      int op = cone.members[pos];
      for (int c = 0; c < static_cast<int>(cand[op].size()); ++c) {
        const OpStrategy& strat = cand[op][c];
        double base = strat.comp_flops / ctx.device_flops;
        for (int slot : layout.root_slots[pos]) {
          base += reshard_cost(strat.output_spec, root_strat.input_specs[slot], ctx.shapes[op],
                               ctx.mesh, ctx.axis)
                      .seconds;
        }
        std::vector<Partial> combos;
        Partial seed;
        seed.choice = c;
        seed.sig = OwnSig(g, layout, table.sig_slots, pos, strat);
        seed.cost = base;
        seed.choices[pos] = c;
        combos.push_back(std::move(seed));

        for (int w : layout.children[pos]) {
          int wop = cone.members[w];
          // Child partials reduce to the cheapest per signature once the
          // connecting edge is priced against our output spec.
          std::map<Sig, Partial> reduced;
          for (const Partial& pw : plist[w]) {
            double edge = EdgeSeconds(ctx, op, strat.output_spec, g.op(wop),
                                      g.input_indices(wop), cand[wop][pw.choice]);
            double total = edge + pw.cost;
            auto it = reduced.find(pw.sig);
            if (it == reduced.end() || total < it->second.cost) {
              Partial r = pw;
              r.cost = total;
              reduced[pw.sig] = std::move(r);
            }
          }
          std::map<std::pair<int, Sig>, Partial> next;  // (choice is fixed) keyed by sig
          for (const Partial& combo : combos) {
            for (const auto& [wsig, wpart] : reduced) {
              Partial merged = combo;
              merged.cost += wpart.cost;
              MergeSig(merged.sig, wsig);
              for (const auto& [mp, mc] : wpart.choices) merged.choices[mp] = mc;
              auto key = std::make_pair(merged.choice, merged.sig);
              auto it = next.find(key);
              if (it == next.end() || merged.cost < it->second.cost) next[key] = std::move(merged);
            }
          }
          combos.clear();
          for (auto& [k, v] : next) combos.push_back(std::move(v));
        }
        for (auto& combo : combos) plist[pos].push_back(std::move(combo));
      }
      // Tree tops have no internal consumer left to distinguish choices.
      if (layout.parent[pos] < 0) {
        std::map<Sig, Partial> collapsed;
        for (Partial& pp : plist[pos]) {
          auto it = collapsed.find(pp.sig);
          if (it == collapsed.end() || pp.cost < it->second.cost) collapsed[pp.sig] = std::move(pp);
        }
        plist[pos].clear();
        for (auto& [k, v] : collapsed) plist[pos].push_back(std::move(v));
      }
    }

    // Root seed, then cross with every tree.
    Partial root_seed;
    root_seed.choice = j;
    root_seed.sig = OwnSig(g, layout, table.sig_slots, layout.root_pos, root_strat);
    root_seed.cost = root_strat.comp_flops / ctx.device_flops;
    root_seed.choices[layout.root_pos] = j;
    std::map<Sig, Partial> acc;
    acc[root_seed.sig] = root_seed;
    for (int top : layout.tops) {
      std::map<Sig, Partial> next;
      for (const auto& [asig, apart] : acc) {
        for (const Partial& tp : plist[top]) {
          Partial merged = apart;
          merged.cost += tp.cost;
          MergeSig(merged.sig, tp.sig);
          for (const auto& [mp, mc] : tp.choices) merged.choices[mp] = mc;
          auto it = next.find(merged.sig);
          if (it == next.end() || merged.cost < it->second.cost) next[merged.sig] = std::move(merged);
        }
      }
      acc = std::move(next);
    }
    for (const auto& [sig, part] : acc) {
      ConeEntry entry;
      entry.cost = part.cost;
      entry.choice.assign(m, 0);
      for (const auto& [mp, mc] : part.choices) entry.choice[mp] = mc;
      table.entries.push_back(std::move(entry));
    }
  }

  // Domination pruning: drop entries that are at least as expensive in every
  // external context. Deltas are summed per interface slot against the
  // producer/consumer candidate universes (Replicated included, since the O2
  // bypass pricing materializes through it).
  const auto& slots = table.sig_slots;
  auto spec_at = [&](const ConeEntry& e, int si) {
    const SigSlot& ss = slots[si];
    int pos = layout.pos_of.at(ss.op);
    const OpStrategy& st = cand[ss.op][e.choice[pos]];
    return ss.is_out ? st.output_spec : st.input_specs[ss.slot];
  };
  // Context universes per slot.
  std::vector<std::vector<AxisSpec>> universes(slots.size());
  std::vector<std::vector<std::pair<int, int>>> out_edges(slots.size());  // (consumer, slot)
  for (int si = 0; si < static_cast<int>(slots.size()); ++si) {
    const SigSlot& ss = slots[si];
    std::set<AxisSpec> u;
    if (!ss.is_out) {
      for (const auto& s : cand[ss.peer]) u.insert(s.output_spec);
      u.insert(AxisSpec::Replicated());
    } else {
      for (int c : g.consumer_indices(ss.op)) {
        if (layout.pos_of.count(c)) continue;
        const auto& cin = g.input_indices(c);
        for (int s = 0; s < static_cast<int>(cin.size()); ++s) {
          if (cin[s] == ss.op) out_edges[si].emplace_back(c, s);
        }
      }
      for (const auto& [c, s] : out_edges[si]) {
        for (const auto& cs : cand[c]) u.insert(cs.input_specs[s]);
      }
      u.insert(AxisSpec::Replicated());
    }
    universes[si].assign(u.begin(), u.end());
  }
  auto delta = [&](const ConeEntry& b, const ConeEntry& a) {
    double total = b.cost - a.cost;
    for (int si = 0; si < static_cast<int>(slots.size()); ++si) {
      AxisSpec sb = spec_at(b, si), sa = spec_at(a, si);
      if (sb == sa) continue;
      const SigSlot& ss = slots[si];
      const TensorShape& shape = ss.is_out ? ctx.shapes[ss.op] : ctx.shapes[ss.peer];
      double worst = -kInf;
      for (const AxisSpec& context : universes[si]) {
        double dd = ss.is_out
                        ? reshard_cost(sb, context, shape, ctx.mesh, ctx.axis).seconds -
                              reshard_cost(sa, context, shape, ctx.mesh, ctx.axis).seconds
                        : reshard_cost(context, sb, shape, ctx.mesh, ctx.axis).seconds -
                              reshard_cost(context, sa, shape, ctx.mesh, ctx.axis).seconds;
        worst = std::max(worst, dd);
      }
      int multiplicity = ss.is_out ? std::max<int>(1, static_cast<int>(out_edges[si].size())) : 1;
      total += worst * multiplicity;
    }
    return total;
  };
  std::vector<ConeEntry> kept;
  for (const ConeEntry& e : table.entries) {
    bool dominated = false;
    for (const ConeEntry& k : kept) {
      if (delta(k, e) <= 0.0) {
        dominated = true;
        break;
      }
    }
    if (dominated) continue;
    std::vector<ConeEntry> next;
    for (ConeEntry& k : kept) {
      if (!(delta(e, k) <= 0.0)) next.push_back(std::move(k));
    }
    next.push_back(e);
    kept = std::move(next);
  }
  table.entries = std::move(kept);
  return table;
}

}  // namespace

// ----------------------------------------------------------------------------
// ILP over choice graphs

StrategyIlp BuildChoiceIlp(const ChoiceGraph& cg, bool all_pairs) {
  StrategyIlp out;
  IlpProblem& p = out.problem;
  out.x_var.resize(cg.node_cost.size());
  for (size_t n = 0; n < cg.node_cost.size(); ++n) {
    std::vector<std::pair<int, double>> group;
    for (size_t j = 0; j < cg.node_cost[n].size(); ++j) {
      int v = p.AddBinary(cg.node_cost[n][j],
                          "x_" + std::to_string(n) + "_" + std::to_string(j));
      out.x_var[n].push_back(v);
      group.emplace_back(v, 1.0);
    }
    p.AddConstraint(std::move(group), IlpRelation::kEq, 1.0);
  }
  for (size_t e = 0; e < cg.edges.size(); ++e) {
    const auto& edge = cg.edges[e];
    for (size_t ja = 0; ja < edge.comm.size(); ++ja) {
      for (size_t jb = 0; jb < edge.comm[ja].size(); ++jb) {
        double c = edge.comm[ja][jb];
        if (!all_pairs && c <= 0) continue;
        int a = p.AddBinary(c, "a_" + std::to_string(e) + "_" + std::to_string(ja) + "_" +
                                   std::to_string(jb));
        p.AddConstraint({{a, 1.0}, {out.x_var[edge.a][ja], -1.0}, {out.x_var[edge.b][jb], -1.0}},
                        IlpRelation::kGe, -1.0);
      }
    }
  }
  return out;
}

std::pair<std::vector<int>, IlpStatus> SolveChoiceGraph(const ChoiceGraph& cg, double time_limit) {
  StrategyIlp si = BuildChoiceIlp(cg, /*all_pairs=*/false);
  IlpSolution sol = solve(si.problem, time_limit);
  if (sol.assignment.empty()) {
    throw InfeasibleError("strategy ILP produced no assignment");
  }
  std::vector<int> choice(cg.node_cost.size(), 0);
  for (size_t n = 0; n < cg.node_cost.size(); ++n) {
    for (size_t j = 0; j < si.x_var[n].size(); ++j) {
      if (sol.assignment[si.x_var[n][j]] == 1) choice[n] = static_cast<int>(j);
    }
  }
  return {std::move(choice), sol.status};
}

StrategyIlp build_ilp(const SpmdAxisContext& ctx, const CandidateMap& cand) {
  const TensorProgram& g = *ctx.g;
  ChoiceGraph cg;
  cg.node_cost.resize(g.size());
  for (int i = 0; i < g.size(); ++i) {
    if (cand[i].empty()) throw InfeasibleError("op '" + g.op(i).id + "' has no candidates");
    for (const auto& s : cand[i]) cg.node_cost[i].push_back(s.comp_flops / ctx.device_flops);
  }
  for (const auto& [pi, ci] : g.Edges()) {
    ChoiceGraph::Edge edge;
    edge.a = pi;
    edge.b = ci;
    edge.comm.assign(cand[pi].size(), std::vector<double>(cand[ci].size(), 0));
    for (size_t ja = 0; ja < cand[pi].size(); ++ja) {
      for (size_t jb = 0; jb < cand[ci].size(); ++jb) {
        edge.comm[ja][jb] = EdgeSeconds(ctx, pi, cand[pi][ja].output_spec, g.op(ci),
                                        g.input_indices(ci), cand[ci][jb]);
      }
    }
    cg.edges.push_back(std::move(edge));
  }
  return BuildChoiceIlp(cg, /*all_pairs=*/true);
}

// ----------------------------------------------------------------------------
// Searches

namespace {

struct SearchSetup {
  CandidateMap cand;
  int forced_k = 0;
  std::vector<Cone> cones;
  std::vector<int> cone_of;  // op -> cone
  std::vector<ConeTable> tables;
  // Cut edges (producer, consumer, slot) between different cones.
  struct Cut {
    int p, c, slot;
  };
  std::vector<Cut> cuts;
};

SearchSetup Prepare(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                    const MemoryBudget* budget, int force_k) {
  const TensorProgram& g = *ctx.g;
  SearchSetup setup;
  setup.cand = candidates;
  if (budget) {
    MemoryPlan mp = apply_memory_constraint(g, ctx.shapes, candidates, *budget, ctx.d(), force_k);
    setup.cand = std::move(mp.candidates);
    setup.forced_k = mp.k;
  }
  for (int i = 0; i < g.size(); ++i) {
    if (setup.cand[i].empty()) throw InfeasibleError("op '" + g.op(i).id + "' has no candidates");
  }
  setup.cones = detect_cones(g);
  setup.cone_of.assign(g.size(), -1);
  for (int c = 0; c < static_cast<int>(setup.cones.size()); ++c) {
    for (int op : setup.cones[c].members) setup.cone_of[op] = c;
  }
  for (int c = 0; c < static_cast<int>(setup.cones.size()); ++c) {
    setup.tables.push_back(BuildConeTable(ctx, setup.cand, setup.cones[c]));
  }
  for (int i = 0; i < g.size(); ++i) {
    const auto& in_idx = g.input_indices(i);
    for (int s = 0; s < static_cast<int>(in_idx.size()); ++s) {
      if (setup.cone_of[in_idx[s]] != setup.cone_of[i]) {
        setup.cuts.push_back({in_idx[s], i, s});
      }
    }
  }
  return setup;
}

AxisSpec EntryOutSpec(const SearchSetup& setup, int cone, const ConeEntry& e, int op,
                      const CandidateMap& cand) {
  int pos = setup.tables[cone].layout.pos_of.at(op);
  return cand[op][e.choice[pos]].output_spec;
}

AxisSpec EntryInSpec(const SearchSetup& setup, int cone, const ConeEntry& e, int op, int slot,
                     const CandidateMap& cand) {
  int pos = setup.tables[cone].layout.pos_of.at(op);
  return cand[op][e.choice[pos]].input_specs[slot];
}

SpmdResult Finish(const SpmdAxisContext& ctx, const SearchSetup& setup,
                  const std::vector<int>& entry_choice, IlpStatus status,
                  const MemoryBudget* budget) {
  const TensorProgram& g = *ctx.g;
  SpmdResult result;
  result.choice.assign(g.size(), 0);
  for (int c = 0; c < static_cast<int>(setup.cones.size()); ++c) {
    const ConeEntry& e = setup.tables[c].entries[entry_choice[c]];
    for (size_t pos = 0; pos < setup.cones[c].members.size(); ++pos) {
      result.choice[setup.cones[c].members[pos]] = e.choice[pos];
    }
  }
  result.specs.reserve(g.size());
  for (int i = 0; i < g.size(); ++i) {
    result.specs.push_back(setup.cand[i][result.choice[i]].output_spec);
  }
  result.cost = StrategyObjective(g, ctx.shapes, setup.cand, result.choice, ctx.mesh, ctx.axis,
                                  ctx.device_flops);
  result.status = status;
  result.forced_k = setup.forced_k;
  result.stats = CollectStrategyStats(ctx, setup.cand, result.choice);
  if (budget) {
    result.memory_estimate_bytes =
        RealizedParameterBytes(g, ctx.shapes, *budget, ctx.d(), result.specs);
  }
  return result;
}

}  // namespace

SpmdResult search_o3(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                     const MemoryBudget* budget, int force_k) {
  SearchSetup setup = Prepare(ctx, candidates, budget, force_k);
  const int num_cones = static_cast<int>(setup.cones.size());

  ChoiceGraph cg;
  cg.node_cost.resize(num_cones);
  for (int c = 0; c < num_cones; ++c) {
    for (const auto& e : setup.tables[c].entries) cg.node_cost[c].push_back(e.cost);
  }
  // Group cut edges by unordered cone pair, one comm matrix each.
  std::map<std::pair<int, int>, std::vector<const SearchSetup::Cut*>> by_pair;
  for (const auto& cut : setup.cuts) {
    int a = setup.cone_of[cut.p], b = setup.cone_of[cut.c];
    by_pair[{std::min(a, b), std::max(a, b)}].push_back(&cut);
  }
  for (const auto& [pair, cuts] : by_pair) {
    auto [a, b] = pair;
    ChoiceGraph::Edge edge;
    edge.a = a;
    edge.b = b;
    edge.comm.assign(setup.tables[a].entries.size(),
                     std::vector<double>(setup.tables[b].entries.size(), 0));
    for (size_t ja = 0; ja < setup.tables[a].entries.size(); ++ja) {
      for (size_t jb = 0; jb < setup.tables[b].entries.size(); ++jb) {
        double total = 0;
        for (const auto* cut : cuts) {
          int pc = setup.cone_of[cut->p];
          const ConeEntry& pe = setup.tables[a].entries[ja];
          const ConeEntry& ce = setup.tables[b].entries[jb];
          const ConeEntry& prod = (pc == a) ? pe : ce;
          const ConeEntry& cons = (pc == a) ? ce : pe;
          AxisSpec out = EntryOutSpec(setup, pc, prod, cut->p, setup.cand);
          AxisSpec req = EntryInSpec(setup, setup.cone_of[cut->c], cons, cut->c, cut->slot,
                                     setup.cand);
          total += reshard_cost(out, req, ctx.shapes[cut->p], ctx.mesh, ctx.axis).seconds;
        }
        edge.comm[ja][jb] = total;
      }
    }
    cg.edges.push_back(std::move(edge));
  }

  auto [entry_choice, status] = SolveChoiceGraph(cg, ctx.ilp_time_limit);
  SpmdResult result = Finish(ctx, setup, entry_choice, status, budget);
  result.segment_count = 1;
  return result;
}

SpmdResult search_o2(const SpmdAxisContext& ctx, const CandidateMap& candidates,
                     const MemoryBudget* budget, int force_k) {
  const TensorProgram& g = *ctx.g;
  SearchSetup setup = Prepare(ctx, candidates, budget, force_k);
  const int num_cones = static_cast<int>(setup.cones.size());

  // Pivots: critical nodes that root a cone, ordered by earliest level.
  BackboneAnalysis backbone = compute_backbone(g, ctx.flops_threshold);
  std::vector<int> pivots;
  for (const OpId& id : backbone.critical_nodes) {
    int idx = g.IndexOf(id);
    if (setup.cones[setup.cone_of[idx]].root == idx) pivots.push_back(idx);
  }
  std::sort(pivots.begin(), pivots.end(), [&](int a, int b) {
    int ea = backbone.earliest.at(g.op(a).id), eb = backbone.earliest.at(g.op(b).id);
    if (ea != eb) return ea < eb;
    return g.op(a).id < g.op(b).id;
  });
  const int K = static_cast<int>(pivots.size());

  // Segment of an op: the first pivot it precedes (pivots own their segment).
  std::vector<int> seg_of_op(g.size(), K);
  for (int t = K - 1; t >= 0; --t) {
    std::vector<bool> anc = AncestorMask(g, pivots[t]);
    for (int i = 0; i < g.size(); ++i) {
      if (anc[i] || i == pivots[t]) seg_of_op[i] = std::min(seg_of_op[i], t);
    }
  }
  std::vector<int> seg_of_cone(num_cones);
  for (int c = 0; c < num_cones; ++c) seg_of_cone[c] = seg_of_op[setup.cones[c].root];
  const int num_segments = K + 1;

  std::vector<std::vector<int>> cones_in_seg(num_segments);
  for (int c = 0; c < num_cones; ++c) cones_in_seg[seg_of_cone[c]].push_back(c);

  SpmdResult result;
  result.segment_count = num_segments;

  // Classify cut edges per segment: exact-intra, exact-from-previous-pivot,
  // or pessimistic (producer pays the materialization to Replicated).
  std::vector<std::pair<int, int>> pessimistic;
  for (const auto& cut : setup.cuts) {
    int sa = seg_of_cone[setup.cone_of[cut.p]];
    int sb = seg_of_cone[setup.cone_of[cut.c]];
    if (sa == sb) continue;
    bool pivot_adjacent = sb == sa + 1 && sa < K && cut.p == pivots[sa];
    if (!pivot_adjacent) pessimistic.emplace_back(cut.p, cut.c);
  }
  std::sort(pessimistic.begin(), pessimistic.end());
  pessimistic.erase(std::unique(pessimistic.begin(), pessimistic.end()), pessimistic.end());
  result.pessimistic_edges = pessimistic;

  // Solves one segment with the previous pivot fixed at `e_state` (candidate
  // index, -1 for the first segment) and, for t < K, this segment's pivot
  // fixed at `x_state`. Returns the cost and per-cone entry choices.
  auto solve_segment = [&](int t, int e_state, int x_state,
                           std::vector<int>* entries_out) -> double {
    const auto& cones = cones_in_seg[t];
    std::map<int, int> node_of;  // cone -> node
    ChoiceGraph cg;
    std::vector<std::vector<int>> entry_index(cones.size());  // node -> table entry ids
    for (size_t ni = 0; ni < cones.size(); ++ni) {
      int c = cones[ni];
      node_of[c] = static_cast<int>(ni);
      const ConeTable& table = setup.tables[c];
      bool is_pivot_cone = t < K && setup.cone_of[pivots[t]] == c;
      std::vector<double> costs;
      for (int ei = 0; ei < static_cast<int>(table.entries.size()); ++ei) {
        if (is_pivot_cone) {
          int pos = table.layout.pos_of.at(pivots[t]);
          if (table.entries[ei].choice[pos] != x_state) continue;
        }
        entry_index[ni].push_back(ei);
        costs.push_back(table.entries[ei].cost);
      }
      if (costs.empty()) return kInf;
      cg.node_cost.push_back(std::move(costs));
    }
    int entry_node = -1;
    if (t > 0) {
      entry_node = static_cast<int>(cg.node_cost.size());
      cg.node_cost.push_back({0.0});
    }

    std::map<std::pair<int, int>, ChoiceGraph::Edge> edges;
    auto edge_for = [&](int na, int nb) -> ChoiceGraph::Edge& {
      auto key = std::make_pair(std::min(na, nb), std::max(na, nb));
      auto it = edges.find(key);
      if (it == edges.end()) {
        ChoiceGraph::Edge e;
        e.a = key.first;
        e.b = key.second;
        e.comm.assign(cg.node_cost[key.first].size(),
                      std::vector<double>(cg.node_cost[key.second].size(), 0));
        it = edges.emplace(key, std::move(e)).first;
      }
      return it->second;
    };

    for (const auto& cut : setup.cuts) {
      int ca = setup.cone_of[cut.p], cb = setup.cone_of[cut.c];
      int sa = seg_of_cone[ca], sb = seg_of_cone[cb];
      if (sa == t && sb == t) {
        int na = node_of[ca], nb = node_of[cb];
        ChoiceGraph::Edge& e = edge_for(na, nb);
        for (size_t ja = 0; ja < cg.node_cost[e.a].size(); ++ja) {
          for (size_t jb = 0; jb < cg.node_cost[e.b].size(); ++jb) {
            int ia = (e.a == na) ? static_cast<int>(ja) : static_cast<int>(jb);
            int ib = (e.a == na) ? static_cast<int>(jb) : static_cast<int>(ja);
            const ConeEntry& prod = setup.tables[ca].entries[entry_index[node_of[ca]][ia]];
            const ConeEntry& cons = setup.tables[cb].entries[entry_index[node_of[cb]][ib]];
            AxisSpec out = EntryOutSpec(setup, ca, prod, cut.p, setup.cand);
            AxisSpec req = EntryInSpec(setup, cb, cons, cut.c, cut.slot, setup.cand);
            e.comm[ja][jb] +=
                reshard_cost(out, req, ctx.shapes[cut.p], ctx.mesh, ctx.axis).seconds;
          }
        }
        continue;
      }
      bool pivot_adjacent = sb == sa + 1 && sa < K && cut.p == pivots[sa];
      if (pivot_adjacent && sb == t) {
        // Previous pivot's output spec is known from the DP state.
        AxisSpec out = setup.cand[cut.p][e_state].output_spec;
        int nb = node_of[cb];
        ChoiceGraph::Edge& e = edge_for(entry_node, nb);
        for (size_t jb = 0; jb < entry_index[nb].size(); ++jb) {
          const ConeEntry& cons = setup.tables[cb].entries[entry_index[nb][jb]];
          AxisSpec req = EntryInSpec(setup, cb, cons, cut.c, cut.slot, setup.cand);
          double cost = reshard_cost(out, req, ctx.shapes[cut.p], ctx.mesh, ctx.axis).seconds;
          if (e.a == entry_node) {
            e.comm[0][jb] += cost;
          } else {
            e.comm[jb][0] += cost;
          }
        }
        continue;
      }
      // Pessimistic: the producing segment pays the gather to Replicated.
      if (sa == t && !pivot_adjacent) {
        int na = node_of[ca];
        for (size_t ja = 0; ja < entry_index[na].size(); ++ja) {
          const ConeEntry& prod = setup.tables[ca].entries[entry_index[na][ja]];
          AxisSpec out = EntryOutSpec(setup, ca, prod, cut.p, setup.cand);
          cg.node_cost[na][ja] +=
              reshard_cost(out, AxisSpec::Replicated(), ctx.shapes[cut.p], ctx.mesh, ctx.axis)
                  .seconds;
        }
      }
      // The consumer side re-slices from Replicated for free.
    }
    for (auto& [k, e] : edges) cg.edges.push_back(std::move(e));

    auto [choice, status] = SolveChoiceGraph(cg, ctx.ilp_time_limit);
    if (status == IlpStatus::kFeasible) result.status = IlpStatus::kFeasible;
    double total = 0;
    for (size_t n = 0; n < cg.node_cost.size(); ++n) total += cg.node_cost[n][choice[n]];
    for (const auto& e : cg.edges) total += e.comm[choice[e.a]][choice[e.b]];
    if (entries_out) {
      entries_out->assign(cones.size(), 0);
      for (size_t ni = 0; ni < cones.size(); ++ni) {
        (*entries_out)[ni] = entry_index[ni][choice[ni]];
      }
    }
    return total;
  };

  std::vector<int> entry_choice(num_cones, 0);
  if (K == 0) {
    // Single segment: identical to the whole-graph search.
    std::vector<int> entries;
    solve_segment(0, -1, -1, &entries);
    for (size_t ni = 0; ni < cones_in_seg[0].size(); ++ni) {
      entry_choice[cones_in_seg[0][ni]] = entries[ni];
    }
    return Finish(ctx, setup, entry_choice, result.status, budget);
  }

  // Chain DP over pivot candidates.
  std::vector<std::vector<double>> f(num_segments);
  std::vector<std::vector<int>> back(num_segments);
  int first_states = static_cast<int>(setup.cand[pivots[0]].size());
  f[0].assign(first_states, kInf);
  back[0].assign(first_states, -1);
  for (int x = 0; x < first_states; ++x) f[0][x] = solve_segment(0, -1, x, nullptr);
  for (int t = 1; t < K; ++t) {
    int states = static_cast<int>(setup.cand[pivots[t]].size());
    int prev_states = static_cast<int>(setup.cand[pivots[t - 1]].size());
    f[t].assign(states, kInf);
    back[t].assign(states, -1);
    for (int x = 0; x < states; ++x) {
      for (int e = 0; e < prev_states; ++e) {
        if (f[t - 1][e] == kInf) continue;
        double c = solve_segment(t, e, x, nullptr);
        if (f[t - 1][e] + c < f[t][x]) {
          f[t][x] = f[t - 1][e] + c;
          back[t][x] = e;
        }
      }
    }
  }
  // Last segment has no exit pivot.
  double best = kInf;
  int best_last = -1;
  int last_states = static_cast<int>(setup.cand[pivots[K - 1]].size());
  for (int e = 0; e < last_states; ++e) {
    if (f[K - 1][e] == kInf) continue;
    double c = solve_segment(K, e, -1, nullptr);
    if (f[K - 1][e] + c < best) {
      best = f[K - 1][e] + c;
      best_last = e;
    }
  }
  if (best_last < 0) throw InfeasibleError("segment DP found no feasible stitching");

  // Recover pivot states, then re-solve each segment to extract entries.
  std::vector<int> state(K);
  state[K - 1] = best_last;
  for (int t = K - 1; t >= 1; --t) state[t - 1] = back[t][state[t]];
  for (int t = 0; t < num_segments; ++t) {
    std::vector<int> entries;
    int e_state = t > 0 ? state[t - 1] : -1;
    int x_state = t < K ? state[t] : -1;
    solve_segment(t, e_state, x_state, &entries);
    for (size_t ni = 0; ni < cones_in_seg[t].size(); ++ni) {
      entry_choice[cones_in_seg[t][ni]] = entries[ni];
    }
  }
  SpmdResult out = Finish(ctx, setup, entry_choice, result.status, budget);
  out.segment_count = num_segments;
  out.pessimistic_edges = result.pessimistic_edges;
  return out;
}

StrategyStats CollectStrategyStats(const SpmdAxisContext& ctx, const CandidateMap& cand,
                                   const std::vector<int>& choice) {
  const TensorProgram& g = *ctx.g;
  StrategyStats stats;
  for (int i = 0; i < g.size(); ++i) {
    stats.comp_seconds += cand[i][choice[i]].comp_flops / ctx.device_flops;
  }
  for (int j = 0; j < g.size(); ++j) {
    const auto& in_idx = g.input_indices(j);
    for (size_t slot = 0; slot < in_idx.size(); ++slot) {
      int p = in_idx[slot];
      ReshardCost rc = reshard_cost(cand[p][choice[p]].output_spec,
                                    cand[j][choice[j]].input_specs[slot], ctx.shapes[p], ctx.mesh,
                                    ctx.axis);
      stats.comm_seconds += rc.seconds;
      stats.comm_bytes += rc.bytes;
      if (rc.collective != ReshardCost::Collective::kNone) {
        ++stats.collective_counts[CollectiveName(rc.collective)];
      }
    }
  }
  return stats;
}

}  // namespace parashard
