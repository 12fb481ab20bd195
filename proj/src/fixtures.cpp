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

#include "parashard/fixtures.h"

#include <algorithm>
#include <functional>
#include <random>

namespace parashard {

namespace {

std::string Pad2(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

class Builder {
 public:
  explicit Builder(TensorProgram* g) : g_(g) {}

  OpId Param(const OpId& id, std::vector<int64_t> dims) {
    Operator op;
    op.id = id;
    op.kind = OpKind::kParameter;
    op.output_shape = {std::move(dims), 4};
    g_->Add(std::move(op));
    return id;
  }
  OpId Input(const OpId& id, std::vector<int64_t> dims) {
    Operator op;
    op.id = id;
    op.kind = OpKind::kInput;
    op.output_shape = {std::move(dims), 4};
    g_->Add(std::move(op));
    return id;
  }
  OpId Op(const OpId& id, OpKind kind, std::vector<OpId> inputs) {
    Operator op;
    op.id = id;
    op.kind = kind;
    op.inputs = std::move(inputs);
    g_->Add(std::move(op));
    return id;
  }
  OpId MatMul(const OpId& id, const OpId& a, const OpId& b) {
    return Op(id, OpKind::kMatMul, {a, b});
  }
  OpId Add(const OpId& id, const OpId& a, const OpId& b) { return Op(id, OpKind::kAdd, {a, b}); }
  OpId Unary(const OpId& id, const OpId& a) { return Op(id, OpKind::kUnaryElementwise, {a}); }
  OpId Transpose(const OpId& id, const OpId& a) { return Op(id, OpKind::kTranspose, {a}); }
  // A chain of len unary ops id_00..; returns the last id (or `in` when len 0).
  OpId Chain(const std::string& prefix, const OpId& in, int len) {
    OpId cur = in;
    for (int i = 0; i < len; ++i) cur = Unary(prefix + "_" + Pad2(i), cur);
    return cur;
  }

 private:
  TensorProgram* g_;
};

TensorProgram MakeMlp(const FixtureSpec& spec) {
  TensorProgram g;
  Builder b(&g);
  int64_t H = spec.hidden, B = spec.batch;
  OpId x = b.Input("x", {B, H});
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "l" + Pad2(l);
    OpId w = b.Param(p + "_w", {H, H});  // weight/bias pair folded into one square parameter
    OpId mm = b.MatMul(p + "_mm", x, w);
    OpId biased = b.Add(p + "_bias", mm, x);
    x = b.Unary(p + "_act", biased);
  }
  g.SetOutputs({x});
  g.Validate();
  return g;
}

// Chain lengths: the attention branch (ln + score chain + projection mix)
// stays one hop shorter than the gating chain that parallels it, and the FFN
// sits on the trunk. That reproduces the compiled-graph texture where only a
// couple of matmuls per block sit on the zero-slack path.
constexpr int kGptLn1 = 12;
constexpr int kGptScore = 14;
constexpr int kGptMix = 4;
constexpr int kGptGate = 36;
constexpr int kGptLn2 = 12;
constexpr int kGptGelu = 12;

TensorProgram MakeGptLike(const FixtureSpec& spec) {
  TensorProgram g;
  Builder b(&g);
  int64_t H = spec.hidden, B = spec.batch, F = 4 * spec.hidden;
  OpId x = b.Input("x", {B, H});
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "b" + Pad2(l);
    OpId wq = b.Param(p + "_wq", {H, H});
    OpId wk = b.Param(p + "_wk", {H, H});
    OpId wv = b.Param(p + "_wv", {H, H});
    OpId wo = b.Param(p + "_wo", {H, H});
    OpId w1 = b.Param(p + "_w1", {H, F});
    OpId w2 = b.Param(p + "_w2", {F, H});

    OpId n1 = b.Chain(p + "_ln1", x, kGptLn1);
    OpId q = b.MatMul(p + "_q", n1, wq);
    OpId k = b.MatMul(p + "_k", n1, wk);
    OpId v = b.MatMul(p + "_v", n1, wv);
    OpId tk = b.Transpose(p + "_kt", k);
    OpId s = b.MatMul(p + "_score", q, tk);
    OpId sm = b.Chain(p + "_smax", s, kGptScore);
    OpId o = b.MatMul(p + "_ctx", sm, v);
    OpId proj = b.MatMul(p + "_proj", o, wo);
    OpId mix = b.Chain(p + "_mix", proj, kGptMix);
    OpId gate = b.Chain(p + "_gate", x, kGptGate);
    OpId r1 = b.Add(p + "_res1", gate, mix);

    OpId n2 = b.Chain(p + "_ln2", r1, kGptLn2);
    OpId f1 = b.MatMul(p + "_ffn1", n2, w1);
    OpId gl = b.Chain(p + "_gelu", f1, kGptGelu);
    OpId f2 = b.MatMul(p + "_ffn2", gl, w2);
    x = b.Add(p + "_res2", r1, f2);
  }
  g.SetOutputs({x});
  g.Validate();
  return g;
}

TensorProgram MakeMoeLike(const FixtureSpec& spec) {
  TensorProgram g;
  Builder b(&g);
  const int experts = 4;
  int64_t H = spec.hidden, B = spec.batch;
  OpId x = b.Input("x", {B, H});
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "m" + Pad2(l);
    OpId wg = b.Param(p + "_wg", {H, experts});
    OpId gate = b.MatMul(p + "_gate", x, wg);
    OpId gs = b.Chain(p + "_gsm", gate, 2);
    Operator rs;
    rs.id = p + "_gsum";
    rs.kind = OpKind::kReduceSum;
    rs.inputs = {gs};
    rs.axis = 1;
    g.Add(std::move(rs));
    Operator bc;
    bc.id = p + "_gb";
    bc.kind = OpKind::kBroadcast;
    bc.inputs = {p + "_gsum"};
    bc.output_shape = {{H, B}, 4};
    g.Add(std::move(bc));
    OpId gt = b.Transpose(p + "_gt", p + "_gb");
    OpId combined;
    for (int e = 0; e < experts; ++e) {
      std::string ep = p + "_e" + std::to_string(e);
      OpId we = b.Param(ep + "_w", {H, H});
      OpId h = b.MatMul(ep + "_mm", x, we);
      OpId u = b.Unary(ep + "_act", h);
      combined = e == 0 ? u : b.Add(p + "_sum" + std::to_string(e), combined, u);
    }
    x = b.Op(p + "_out", OpKind::kMul, {combined, gt});
  }
  g.SetOutputs({x});
  g.Validate();
  return g;
}

TensorProgram MakeSkipNet(const FixtureSpec& spec) {
  TensorProgram g;
  Builder b(&g);
  int64_t H = spec.hidden, B = spec.batch;
  std::vector<OpId> xs;
  xs.push_back(b.Input("x", {B, H}));
  for (int l = 0; l < spec.layers; ++l) {
    std::string p = "s" + Pad2(l);
    OpId w = b.Param(p + "_w", {H, H});
    OpId mm = b.MatMul(p + "_mm", xs.back(), w);
    OpId u = b.Unary(p + "_act", mm);
    // Skip connection from two levels up once it exists.
    OpId skip = xs.size() >= 2 ? xs[xs.size() - 2] : xs.back();
    xs.push_back(b.Add(p + "_add", u, skip));
  }
  g.SetOutputs({xs.back()});
  g.Validate();
  return g;
}

}  // namespace

TensorProgram generate(const FixtureSpec& spec) {
  if (spec.layers < 1 || spec.hidden < 1 || spec.batch < 1) {
    throw ValidationError("fixture: layers/hidden/batch must be positive");
  }
  if (spec.family == "mlp") return MakeMlp(spec);
  if (spec.family == "gpt_like") return MakeGptLike(spec);
  if (spec.family == "moe_like") return MakeMoeLike(spec);
  if (spec.family == "skipnet") return MakeSkipNet(spec);
  throw ValidationError("fixture: unknown family '" + spec.family + "'");
}

TensorProgram RandomSpmdProgram(uint64_t seed, int max_ops) {
  std::mt19937_64 rng(seed);
  TensorProgram g;
  Builder b(&g);
  const int64_t n = 4;  // [4,4] everywhere keeps every kind composable
  int count = 1 + static_cast<int>(rng() % 2);
  std::vector<OpId> pool;
  for (int i = 0; i < count; ++i) {
    pool.push_back(rng() % 2 == 0 ? b.Input("t" + Pad2(i), {n, n})
                                  : b.Param("t" + Pad2(i), {n, n}));
  }
  int total = std::max(count + 1, static_cast<int>(rng() % (max_ops + 1)));
  total = std::min(total, max_ops);
  for (int i = count; i < total; ++i) {
    OpId id = "t" + Pad2(i);
    const OpId& a = pool[rng() % pool.size()];
    const OpId& c = pool[rng() % pool.size()];
    switch (rng() % 4) {
      case 0: b.MatMul(id, a, c); break;
      case 1: b.Add(id, a, c); break;
      case 2: b.Op(id, OpKind::kMul, {a, c}); break;
      default: b.Unary(id, a); break;
    }
    pool.push_back(id);
  }
  g.Validate();
  return g;
}

TensorProgram RandomPipelineProgram(uint64_t seed, int max_ops) {
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL);
  TensorProgram g;
  Builder b(&g);
  const int64_t n = 4;
  std::vector<OpId> pool;
  pool.push_back(b.Input("t00", {n, n}));
  int total = 4 + static_cast<int>(rng() % std::max(1, max_ops - 3));
  total = std::min(total, max_ops);
  for (int i = 1; i < total; ++i) {
    OpId id = "t" + Pad2(i);
    // Bias toward recent ops so the DAG stays deep rather than bushy.
    auto pick = [&]() -> const OpId& {
      size_t span = std::min<size_t>(pool.size(), 3);
      return pool[pool.size() - 1 - rng() % span];
    };
    switch (rng() % 4) {
      case 0: b.MatMul(id, pick(), pick()); break;
      case 1: b.Add(id, pick(), pick()); break;
      case 2: b.Op(id, OpKind::kMul, {pick(), pick()}); break;
      default: b.Unary(id, pick()); break;
    }
    pool.push_back(id);
  }
  g.Validate();
  return g;
}

CandidateMap CapCandidates(const CandidateMap& candidates, size_t max_per_op) {
  CandidateMap capped(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    std::vector<OpStrategy> kept;
    // The all-replicated strategy stays in every capped list.
    for (const auto& s : candidates[i]) {
      bool all_repl = s.output_spec.is_replicated();
      for (const auto& in : s.input_specs) all_repl = all_repl && in.is_replicated();
      if (all_repl) {
        kept.push_back(s);
        break;
      }
    }
    for (const auto& s : candidates[i]) {
      if (kept.size() >= max_per_op) break;
      if (!kept.empty() && s == kept[0]) continue;
      kept.push_back(s);
    }
    capped[i] = std::move(kept);
  }
  return capped;
}

DeviceMesh UnitTestMesh(int d) {
  DeviceMesh mesh;
  mesh.dims = {d};
  mesh.bandwidth = {1024.0 * 1024.0 * 1024.0};  // 2^30, keeps costs dyadic
  mesh.alpha = {1.0 / (1 << 20)};
  return mesh;
}

SpmdAxisContext MakeTestContext(const TensorProgram& g, const DeviceMesh& mesh, int axis) {
  SpmdAxisContext ctx;
  ctx.g = &g;
  for (const Operator& op : g.ops()) ctx.shapes.push_back(op.output_shape);
  ctx.mesh = mesh;
  ctx.axis = axis;
  ctx.device_flops = 1099511627776.0;  // 2^40
  ctx.ilp_time_limit = 300.0;
  return ctx;
}

BruteForceSpmd brute_force_spmd(const SpmdAxisContext& ctx, const CandidateMap& candidates) {
  const TensorProgram& g = *ctx.g;
  double space = 1;
  for (const auto& c : candidates) {
    if (c.empty()) throw InfeasibleError("brute_force_spmd: op without candidates");
    space *= static_cast<double>(c.size());
    if (space > 1e6) throw std::runtime_error("brute_force_spmd: search space too large");
  }
  BruteForceSpmd best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<int> choice(g.size(), 0);
  // Odometer enumeration in definition order.
  for (;;) {
    double cost = StrategyObjective(g, ctx.shapes, candidates, choice, ctx.mesh, ctx.axis,
                                    ctx.device_flops);
    if (cost < best.cost) {
      best.cost = cost;
      best.choice = choice;
    }
    int pos = g.size() - 1;
    while (pos >= 0) {
      if (++choice[pos] < static_cast<int>(candidates[pos].size())) break;
      choice[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return best;
}

double brute_force_stages(const TensorProgram& g, const PipelineWorkload& w, int d,
                          double epsilon, bool use_bounds) {
  const int n = g.size();
  std::vector<int> order = TopoOrderIndices(g);
  StageBounds bounds;
  if (use_bounds) {
    bounds = tighten_bounds(g, w, d, epsilon);
    if (!bounds.feasible) throw InfeasibleError("brute_force_stages: bounds infeasible");
  } else {
    bounds.lo.assign(n, 0);
    bounds.hi.assign(n, d - 1);
  }
  const auto edges = g.Edges();
  std::vector<int> stage(n, -1);
  std::vector<int> used(d, 0);
  double best = std::numeric_limits<double>::infinity();

  // DFS in topological order with precedence, prefix-usage, and cost pruning.
  std::function<void(size_t, double)> rec = [&](size_t k, double cut) {
    if (cut >= best) return;
    if (k == order.size()) {
      for (int s = 0; s < d; ++s) {
        if (used[s] == 0) return;
      }
      best = cut;
      return;
    }
    int i = order[k];
    int lo = bounds.lo[i], hi = bounds.hi[i];
    for (int p : g.input_indices(i)) lo = std::max(lo, stage[p]);
    for (int s = lo; s <= hi; ++s) {
      stage[i] = s;
      ++used[s];
      double extra = 0;
      for (size_t e = 0; e < edges.size(); ++e) {
        if (edges[e].second == i && stage[edges[e].first] != s) extra += w.edge_bytes[e];
      }
      int empty = 0;
      for (int t = 0; t < d; ++t) {
        if (used[t] == 0) ++empty;
      }
      if (static_cast<int>(order.size() - k - 1) >= empty) rec(k + 1, cut + extra);
      --used[s];
      stage[i] = -1;
    }
  };
  rec(0, 0);
  if (!std::isfinite(best)) throw InfeasibleError("brute_force_stages: no feasible assignment");
  return best;
}

}  // namespace parashard
