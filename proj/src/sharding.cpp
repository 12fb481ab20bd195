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

#include "parashard/sharding.h"

#include <algorithm>
#include <deque>
#include <set>

namespace parashard {

std::string AxisSpec::ToString() const {
  switch (kind) {
    case Kind::kShard:
      return "shard(" + std::to_string(dim) + "," + std::to_string(stride) + ")";
    case Kind::kReplicated:
      return "replicated";
    case Kind::kPartial:
      return "partial";
  }
  return "?";
}

std::optional<AxisSpec> AxisSpec::FromString(const std::string& s) {
  if (s == "replicated" || s == "R") return Replicated();
  if (s == "partial" || s == "P") return Partial();
  int dim;
  long long stride;
  if (std::sscanf(s.c_str(), "shard(%d,%lld)", &dim, &stride) == 2) {
    return Shard(dim, stride);
  }
  return std::nullopt;
}

bool SpecValidForShape(const AxisSpec& spec, const TensorShape& shape, int d) {
  if (!spec.is_shard()) return true;
  if (spec.dim < 0 || spec.dim >= shape.rank()) return false;
  if (spec.stride < 1) return false;
  int64_t extent = shape.dims[spec.dim];
  return (static_cast<int64_t>(d) * spec.stride) != 0 && extent % (d * spec.stride) == 0;
}

int64_t MaxStride(const TensorShape& shape, int dim, int d) {
  if (dim < 0 || dim >= shape.rank()) return 0;
  int64_t extent = shape.dims[dim];
  return extent % d == 0 ? extent / d : 0;
}

TensorShape LocalShape(const TensorShape& shape, const AxisSpec& spec, int d) {
  TensorShape local = shape;
  if (spec.is_shard()) local.dims[spec.dim] /= d;
  return local;
}

int OwnerOfFlatIndex(const TensorShape& shape, const AxisSpec& spec, int d, int64_t flat) {
  if (!spec.is_shard()) return -1;
  int64_t inner = shape.inner_size(spec.dim);
  int64_t coord = (flat / inner) % shape.dims[spec.dim];
  return static_cast<int>((coord / spec.stride) % d);
}

std::vector<AxisSpec> enumerate_specs(const TensorShape& shape, int d, bool include_partial) {
  std::vector<AxisSpec> specs;
  if (d <= 1) {
    specs.push_back(AxisSpec::Replicated());
    return specs;
  }
  for (int dim = 0; dim < shape.rank(); ++dim) {
    int64_t extent = shape.dims[dim];
    if (extent % d != 0) continue;
    int64_t q = extent / d;  // valid strides are exactly the factors of q
    for (int64_t s = 1; s <= q; ++s) {
      if (q % s == 0) specs.push_back(AxisSpec::Shard(dim, s));
    }
  }
  specs.push_back(AxisSpec::Replicated());
  if (include_partial) specs.push_back(AxisSpec::Partial());
  return specs;
}

const char* CollectiveName(ReshardCost::Collective c) {
  switch (c) {
    case ReshardCost::Collective::kNone: return "none";
    case ReshardCost::Collective::kAllReduce: return "all_reduce";
    case ReshardCost::Collective::kAllGather: return "all_gather";
    case ReshardCost::Collective::kReduceScatter: return "reduce_scatter";
    case ReshardCost::Collective::kAllToAll: return "all_to_all";
  }
  return "?";
}

ReshardCost reshard_cost(const AxisSpec& from, const AxisSpec& to, const TensorShape& shape,
                         const DeviceMesh& mesh, int axis) {
  const int d = mesh.dims[axis];
  ReshardCost out;
  if (d <= 1 || from == to) return out;
  if (!SpecValidForShape(from, shape, d) || !SpecValidForShape(to, shape, d)) {
    throw ValidationError("reshard_cost: spec invalid for shape " + shape.ToString() +
                          " (" + from.ToString() + " -> " + to.ToString() + ")");
  }
  const double S = static_cast<double>(shape.bytes());
  const double frac = static_cast<double>(d - 1) / d;
  using C = ReshardCost::Collective;
  if (from.is_partial()) {
    if (to.is_replicated()) {
      out.collective = C::kAllReduce;
      out.bytes = 2.0 * frac * S;
    } else {  // Partial -> Shard
      out.collective = C::kReduceScatter;
      out.bytes = frac * S;
    }
  } else if (from.is_shard()) {
    if (to.is_replicated()) {
      out.collective = C::kAllGather;
      out.bytes = frac * S;
    } else if (to.is_shard()) {
      // Different dim or stride: relayout via AllToAll of the local shards.
      out.collective = C::kAllToAll;
      out.bytes = S / d * frac;
    } else {  // Shard -> Partial: materialize, then the zero-fill is local.
      out.collective = C::kAllGather;
      out.bytes = frac * S;
    }
  } else {
    // Replicated -> anything is a local slice or zero-fill.
    return out;
  }
  out.seconds = mesh.alpha[axis] + out.bytes / mesh.bandwidth[axis];
  return out;
}

std::optional<AxisSpec> ReshapePassthrough(const TensorShape& in_shape,
                                           const TensorShape& out_shape,
                                           const AxisSpec& in_spec, int d) {
  if (in_spec.is_replicated()) return in_spec;
  if (in_spec.is_partial()) return std::nullopt;  // must materialize first
  if (!SpecValidForShape(in_spec, in_shape, d)) return std::nullopt;
  // Any valid spec deals flat runs of R = inner_size(dim) * stride elements
  // round-robin, so two specs coincide exactly when their R values match.
  const int64_t run = in_shape.inner_size(in_spec.dim) * in_spec.stride;
  for (int dim = 0; dim < out_shape.rank(); ++dim) {
    int64_t inner = out_shape.inner_size(dim);
    if (run % inner != 0) continue;
    AxisSpec candidate = AxisSpec::Shard(dim, run / inner);
    if (SpecValidForShape(candidate, out_shape, d)) return candidate;
  }
  return std::nullopt;
}

std::optional<AxisSpec> reshape_stride_passthrough(const Operator& op,
                                                   const TensorShape& in_shape,
                                                   const AxisSpec& in_spec, int d) {
  if (op.kind != OpKind::kReshape) {
    throw ValidationError("reshape_stride_passthrough: op '" + op.id + "' is not a reshape");
  }
  return ReshapePassthrough(in_shape, op.output_shape, in_spec, d);
}

namespace {

std::vector<int> EffectivePerm(const Operator& op, int rank) {
  std::vector<int> perm = op.perm;
  if (perm.empty()) {
    perm.resize(rank);
    for (int i = 0; i < rank; ++i) perm[i] = rank - 1 - i;
  }
  return perm;
}

double FlopsOf(const Operator& op, const std::vector<TensorShape>& in,
               const TensorShape& out) {
  switch (op.kind) {
    case OpKind::kMatMul: {
      int64_t m = op.transpose_a ? in[0].dims[1] : in[0].dims[0];
      int64_t k = op.transpose_a ? in[0].dims[0] : in[0].dims[1];
      int64_t n = op.transpose_b ? in[1].dims[0] : in[1].dims[1];
      return 2.0 * static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(n);
    }
    case OpKind::kAdd:
    case OpKind::kMul:
    case OpKind::kUnaryElementwise:
      return static_cast<double>(out.elems());
    case OpKind::kReduceSum:
      return static_cast<double>(in[0].elems());
    default:
      return 0.0;
  }
}

struct MatMulDims {
  int a_m, a_k, b_k, b_n;  // physical axis of each logical role
};
MatMulDims MatMulLayout(const Operator& op) {
  MatMulDims md;
  md.a_m = op.transpose_a ? 1 : 0;
  md.a_k = 1 - md.a_m;
  md.b_k = op.transpose_b ? 1 : 0;
  md.b_n = 1 - md.b_k;
  return md;
}

bool AllValid(const OpStrategy& s, const std::vector<TensorShape>& in,
              const TensorShape& out, int d) {
  if (!SpecValidForShape(s.output_spec, out, d)) return false;
  for (size_t i = 0; i < s.input_specs.size(); ++i) {
    if (!SpecValidForShape(s.input_specs[i], in[i], d)) return false;
  }
  return true;
}

}  // namespace

std::optional<OpStrategy> FollowInput(const Operator& op,
                                      const std::vector<TensorShape>& in,
                                      const TensorShape& out, int slot,
                                      const AxisSpec& spec, int d) {
  if (!spec.is_shard()) return std::nullopt;
  const double base = FlopsOf(op, in, out);
  OpStrategy s;
  switch (op.kind) {
    case OpKind::kAdd:
    case OpKind::kMul:
      s = {{spec, spec}, spec, base / d};
      break;
    case OpKind::kUnaryElementwise:
      s = {{spec}, spec, base / d};
      break;
    case OpKind::kReshape: {
      auto through = ReshapePassthrough(in[0], out, spec, d);
      if (!through) return std::nullopt;
      s = {{spec}, *through, 0};
      break;
    }
    case OpKind::kTranspose: {
      auto perm = EffectivePerm(op, in[0].rank());
      int where = -1;
      for (int p = 0; p < static_cast<int>(perm.size()); ++p) {
        if (perm[p] == spec.dim) where = p;
      }
      if (where < 0) return std::nullopt;
      s = {{spec}, AxisSpec::Shard(where, spec.stride), 0};
      break;
    }
    case OpKind::kReduceSum: {
      if (spec.dim == op.axis) {
        s = {{spec}, AxisSpec::Partial(), base / d};
      } else {
        int out_dim = spec.dim - (spec.dim > op.axis ? 1 : 0);
        s = {{spec}, AxisSpec::Shard(out_dim, spec.stride), base / d};
      }
      break;
    }
    case OpKind::kBroadcast: {
      int off = out.rank() - in[0].rank();
      s = {{spec}, AxisSpec::Shard(spec.dim + off, spec.stride), 0};
      break;
    }
    case OpKind::kConcat: {
      if (spec.dim == op.axis) return std::nullopt;
      s.input_specs.assign(in.size(), spec);
      s.output_spec = spec;
      s.comp_flops = 0;
      break;
    }
    case OpKind::kMatMul: {
      MatMulDims md = MatMulLayout(op);
      if (slot == 0) {
        if (spec.dim == md.a_m) {
          s = {{spec, AxisSpec::Replicated()}, AxisSpec::Shard(0, spec.stride), base / d};
        } else {
          s = {{spec, AxisSpec::Shard(md.b_k, spec.stride)}, AxisSpec::Partial(), base / d};
        }
      } else {
        if (spec.dim == md.b_n) {
          s = {{AxisSpec::Replicated(), spec}, AxisSpec::Shard(1, spec.stride), base / d};
        } else {
          s = {{AxisSpec::Shard(md.a_k, spec.stride), spec}, AxisSpec::Partial(), base / d};
        }
      }
      break;
    }
    default:
      return std::nullopt;  // sources consume nothing
  }
  if (!AllValid(s, in, out, d)) return std::nullopt;
  return s;
}

std::optional<OpStrategy> ProduceOutput(const Operator& op,
                                        const std::vector<TensorShape>& in,
                                        const TensorShape& out, const AxisSpec& want,
                                        int d) {
  const double base = FlopsOf(op, in, out);
  OpStrategy s;
  if (want.is_replicated()) {
    s.input_specs.assign(in.size(), AxisSpec::Replicated());
    s.output_spec = want;
    s.comp_flops = base;
    return s;
  }
  if (want.is_partial()) {
    // Partial values only come out of the contracting ops.
    if (op.kind == OpKind::kMatMul) {
      MatMulDims md = MatMulLayout(op);
      int64_t ms = MaxStride(in[0], md.a_k, d);
      if (ms == 0) return std::nullopt;
      s = {{AxisSpec::Shard(md.a_k, ms), AxisSpec::Shard(md.b_k, ms)}, want, base / d};
    } else if (op.kind == OpKind::kReduceSum) {
      int64_t ms = MaxStride(in[0], op.axis, d);
      if (ms == 0) return std::nullopt;
      s = {{AxisSpec::Shard(op.axis, ms)}, want, base / d};
    } else {
      return std::nullopt;
    }
    if (!AllValid(s, in, out, d)) return std::nullopt;
    return s;
  }

  switch (op.kind) {
    case OpKind::kParameter:
    case OpKind::kInput:
      s = {{}, want, 0};
      break;
    case OpKind::kAdd:
    case OpKind::kMul:
      s = {{want, want}, want, base / d};
      break;
    case OpKind::kUnaryElementwise:
      s = {{want}, want, base / d};
      break;
    case OpKind::kReshape: {
      auto back = ReshapePassthrough(out, in[0], want, d);
      if (!back) return std::nullopt;
      s = {{*back}, want, 0};
      break;
    }
    case OpKind::kTranspose: {
      auto perm = EffectivePerm(op, in[0].rank());
      if (want.dim < 0 || want.dim >= static_cast<int>(perm.size())) return std::nullopt;
      s = {{AxisSpec::Shard(perm[want.dim], want.stride)}, want, 0};
      break;
    }
    case OpKind::kReduceSum: {
      int in_dim = want.dim + (want.dim >= op.axis ? 1 : 0);
      s = {{AxisSpec::Shard(in_dim, want.stride)}, want, base / d};
      break;
    }
    case OpKind::kBroadcast: {
      int off = out.rank() - in[0].rank();
      if (want.dim >= off) {
        s = {{AxisSpec::Shard(want.dim - off, want.stride)}, want, 0};
      } else {
        s = {{AxisSpec::Replicated()}, want, 0};
      }
      break;
    }
    case OpKind::kConcat: {
      if (want.dim == op.axis) return std::nullopt;
      s.input_specs.assign(in.size(), want);
      s.output_spec = want;
      s.comp_flops = 0;
      break;
    }
    case OpKind::kMatMul: {
      MatMulDims md = MatMulLayout(op);
      if (want.dim == 0) {
        s = {{AxisSpec::Shard(md.a_m, want.stride), AxisSpec::Replicated()}, want, base / d};
      } else {
        s = {{AxisSpec::Replicated(), AxisSpec::Shard(md.b_n, want.stride)}, want, base / d};
      }
      break;
    }
  }
  if (!AllValid(s, in, out, d)) return std::nullopt;
  return s;
}

std::vector<TensorShape> EffectiveShapes(const TensorProgram& g,
                                         const std::vector<std::vector<AxisSpec>>& chosen_prev,
                                         const std::vector<int>& prev_axis_sizes) {
  std::vector<TensorShape> shapes;
  shapes.reserve(g.size());
  for (int i = 0; i < g.size(); ++i) {
    TensorShape s = g.op(i).output_shape;
    for (size_t a = 0; a < chosen_prev.size(); ++a) {
      s = LocalShape(s, chosen_prev[a][i], prev_axis_sizes[a]);
    }
    shapes.push_back(s);
  }
  return shapes;
}

CandidateMap generate_candidates(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                                 int d, double flops_threshold, int axis) {
  const int n = g.size();
  std::vector<std::set<OpStrategy>> sets(n);
  std::deque<std::pair<int, OpStrategy>> work;

  auto in_shapes_of = [&](int i) {
    std::vector<TensorShape> in;
    for (int p : g.input_indices(i)) in.push_back(shapes[p]);
    return in;
  };

  auto add = [&](int i, const std::optional<OpStrategy>& s) {
    if (!s) return;
    if (sets[i].insert(*s).second) work.emplace_back(i, *s);
  };

  // Replicated is always available; intensive matmuls seed their max-stride
  // shardings (row, column, and contraction split).
  for (int i = 0; i < n; ++i) {
    const Operator& op = g.op(i);
    auto in = in_shapes_of(i);
    add(i, ProduceOutput(op, in, shapes[i], AxisSpec::Replicated(), d));
    if (d < 2) continue;
    double flops = FlopsOf(op, in, shapes[i]);
    if (op.kind == OpKind::kMatMul && flops >= flops_threshold) {
      for (int dim = 0; dim < 2; ++dim) {
        int64_t ms = MaxStride(shapes[i], dim, d);
        if (ms > 0) add(i, ProduceOutput(op, in, shapes[i], AxisSpec::Shard(dim, ms), d));
      }
      add(i, ProduceOutput(op, in, shapes[i], AxisSpec::Partial(), d));
    }
  }

  // Comm-free closure: follow outputs into consumers, and ask producers for
  // the input specs each new strategy demands.
  while (!work.empty()) {
    auto [i, strat] = work.front();
    work.pop_front();
    if (d < 2) break;
    for (int c : g.consumer_indices(i)) {
      auto in = in_shapes_of(c);
      const auto& cin = g.input_indices(c);
      for (int slot = 0; slot < static_cast<int>(cin.size()); ++slot) {
        if (cin[slot] != i) continue;
        add(c, FollowInput(g.op(c), in, shapes[c], slot, strat.output_spec, d));
      }
    }
    const auto& in_idx = g.input_indices(i);
    for (size_t slot = 0; slot < strat.input_specs.size(); ++slot) {
      int p = in_idx[slot];
      auto pin_shapes = in_shapes_of(p);
      add(p, ProduceOutput(g.op(p), pin_shapes, shapes[p], strat.input_specs[slot], d));
    }
  }

  CandidateMap out(n);
  for (int i = 0; i < n; ++i) {
    out[i].assign(sets[i].begin(), sets[i].end());
    const Operator& op = g.op(i);
    auto pin_it = op.pin.find(axis);
    if (pin_it == op.pin.end()) continue;
    auto pin = AxisSpec::FromString(pin_it->second);
    if (!pin) throw ValidationError("op '" + op.id + "': bad pin spec '" + pin_it->second + "'");
    if (!SpecValidForShape(*pin, shapes[i], d) || (pin->is_shard() && d < 2)) {
      throw ValidationError("op '" + op.id + "': pin " + pin->ToString() +
                            " is not valid for shape " + shapes[i].ToString());
    }
    std::vector<OpStrategy> pinned;
    for (const auto& s : out[i]) {
      if (s.output_spec == *pin) pinned.push_back(s);
    }
    if (pinned.empty()) {
      if (pin->is_partial()) {
        throw ValidationError("op '" + op.id + "': cannot pin partial on this op");
      }
      // Compute replicated, then the local slice realizes the pin for free.
      OpStrategy s;
      s.input_specs.assign(g.input_indices(i).size(), AxisSpec::Replicated());
      s.output_spec = *pin;
      s.comp_flops = FlopsOf(op, in_shapes_of(i), shapes[i]);
      pinned.push_back(s);
    }
    out[i] = std::move(pinned);
  }
  return out;
}

double StrategyObjective(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                         const CandidateMap& candidates, const std::vector<int>& choice,
                         const DeviceMesh& mesh, int axis, double device_flops) {
  double total = 0;
  for (int i = 0; i < g.size(); ++i) {
    total += candidates[i][choice[i]].comp_flops / device_flops;
  }
  for (int j = 0; j < g.size(); ++j) {
    const auto& in_idx = g.input_indices(j);
    const OpStrategy& sj = candidates[j][choice[j]];
    for (size_t slot = 0; slot < in_idx.size(); ++slot) {
      int p = in_idx[slot];
      const OpStrategy& sp = candidates[p][choice[p]];
      total += reshard_cost(sp.output_spec, sj.input_specs[slot], shapes[p], mesh, axis).seconds;
    }
  }
  return total;
}

}  // namespace parashard
