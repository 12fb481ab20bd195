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

#ifndef PARASHARD_SHARDING_H_
#define PARASHARD_SHARDING_H_

#include <optional>
#include <string>
#include <vector>

#include "parashard/ir.h"
#include "parashard/mesh.h"

namespace parashard {

// How a tensor is placed along one mesh axis. Shard(dim, stride) deals
// `stride` consecutive elements of `dim` per device round-robin; the maximum
// stride extent/d is the contiguous block layout. Partial means every device
// holds a full-shape pending-reduction value.
struct AxisSpec {
  enum class Kind { kShard, kReplicated, kPartial };
  Kind kind = Kind::kReplicated;
  int dim = -1;
  int64_t stride = 0;

  static AxisSpec Shard(int dim, int64_t stride) { return {Kind::kShard, dim, stride}; }
  static AxisSpec Replicated() { return {Kind::kReplicated, -1, 0}; }
  static AxisSpec Partial() { return {Kind::kPartial, -1, 0}; }

  bool is_shard() const { return kind == Kind::kShard; }
  bool is_replicated() const { return kind == Kind::kReplicated; }
  bool is_partial() const { return kind == Kind::kPartial; }
  bool operator==(const AxisSpec&) const = default;
  bool operator<(const AxisSpec& o) const {
    if (kind != o.kind) return kind < o.kind;
    if (dim != o.dim) return dim < o.dim;
    return stride < o.stride;
  }
  std::string ToString() const;  // "shard(0,8)" | "replicated" | "partial"
  static std::optional<AxisSpec> FromString(const std::string& s);
};

// d*stride must divide the extent so shards are even.
bool SpecValidForShape(const AxisSpec& spec, const TensorShape& shape, int d);
int64_t MaxStride(const TensorShape& shape, int dim, int d);
// Per-device shape under a spec (Partial and Replicated keep the full shape).
TensorShape LocalShape(const TensorShape& shape, const AxisSpec& spec, int d);
// Device owning flat element index `flat` of `shape` under `spec`; -1-free
// helper for the exhaustive layout tests and the pass-through definition.
int OwnerOfFlatIndex(const TensorShape& shape, const AxisSpec& spec, int d, int64_t flat);

// All Shard(dim, stride) with d*stride | extent, plus Replicated (and Partial
// when requested). d == 1 yields [Replicated] only.
std::vector<AxisSpec> enumerate_specs(const TensorShape& shape, int d, bool include_partial = true);

struct ReshardCost {
  enum class Collective { kNone, kAllReduce, kAllGather, kReduceScatter, kAllToAll };
  Collective collective = Collective::kNone;
  double bytes = 0;    // wire bytes under ring algorithms
  double seconds = 0;  // alpha + bytes / bandwidth; 0 for kNone
};
const char* CollectiveName(ReshardCost::Collective c);

// Alpha-beta collective cost of converting `from` to `to` on one mesh axis.
// S = full tensor bytes on that axis's scope:
//   Partial->Replicated  AllReduce      2(d-1)/d * S
//   Partial->Shard       ReduceScatter  (d-1)/d * S
//   Shard->Replicated    AllGather      (d-1)/d * S
//   Shard->Shard'        AllToAll       S/d * (d-1)/d   (relayout included)
//   Replicated->any      free (local slice / zero-fill)
//   Shard->Partial       priced as the AllGather materialization
ReshardCost reshard_cost(const AxisSpec& from, const AxisSpec& to, const TensorShape& shape,
                         const DeviceMesh& mesh, int axis);

// Stride pass-through for reshape: re-expresses a shard layout on the output
// shape so the flat element-to-device map is unchanged. nullopt when no
// layout-preserving re-expression exists (caller inserts resharding).
std::optional<AxisSpec> ReshapePassthrough(const TensorShape& in_shape,
                                           const TensorShape& out_shape,
                                           const AxisSpec& in_spec, int d);
std::optional<AxisSpec> reshape_stride_passthrough(const Operator& op,
                                                   const TensorShape& in_shape,
                                                   const AxisSpec& in_spec, int d);

// One sharding choice for an operator on one mesh axis: what it demands of
// each input tensor, what it produces, and the per-device compute.
struct OpStrategy {
  std::vector<AxisSpec> input_specs;
  AxisSpec output_spec;
  double comp_flops = 0;

  bool operator==(const OpStrategy& o) const {
    return input_specs == o.input_specs && output_spec == o.output_spec;
  }
  bool operator<(const OpStrategy& o) const {
    if (!(input_specs == o.input_specs)) return input_specs < o.input_specs;
    return output_spec < o.output_spec;
  }
};

// Comm-free rule application. `FollowInput`: the strategy an op adopts when
// input `slot` arrives with `spec` and no resharding may be introduced on
// that edge. `ProduceOutput`: the strategy that emits `want` comm-free.
// nullopt when the op has no such rule.
std::optional<OpStrategy> FollowInput(const Operator& op, const std::vector<TensorShape>& in_shapes,
                                      const TensorShape& out_shape, int slot, const AxisSpec& spec,
                                      int d);
std::optional<OpStrategy> ProduceOutput(const Operator& op, const std::vector<TensorShape>& in_shapes,
                                        const TensorShape& out_shape, const AxisSpec& want, int d);

using CandidateMap = std::vector<std::vector<OpStrategy>>;  // indexed like g.ops()

// Effective per-op shapes for one mesh axis: the original shapes divided by
// the shard factors already chosen on earlier axes.
std::vector<TensorShape> EffectiveShapes(const TensorProgram& g,
                                         const std::vector<std::vector<AxisSpec>>& chosen_prev,
                                         const std::vector<int>& prev_axis_sizes);

// Max-stride seeds on computationally-intensive ops, recursively comm-free
// merged with neighbors; every op ends with a deduplicated list containing
// Replicated. Honors per-op pins for `axis`.
CandidateMap generate_candidates(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                                 int d, double flops_threshold = 0.0, int axis = 0);

// Canonical objective of a full strategy choice (the searches and the brute
// force oracle both use this, in this exact summation order).
double StrategyObjective(const TensorProgram& g, const std::vector<TensorShape>& shapes,
                         const CandidateMap& candidates, const std::vector<int>& choice,
                         const DeviceMesh& mesh, int axis, double device_flops);

}  // namespace parashard

#endif  // PARASHARD_SHARDING_H_
