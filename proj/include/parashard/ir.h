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

#ifndef PARASHARD_IR_H_
#define PARASHARD_IR_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace parashard {

using OpId = std::string;

// Errors raised while building or validating a program.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct TensorShape {
  std::vector<int64_t> dims;
  int64_t elem_bytes = 4;

  int rank() const { return static_cast<int>(dims.size()); }
  int64_t elems() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
  int64_t bytes() const { return elems() * elem_bytes; }
  // Row-major product of extents after `dim` (size of one index step along dim).
  int64_t inner_size(int dim) const {
    int64_t n = 1;
    for (int i = dim + 1; i < rank(); ++i) n *= dims[i];
    return n;
  }
  bool operator==(const TensorShape&) const = default;
  std::string ToString() const;
};

enum class OpKind {
  kParameter,
  kInput,
  kMatMul,
  kAdd,
  kMul,
  kUnaryElementwise,
  kReshape,
  kTranspose,
  kReduceSum,
  kBroadcast,
  kConcat,
};

const char* OpKindName(OpKind kind);
std::optional<OpKind> OpKindFromName(const std::string& name);

struct Operator {
  OpId id;
  OpKind kind = OpKind::kInput;
  std::vector<OpId> inputs;
  TensorShape output_shape;
  double flops = 0;

  // Per-kind attributes.
  bool transpose_a = false;  // MatMul
  bool transpose_b = false;  // MatMul
  std::vector<int> perm;     // Transpose; empty = reverse all axes
  int axis = 0;              // ReduceSum / Concat
  std::string fn;            // UnaryElementwise label, informational

  // Optional sharding pins, mesh axis -> spec string (e.g. "shard(0,8)",
  // "replicated"). Parsed by the sharding module; empty for most ops.
  std::map<int, std::string> pin;

  bool is_source() const {
    return kind == OpKind::kParameter || kind == OpKind::kInput;
  }
};

// Shape inference for one operator given its input shapes. Throws
// ValidationError when the per-kind rule is violated. `annotated` (when
// present) is checked against the inferred shape; kinds whose output cannot
// be inferred (Parameter, Input, Reshape, Broadcast) require it.
TensorShape InferOutputShape(const Operator& op,
                             const std::vector<TensorShape>& input_shapes,
                             const std::optional<TensorShape>& annotated);

// Flops charged to an operator: MatMul 2*m*k*n, elementwise ops one per
// output element, ReduceSum one per input element, layout ops zero.
double OperatorFlops(const Operator& op, const std::vector<TensorShape>& input_shapes);

class TensorProgram {
 public:
  TensorProgram() = default;

  // Appends an operator; shapes/flops are not checked until Validate().
  void Add(Operator op);
  void SetOutputs(std::vector<OpId> outputs);

  // Resolves inputs, checks acyclicity, shape rules, reachability from the
  // outputs, and fills flops + adjacency. Outputs default to the sink ops
  // when none were designated.
  void Validate();

  int size() const { return static_cast<int>(ops_.size()); }
  const std::vector<Operator>& ops() const { return ops_; }
  const Operator& op(int idx) const { return ops_[idx]; }
  const Operator& op(const OpId& id) const { return ops_[IndexOf(id)]; }
  int IndexOf(const OpId& id) const;
  bool Contains(const OpId& id) const { return index_.count(id) > 0; }

  const std::vector<int>& input_indices(int idx) const { return input_idx_[idx]; }
  const std::vector<int>& consumer_indices(int idx) const { return consumer_idx_[idx]; }
  const std::vector<int>& output_indices() const { return output_idx_; }
  std::vector<OpId> outputs() const;
  std::vector<OpId> parameter_ids() const;

  // Directed edges (producer, consumer), deduplicated per operator pair per
  // input slot, in deterministic order.
  std::vector<std::pair<int, int>> Edges() const;

 private:
  std::vector<Operator> ops_;
  std::map<OpId, int> index_;
  std::vector<OpId> declared_outputs_;
  std::vector<std::vector<int>> input_idx_;
  std::vector<std::vector<int>> consumer_idx_;
  std::vector<int> output_idx_;
  bool validated_ = false;
};

// Topological order over op ids; ties broken by ascending id so the result
// does not depend on definition order.
std::vector<OpId> topo_order(const TensorProgram& g);
std::vector<int> TopoOrderIndices(const TensorProgram& g);

// A_i: all ops with a path to i. D_i: all ops reachable from i. i is in
// neither set.
std::pair<std::set<OpId>, std::set<OpId>> ancestors_descendants(
    const TensorProgram& g, const OpId& id);
// Index-based variants used by the searches.
std::vector<bool> AncestorMask(const TensorProgram& g, int idx);
std::vector<bool> DescendantMask(const TensorProgram& g, int idx);

struct BackboneAnalysis {
  std::map<OpId, int> earliest;
  std::map<OpId, int> latest;
  std::set<OpId> backbone;        // earliest == latest
  std::set<OpId> critical_nodes;  // backbone, MatMul, flops >= threshold
};

// Unit op time, zero transfer time. All sinks are anchored at the maximum
// earliest level, then latest propagates backward.
BackboneAnalysis compute_backbone(const TensorProgram& g, double flops_threshold = 0.0);

}  // namespace parashard

#endif  // PARASHARD_IR_H_
