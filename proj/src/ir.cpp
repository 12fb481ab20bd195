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

#include "parashard/ir.h"

#include <algorithm>
#include <queue>
#include <sstream>

namespace parashard {

std::string TensorShape::ToString() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ",";
    os << dims[i];
  }
  os << "]x" << elem_bytes << "B";
  return os.str();
}

namespace {

struct KindEntry {
  OpKind kind;
  const char* name;
};

constexpr KindEntry kKinds[] = {
    {OpKind::kParameter, "param"},
    {OpKind::kInput, "input"},
    {OpKind::kMatMul, "matmul"},
    {OpKind::kAdd, "add"},
    {OpKind::kMul, "mul"},
    {OpKind::kUnaryElementwise, "unary"},
    {OpKind::kReshape, "reshape"},
    {OpKind::kTranspose, "transpose"},
    {OpKind::kReduceSum, "reduce_sum"},
    {OpKind::kBroadcast, "broadcast"},
    {OpKind::kConcat, "concat"},
};

void Fail(const std::string& msg) { throw ValidationError(msg); }

void CheckShapeValid(const TensorShape& s, const OpId& id) {
  if (s.elem_bytes <= 0) Fail("op '" + id + "': elem_bytes must be positive");
  for (int64_t d : s.dims) {
    if (d < 1) Fail("op '" + id + "': every extent must be >= 1, got shape " + s.ToString());
  }
}

}  // namespace

const char* OpKindName(OpKind kind) {
  for (const auto& e : kKinds) {
    if (e.kind == kind) return e.name;
  }
  return "?";
}

std::optional<OpKind> OpKindFromName(const std::string& name) {
  std::string lower;
  lower.reserve(name.size());
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "parameter") return OpKind::kParameter;
  for (const auto& e : kKinds) {
    if (lower == e.name) return e.kind;
  }
  // Common elementwise names map to the unary kind; the label is kept in fn.
  if (lower == "relu" || lower == "gelu" || lower == "tanh" || lower == "exp" ||
      lower == "sigmoid" || lower == "softmax" || lower == "neg" || lower == "rsqrt") {
    return OpKind::kUnaryElementwise;
  }
  return std::nullopt;
}

TensorShape InferOutputShape(const Operator& op,
                             const std::vector<TensorShape>& in,
                             const std::optional<TensorShape>& annotated) {
  const OpId& id = op.id;
  auto require_arity = [&](size_t n) {
    if (in.size() != n) {
      Fail("op '" + id + "' (" + OpKindName(op.kind) + "): expected " + std::to_string(n) +
           " inputs, got " + std::to_string(in.size()));
    }
  };
  auto same_elem_bytes = [&]() {
    for (const auto& s : in) {
      if (s.elem_bytes != in[0].elem_bytes) Fail("op '" + id + "': mixed element types");
    }
  };
  auto check_annotation = [&](const TensorShape& inferred) -> TensorShape {
    if (annotated && !(*annotated == inferred)) {
      Fail("op '" + id + "': shape mismatch, annotated " + annotated->ToString() +
           " vs inferred " + inferred.ToString());
    }
    return inferred;
  };

  switch (op.kind) {
    case OpKind::kParameter:
    case OpKind::kInput: {
      require_arity(0);
      if (!annotated) Fail("op '" + id + "': " + OpKindName(op.kind) + " requires a shape");
      CheckShapeValid(*annotated, id);
      return *annotated;
    }
    case OpKind::kMatMul: {
      require_arity(2);
      same_elem_bytes();
      if (in[0].rank() != 2 || in[1].rank() != 2) {
        Fail("op '" + id + "': matmul operands must be rank 2, got " + in[0].ToString() +
             " and " + in[1].ToString());
      }
      int64_t m = op.transpose_a ? in[0].dims[1] : in[0].dims[0];
      int64_t k = op.transpose_a ? in[0].dims[0] : in[0].dims[1];
      int64_t k2 = op.transpose_b ? in[1].dims[1] : in[1].dims[0];
      int64_t n = op.transpose_b ? in[1].dims[0] : in[1].dims[1];
      if (k != k2) {
        Fail("op '" + id + "': matmul contracted dims disagree (" + std::to_string(k) +
             " vs " + std::to_string(k2) + ")");
      }
      return check_annotation({{m, n}, in[0].elem_bytes});
    }
    case OpKind::kAdd:
    case OpKind::kMul: {
      require_arity(2);
      same_elem_bytes();
      if (!(in[0] == in[1])) {
        Fail("op '" + id + "': elementwise operands must have equal shapes, got " +
             in[0].ToString() + " and " + in[1].ToString());
      }
      return check_annotation(in[0]);
    }
    case OpKind::kUnaryElementwise: {
      require_arity(1);
      return check_annotation(in[0]);
    }
    case OpKind::kReshape: {
      require_arity(1);
      if (!annotated) Fail("op '" + id + "': reshape requires a target shape");
      CheckShapeValid(*annotated, id);
      if (annotated->elem_bytes != in[0].elem_bytes) Fail("op '" + id + "': reshape cannot change element type");
      if (annotated->elems() != in[0].elems()) {
        Fail("op '" + id + "': shape mismatch, reshape must preserve element count (" +
             in[0].ToString() + " -> " + annotated->ToString() + ")");
      }
      return *annotated;
    }
    case OpKind::kTranspose: {
      require_arity(1);
      std::vector<int> perm = op.perm;
      if (perm.empty()) {
        perm.resize(in[0].rank());
        for (int i = 0; i < in[0].rank(); ++i) perm[i] = in[0].rank() - 1 - i;
      }
      if (static_cast<int>(perm.size()) != in[0].rank()) Fail("op '" + id + "': bad perm length");
      std::vector<bool> seen(perm.size(), false);
      TensorShape out{{}, in[0].elem_bytes};
      for (int p : perm) {
        if (p < 0 || p >= in[0].rank() || seen[p]) Fail("op '" + id + "': perm is not a permutation");
        seen[p] = true;
        out.dims.push_back(in[0].dims[p]);
      }
      return check_annotation(out);
    }
    case OpKind::kReduceSum: {
      require_arity(1);
      if (op.axis < 0 || op.axis >= in[0].rank()) Fail("op '" + id + "': reduce axis out of range");
      TensorShape out{{}, in[0].elem_bytes};
      for (int i = 0; i < in[0].rank(); ++i) {
        if (i != op.axis) out.dims.push_back(in[0].dims[i]);
      }
      return check_annotation(out);
    }
    case OpKind::kBroadcast: {
      require_arity(1);
      if (!annotated) Fail("op '" + id + "': broadcast requires a target shape");
      CheckShapeValid(*annotated, id);
      if (annotated->elem_bytes != in[0].elem_bytes) Fail("op '" + id + "': broadcast cannot change element type");
      // Input dims must equal the trailing dims of the target.
      int off = annotated->rank() - in[0].rank();
      if (off < 0) Fail("op '" + id + "': broadcast target rank below input rank");
      for (int i = 0; i < in[0].rank(); ++i) {
        if (annotated->dims[off + i] != in[0].dims[i]) {
          Fail("op '" + id + "': broadcast input " + in[0].ToString() +
               " is not a suffix of target " + annotated->ToString());
        }
      }
      return *annotated;
    }
    case OpKind::kConcat: {
      if (in.size() < 2) Fail("op '" + id + "': concat needs >= 2 inputs");
      same_elem_bytes();
      int rank = in[0].rank();
      if (op.axis < 0 || op.axis >= rank) Fail("op '" + id + "': concat axis out of range");
      TensorShape out = in[0];
      for (size_t i = 1; i < in.size(); ++i) {
        if (in[i].rank() != rank) Fail("op '" + id + "': concat rank mismatch");
        for (int d = 0; d < rank; ++d) {
          if (d == op.axis) continue;
          if (in[i].dims[d] != in[0].dims[d]) Fail("op '" + id + "': concat non-axis dims differ");
        }
        out.dims[op.axis] += in[i].dims[op.axis];
      }
      return check_annotation(out);
    }
  }
  Fail("op '" + id + "': unknown kind");
  return {};
}

double OperatorFlops(const Operator& op, const std::vector<TensorShape>& in) {
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
      return static_cast<double>(op.output_shape.elems());
    case OpKind::kReduceSum:
      return static_cast<double>(in[0].elems());
    default:
      return 0.0;
  }
}

void TensorProgram::Add(Operator op) {
  if (index_.count(op.id)) Fail("duplicate op id '" + op.id + "'");
  index_[op.id] = static_cast<int>(ops_.size());
  ops_.push_back(std::move(op));
  validated_ = false;
}

void TensorProgram::SetOutputs(std::vector<OpId> outputs) {
  declared_outputs_ = std::move(outputs);
  validated_ = false;
}

int TensorProgram::IndexOf(const OpId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) Fail("unknown op id '" + id + "'");
  return it->second;
}

void TensorProgram::Validate() {
  const int n = size();
  if (n == 0) Fail("empty program");
  input_idx_.assign(n, {});
  consumer_idx_.assign(n, {});

  for (int i = 0; i < n; ++i) {
    const Operator& o = ops_[i];
    if (!o.is_source() && o.inputs.empty()) {
      Fail("op '" + o.id + "': non-source op needs at least one input");
    }
    for (const OpId& in : o.inputs) {
      auto it = index_.find(in);
      if (it == index_.end()) Fail("op '" + o.id + "': dangling input reference '" + in + "'");
      input_idx_[i].push_back(it->second);
    }
  }

  // Kahn's algorithm both orders ops for shape inference and detects cycles.
  std::vector<int> indeg(n, 0);
  for (int i = 0; i < n; ++i) indeg[i] = static_cast<int>(input_idx_[i].size());
  std::vector<int> order;
  order.reserve(n);
  std::queue<int> ready;
  for (int i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  std::vector<std::vector<int>> consumers(n);
  for (int i = 0; i < n; ++i) {
    for (int in : input_idx_[i]) consumers[in].push_back(i);
  }
  while (!ready.empty()) {
    int i = ready.front();
    ready.pop();
    order.push_back(i);
    for (int c : consumers[i]) {
      if (--indeg[c] == 0) ready.push(c);
    }
  }
  if (static_cast<int>(order.size()) != n) Fail("cycle detected in program graph");

  // Shape inference in dependency order. Annotated shapes act as assertions
  // except where they define the output (sources, reshape, broadcast).
  for (int i : order) {
    Operator& o = ops_[i];
    std::vector<TensorShape> in_shapes;
    in_shapes.reserve(input_idx_[i].size());
    for (int in : input_idx_[i]) in_shapes.push_back(ops_[in].output_shape);
    std::optional<TensorShape> annotated;
    if (!o.output_shape.dims.empty() || o.is_source() || o.kind == OpKind::kReshape ||
        o.kind == OpKind::kBroadcast) {
      annotated = o.output_shape;
    }
    o.output_shape = InferOutputShape(o, in_shapes, annotated);
    CheckShapeValid(o.output_shape, o.id);
    o.flops = OperatorFlops(o, in_shapes);
  }

  // Resolve outputs: declared list, or every sink.
  output_idx_.clear();
  if (!declared_outputs_.empty()) {
    for (const OpId& id : declared_outputs_) output_idx_.push_back(IndexOf(id));
  } else {
    for (int i = 0; i < n; ++i) {
      if (consumers[i].empty()) output_idx_.push_back(i);
    }
  }
  if (output_idx_.empty()) Fail("program has no outputs");

  // Every op must be backward-reachable from some output.
  std::vector<bool> live(n, false);
  std::vector<int> stack(output_idx_.begin(), output_idx_.end());
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    if (live[i]) continue;
    live[i] = true;
    for (int in : input_idx_[i]) stack.push_back(in);
  }
  for (int i = 0; i < n; ++i) {
    if (!live[i]) Fail("op '" + ops_[i].id + "' is unreachable from the outputs");
  }

  consumer_idx_ = std::move(consumers);
  validated_ = true;
}

std::vector<OpId> TensorProgram::outputs() const {
  std::vector<OpId> ids;
  ids.reserve(output_idx_.size());
  for (int i : output_idx_) ids.push_back(ops_[i].id);
  return ids;
}

std::vector<OpId> TensorProgram::parameter_ids() const {
  std::vector<OpId> ids;
  for (const Operator& o : ops_) {
    if (o.kind == OpKind::kParameter) ids.push_back(o.id);
  }
  return ids;
}

std::vector<std::pair<int, int>> TensorProgram::Edges() const {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < size(); ++i) {
    int prev = -1;
    for (int in : input_idx_[i]) {
      // An op consuming the same tensor twice contributes one edge.
      if (in == prev) continue;
      edges.emplace_back(in, i);
      prev = in;
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::vector<int> TopoOrderIndices(const TensorProgram& g) {
  const int n = g.size();
  std::vector<int> indeg(n, 0);
  for (int i = 0; i < n; ++i) {
    int prev = -1;
    for (int in : g.input_indices(i)) {
      if (in == prev) continue;
      ++indeg[i];
      prev = in;
    }
  }
  // Hold ready ops in a min-heap on the op id string.
  auto cmp = [&](int a, int b) { return g.op(a).id > g.op(b).id; };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> ready(cmp);
  for (int i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    int i = ready.top();
    ready.pop();
    order.push_back(i);
    int prev = -1;
    for (int c : g.consumer_indices(i)) {
      if (c == prev) continue;
      prev = c;
      if (--indeg[c] == 0) ready.push(c);
    }
  }
  return order;
}

std::vector<OpId> topo_order(const TensorProgram& g) {
  std::vector<OpId> ids;
  for (int i : TopoOrderIndices(g)) ids.push_back(g.op(i).id);
  return ids;
}

std::vector<bool> AncestorMask(const TensorProgram& g, int idx) {
  std::vector<bool> mask(g.size(), false);
  std::vector<int> stack(g.input_indices(idx).begin(), g.input_indices(idx).end());
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    if (mask[i]) continue;
    mask[i] = true;
    for (int in : g.input_indices(i)) stack.push_back(in);
  }
  return mask;
}

std::vector<bool> DescendantMask(const TensorProgram& g, int idx) {
  std::vector<bool> mask(g.size(), false);
  std::vector<int> stack(g.consumer_indices(idx).begin(), g.consumer_indices(idx).end());
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    if (mask[i]) continue;
    mask[i] = true;
    for (int c : g.consumer_indices(i)) stack.push_back(c);
  }
  return mask;
}

std::pair<std::set<OpId>, std::set<OpId>> ancestors_descendants(const TensorProgram& g,
                                                                const OpId& id) {
  int idx = g.IndexOf(id);
  std::set<OpId> anc, desc;
  std::vector<bool> a = AncestorMask(g, idx);
  std::vector<bool> d = DescendantMask(g, idx);
  for (int i = 0; i < g.size(); ++i) {
    if (a[i]) anc.insert(g.op(i).id);
    if (d[i]) desc.insert(g.op(i).id);
  }
  return {std::move(anc), std::move(desc)};
}

BackboneAnalysis compute_backbone(const TensorProgram& g, double flops_threshold) {
  const int n = g.size();
  std::vector<int> order = TopoOrderIndices(g);
  std::vector<int> earliest(n, 0), latest(n, 0);
  for (int i : order) {
    int e = 0;
    for (int in : g.input_indices(i)) e = std::max(e, earliest[in] + 1);
    earliest[i] = e;
  }
  int horizon = 0;
  for (int i = 0; i < n; ++i) horizon = std::max(horizon, earliest[i]);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int i = *it;
    if (g.consumer_indices(i).empty()) {
      latest[i] = horizon;
      continue;
    }
    int l = horizon;
    for (int c : g.consumer_indices(i)) l = std::min(l, latest[c] - 1);
    latest[i] = l;
  }

  BackboneAnalysis out;
  for (int i = 0; i < n; ++i) {
    const Operator& o = g.op(i);
    out.earliest[o.id] = earliest[i];
    out.latest[o.id] = latest[i];
    if (earliest[i] == latest[i]) {
      out.backbone.insert(o.id);
      if (o.kind == OpKind::kMatMul && o.flops >= flops_threshold) {
        out.critical_nodes.insert(o.id);
      }
    }
  }
  return out;
}

}  // namespace parashard
