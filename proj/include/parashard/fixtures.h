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

#ifndef PARASHARD_FIXTURES_H_
#define PARASHARD_FIXTURES_H_

#include <cstdint>
#include <string>

#include "parashard/pipeline.h"
#include "parashard/spmd.h"

namespace parashard {

struct FixtureSpec {
  std::string family;  // mlp | gpt_like | moe_like | skipnet
  int layers = 2;
  int hidden = 8;
  int batch = 4;
  uint64_t seed = 0;
};

// Deterministic benchmark-like graphs. mlp layers fold the weight/bias pair
// into one square parameter (y = act(x W + x)); gpt_like blocks surround the
// attention- and FFN-shaped matmuls with the elementwise chains real compiler
// graphs carry; moe_like adds a router and parallel experts; skipnet wires
// layer i into layer i+2.
TensorProgram generate(const FixtureSpec& spec);

// Random well-formed programs over same-extent square tensors for the
// oracle suites.
TensorProgram RandomSpmdProgram(uint64_t seed, int max_ops);
TensorProgram RandomPipelineProgram(uint64_t seed, int max_ops);

// Keeps the replicated strategy and the first max_per_op-1 others.
CandidateMap CapCandidates(const CandidateMap& candidates, size_t max_per_op);

// A power-of-two mesh/axis setup so every cost in the oracle suites is an
// exact dyadic double and objective comparisons are order-independent.
DeviceMesh UnitTestMesh(int d);
SpmdAxisContext MakeTestContext(const TensorProgram& g, const DeviceMesh& mesh, int axis = 0);

struct BruteForceSpmd {
  std::vector<int> choice;
  double cost = 0;
};

// Exhaustive minimum of the strategy objective; throws when the tuple space
// exceeds ~1e6.
BruteForceSpmd brute_force_spmd(const SpmdAxisContext& ctx, const CandidateMap& candidates);

// Exhaustive minimum cut volume over precedence-respecting, prefix-complete,
// bound-satisfying assignments. Throws InfeasibleError when none exists.
double brute_force_stages(const TensorProgram& g, const PipelineWorkload& w, int d,
                          double epsilon, bool use_bounds = true);

}  // namespace parashard

#endif  // PARASHARD_FIXTURES_H_
