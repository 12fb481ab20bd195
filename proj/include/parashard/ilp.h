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

#ifndef PARASHARD_ILP_H_
#define PARASHARD_ILP_H_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace parashard {

enum class IlpRelation { kLe, kGe, kEq };
enum class IlpStatus { kOptimal, kFeasible, kInfeasible };

struct IlpVar {
  int64_t lo = 0;
  int64_t hi = 1;
  double objective = 0;
  std::string name;
  bool is_binary() const { return lo == 0 && hi == 1; }
};

struct IlpConstraint {
  std::vector<std::pair<int, double>> terms;  // (var index, coefficient)
  IlpRelation rel = IlpRelation::kLe;
  double rhs = 0;
};

// Minimization over binary / box-bounded integer variables.
struct IlpProblem {
  std::vector<IlpVar> vars;
  std::vector<IlpConstraint> constraints;

  int AddBinary(double objective, std::string name = "");
  int AddInteger(int64_t lo, int64_t hi, double objective, std::string name = "");
  void AddConstraint(std::vector<std::pair<int, double>> terms, IlpRelation rel, double rhs);

  int num_vars() const { return static_cast<int>(vars.size()); }
  std::string ToLpText() const;  // LP-file-like dump for --dump-ilp
};

struct IlpSolution {
  IlpStatus status = IlpStatus::kInfeasible;
  std::vector<int64_t> assignment;  // empty if none found
  double objective = std::numeric_limits<double>::infinity();
  int64_t nodes_explored = 0;
  bool hit_time_limit = false;
  // Every accepted incumbent's objective, in order; nonincreasing.
  std::vector<double> incumbent_history;
};

// Exact depth-first branch-and-bound. Deterministic for a given problem when
// the time limit is not hit; equal-objective optima resolve to the
// lexicographically smallest assignment. Throws std::invalid_argument on
// malformed problems (bad indices, non-finite coefficients).
IlpSolution solve(const IlpProblem& p,
                  double time_limit_seconds = std::numeric_limits<double>::infinity());

}  // namespace parashard

#endif  // PARASHARD_ILP_H_
