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

#include "parashard/ilp.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace parashard {

int IlpProblem::AddBinary(double objective, std::string name) {
  vars.push_back({0, 1, objective, std::move(name)});
  return num_vars() - 1;
}

int IlpProblem::AddInteger(int64_t lo, int64_t hi, double objective, std::string name) {
  vars.push_back({lo, hi, objective, std::move(name)});
  return num_vars() - 1;
}

void IlpProblem::AddConstraint(std::vector<std::pair<int, double>> terms, IlpRelation rel,
                               double rhs) {
  constraints.push_back({std::move(terms), rel, rhs});
}

std::string IlpProblem::ToLpText() const {
  std::ostringstream os;
  auto vname = [&](int v) {
    return vars[v].name.empty() ? "x" + std::to_string(v) : vars[v].name;
  };
  os << "minimize\n obj:";
  for (int v = 0; v < num_vars(); ++v) {
    if (vars[v].objective == 0) continue;
    os << (vars[v].objective >= 0 ? " + " : " - ") << std::abs(vars[v].objective) << " "
       << vname(v);
  }
  os << "\nsubject to\n";
  for (size_t c = 0; c < constraints.size(); ++c) {
    os << " c" << c << ":";
    for (auto [v, a] : constraints[c].terms) {
      os << (a >= 0 ? " + " : " - ") << std::abs(a) << " " << vname(v);
    }
    switch (constraints[c].rel) {
      case IlpRelation::kLe: os << " <= "; break;
      case IlpRelation::kGe: os << " >= "; break;
      case IlpRelation::kEq: os << " = "; break;
    }
    os << constraints[c].rhs << "\n";
  }
  os << "bounds\n";
  for (int v = 0; v < num_vars(); ++v) {
    os << " " << vars[v].lo << " <= " << vname(v) << " <= " << vars[v].hi << "\n";
  }
  os << "end\n";
  return os.str();
}

namespace {

constexpr double kIntEps = 1e-9;

struct Row {
  std::vector<std::pair<int, double>> terms;  // sum a*x <= rhs
  double rhs;
  bool integral;  // all coefficients and rhs integral
};

class Solver {
 public:
  Solver(const IlpProblem& p, double time_limit) : p_(p), time_limit_(time_limit) {
    Validate();
    Normalize();
    DetectStructure();
  }

  IlpSolution Run() {
    lo_.resize(p_.num_vars());
    hi_.resize(p_.num_vars());
    for (int v = 0; v < p_.num_vars(); ++v) {
      lo_[v] = p_.vars[v].lo;
      hi_[v] = p_.vars[v].hi;
    }
    start_ = std::chrono::steady_clock::now();
    bool root_ok = Propagate();
    if (root_ok) Dfs();

    IlpSolution out;
    out.nodes_explored = nodes_;
    out.hit_time_limit = aborted_;
    out.incumbent_history = history_;
    if (!best_.empty()) {
      out.status = aborted_ ? IlpStatus::kFeasible : IlpStatus::kOptimal;
      out.assignment = best_;
      out.objective = best_obj_;
      Verify(best_);
    } else {
      // Without an incumbent an aborted search proves nothing; thoroughly
      // explored means infeasible.
      out.status = IlpStatus::kInfeasible;
      if (aborted_) out.status = IlpStatus::kFeasible;
    }
    return out;
  }

 private:
  void Validate() {
    for (const auto& v : p_.vars) {
      if (v.lo > v.hi) throw std::invalid_argument("ilp: variable with empty domain");
      if (!std::isfinite(v.objective)) throw std::invalid_argument("ilp: non-finite objective");
    }
    for (const auto& c : p_.constraints) {
      for (auto [v, a] : c.terms) {
        if (v < 0 || v >= p_.num_vars()) throw std::invalid_argument("ilp: constraint references undeclared variable");
        if (!std::isfinite(a)) throw std::invalid_argument("ilp: non-finite coefficient");
      }
      if (!std::isfinite(c.rhs)) throw std::invalid_argument("ilp: non-finite rhs");
    }
  }

  static bool IsIntegral(double x) { return std::abs(x - std::llround(x)) < 1e-9; }

  void Normalize() {
    auto push = [&](const std::vector<std::pair<int, double>>& terms, double rhs, bool negate) {
      Row r;
      r.rhs = negate ? -rhs : rhs;
      bool integral = IsIntegral(r.rhs);
      std::map<int, double> merged;
      for (auto [v, a] : terms) merged[v] += negate ? -a : a;
      for (auto [v, a] : merged) {
        if (a == 0) continue;
        r.terms.emplace_back(v, a);
        integral = integral && IsIntegral(a);
      }
      r.integral = integral;
      rows_.push_back(std::move(r));
    };
    for (const auto& c : p_.constraints) {
      if (c.rel == IlpRelation::kLe || c.rel == IlpRelation::kEq) push(c.terms, c.rhs, false);
      if (c.rel == IlpRelation::kGe || c.rel == IlpRelation::kEq) push(c.terms, c.rhs, true);
    }
  }

  // Recognize sum-to-one groups over binaries (branched jointly, bounded by
  // their cheapest member) and A >= X1 + X2 - 1 linking rows with
  // nonnegative objective on A (bounded by the cheapest consistent pair).
  void DetectStructure() {
    group_of_.assign(p_.num_vars(), -1);
    // An equality arrived as two normalized rows; find "sum x = 1" patterns
    // in the original constraint list so each is considered once.
    for (const auto& c : p_.constraints) {
      if (c.rel != IlpRelation::kEq || std::abs(c.rhs - 1.0) > kIntEps) continue;
      bool ok = c.terms.size() >= 2;
      for (auto [v, a] : c.terms) {
        ok = ok && std::abs(a - 1.0) < kIntEps && p_.vars[v].is_binary() && group_of_[v] < 0;
      }
      if (!ok) continue;
      int gid = static_cast<int>(groups_.size());
      std::vector<int> members;
      for (auto [v, a] : c.terms) {
        members.push_back(v);
        group_of_[v] = gid;
      }
      groups_.push_back(std::move(members));
    }
    for (const auto& c : p_.constraints) {
      if (c.rel != IlpRelation::kGe || c.terms.size() != 3) continue;
      if (std::abs(c.rhs + 1.0) > kIntEps) continue;
      int link_var = -1, x1 = -1, x2 = -1;
      bool ok = true;
      for (auto [v, a] : c.terms) {
        if (std::abs(a - 1.0) < kIntEps && link_var < 0) {
          link_var = v;
        } else if (std::abs(a + 1.0) < kIntEps) {
          (x1 < 0 ? x1 : x2) = v;
        } else {
          ok = false;
        }
      }
      if (!ok || link_var < 0 || x1 < 0 || x2 < 0) continue;
      if (!p_.vars[link_var].is_binary() || p_.vars[link_var].objective < 0) continue;
      if (group_of_[x1] < 0 || group_of_[x2] < 0) continue;
      int g1 = group_of_[x1], g2 = group_of_[x2];
      if (g1 > g2) {
        std::swap(g1, g2);
        std::swap(x1, x2);
      }
      auto& fam = families_[{g1, g2}];
      auto& entry = fam[{x1, x2}];
      // Same pair can be linked several times; costs accumulate.
      entry.cost += p_.vars[link_var].objective;
      entry.vars.push_back(link_var);
    }
  }

  bool TimeUp() {
    if (aborted_) return true;
    if ((nodes_ & 0x3f) != 0) return false;
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (sec > time_limit_) aborted_ = true;
    return aborted_;
  }

  void Record(int v) { trail_.emplace_back(v, lo_[v], hi_[v]); }

  void UndoTo(size_t mark) {
    while (trail_.size() > mark) {
      auto [v, lo, hi] = trail_.back();
      trail_.pop_back();
      lo_[v] = lo;
      hi_[v] = hi;
    }
  }

  // Bound propagation to fixpoint; false -> infeasible under current domains.
  bool Propagate() {
    bool changed = true;
    int rounds = 0;
    while (changed) {
      changed = false;
      if (++rounds > 200) break;
      for (const Row& row : rows_) {
        double min_act = 0;
        for (auto [v, a] : row.terms) {
          min_act += a > 0 ? a * static_cast<double>(lo_[v]) : a * static_cast<double>(hi_[v]);
        }
        double feas_eps = 1e-9 * (1.0 + std::abs(row.rhs));
        if (min_act > row.rhs + feas_eps) return false;
        for (auto [v, a] : row.terms) {
          if (lo_[v] == hi_[v]) continue;
          double contrib = a > 0 ? a * static_cast<double>(lo_[v]) : a * static_cast<double>(hi_[v]);
          double slack = row.rhs - (min_act - contrib);
          if (a > 0) {
            auto new_hi = static_cast<int64_t>(std::floor(slack / a + kIntEps));
            if (new_hi < hi_[v]) {
              if (new_hi < lo_[v]) return false;
              Record(v);
              hi_[v] = new_hi;
              changed = true;
            }
          } else {
            auto new_lo = static_cast<int64_t>(std::ceil(slack / a - kIntEps));
            if (new_lo > lo_[v]) {
              if (new_lo > hi_[v]) return false;
              Record(v);
              lo_[v] = new_lo;
              changed = true;
            }
          }
        }
      }
    }
    return true;
  }

  double Bound() const {
    double bound = 0;
    for (int v = 0; v < p_.num_vars(); ++v) {
      double c = p_.vars[v].objective;
      if (lo_[v] == hi_[v]) {
        bound += c * static_cast<double>(lo_[v]);
      } else if (group_of_[v] < 0) {
        bound += std::min(c * static_cast<double>(lo_[v]), c * static_cast<double>(hi_[v]));
      }
    }
    // Exactly one member of each group ends at 1.
    for (const auto& members : groups_) {
      bool satisfied = false;
      double cheapest = std::numeric_limits<double>::infinity();
      for (int v : members) {
        if (lo_[v] == 1) satisfied = true;  // already in the fixed sum
        if (hi_[v] == 1 && lo_[v] == 0) cheapest = std::min(cheapest, p_.vars[v].objective);
      }
      if (!satisfied && std::isfinite(cheapest)) bound += cheapest;
    }
    // For every linked group pair, any completion pays at least the cheapest
    // consistent pair cost (missing pairs cost nothing).
    for (const auto& [key, fam] : families_) {
      const auto& g1 = groups_[key.first];
      const auto& g2 = groups_[key.second];
      double fam_min = std::numeric_limits<double>::infinity();
      for (int m1 : g1) {
        if (hi_[m1] < 1) continue;
        for (int m2 : g2) {
          if (hi_[m2] < 1) continue;
          auto it = fam.find({m1, m2});
          double cost = 0;
          if (it != fam.end()) {
            cost = it->second.cost;
            // Fixed link vars are already in the fixed-term sum.
            bool all_fixed = true;
            for (int lv : it->second.vars) all_fixed = all_fixed && lo_[lv] == hi_[lv];
            if (all_fixed) cost = 0;
          }
          fam_min = std::min(fam_min, cost);
          if (fam_min == 0) break;
        }
        if (fam_min == 0) break;
      }
      if (std::isfinite(fam_min)) bound += fam_min;
    }
    return bound;
  }

  bool LexSmaller(const std::vector<int64_t>& a, const std::vector<int64_t>& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }

  void OfferIncumbent() {
    std::vector<int64_t> assignment(lo_.begin(), lo_.end());
    double obj = 0;
    for (int v = 0; v < p_.num_vars(); ++v) obj += p_.vars[v].objective * static_cast<double>(assignment[v]);
    if (best_.empty() || obj < best_obj_ ||
        (obj == best_obj_ && LexSmaller(assignment, best_))) {
      best_ = std::move(assignment);
      best_obj_ = obj;
      history_.push_back(best_obj_);
    }
  }

  // All-free-at-preferred-endpoint completion; a feasible one is the optimal
  // completion of this node since the objective is separable.
  bool TryCompletion() {
    size_t mark = trail_.size();
    for (int v = 0; v < p_.num_vars(); ++v) {
      if (lo_[v] == hi_[v]) continue;
      int64_t pick = p_.vars[v].objective >= 0 ? lo_[v] : hi_[v];
      Record(v);
      lo_[v] = hi_[v] = pick;
    }
    bool ok = Propagate();
    // Propagation may only re-derive the same fixed values; any change means
    // the completion was inconsistent.
    if (ok) {
      for (const Row& row : rows_) {
        double act = 0;
        for (auto [v, a] : row.terms) act += a * static_cast<double>(lo_[v]);
        if (act > row.rhs + 1e-9 * (1.0 + std::abs(row.rhs))) {
          ok = false;
          break;
        }
      }
    }
    if (ok) OfferIncumbent();
    UndoTo(mark);
    return ok;
  }

  void Dfs() {
    ++nodes_;
    if (TimeUp()) return;
    if (!best_.empty()) {
      // Relative slack: never prune what float noise alone separates, and
      // keep exact ties explorable for the lexicographic rule.
      if (Bound() > best_obj_ + 1e-12 * std::abs(best_obj_)) return;
    }

    // Fully fixed?
    int branch_var = -1;
    for (int v = 0; v < p_.num_vars(); ++v) {
      if (lo_[v] != hi_[v]) {
        branch_var = v;
        break;
      }
    }
    if (branch_var < 0) {
      OfferIncumbent();
      return;
    }
    if (TryCompletion()) return;

    // Prefer the tightest unsatisfied group.
    int pick_group = -1;
    size_t pick_size = SIZE_MAX;
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
      bool satisfied = false;
      size_t open = 0;
      for (int v : groups_[gi]) {
        if (lo_[v] == 1) satisfied = true;
        if (lo_[v] == 0 && hi_[v] == 1) ++open;
      }
      if (satisfied || open == 0) continue;
      if (open < pick_size) {
        pick_size = open;
        pick_group = static_cast<int>(gi);
      }
    }

    if (pick_group >= 0) {
      std::vector<int> open;
      for (int v : groups_[pick_group]) {
        if (lo_[v] == 0 && hi_[v] == 1) open.push_back(v);
      }
      std::stable_sort(open.begin(), open.end(), [&](int a, int b) {
        if (p_.vars[a].objective != p_.vars[b].objective) {
          return p_.vars[a].objective < p_.vars[b].objective;
        }
        return a < b;
      });
      for (int v : open) {
        size_t mark = trail_.size();
        Record(v);
        lo_[v] = 1;
        if (Propagate()) Dfs();
        UndoTo(mark);
        if (TimeUp()) return;
      }
      return;
    }

    // Plain branching: binaries try their objective-preferred value first,
    // wider boxes bisect.
    int v = branch_var;
    if (hi_[v] - lo_[v] == 1) {
      int64_t first = p_.vars[v].objective >= 0 ? lo_[v] : hi_[v];
      for (int64_t value : {first, first == lo_[v] ? hi_[v] : lo_[v]}) {
        size_t mark = trail_.size();
        Record(v);
        lo_[v] = hi_[v] = value;
        if (Propagate()) Dfs();
        UndoTo(mark);
        if (TimeUp()) return;
      }
    } else {
      int64_t mid = lo_[v] + (hi_[v] - lo_[v]) / 2;
      for (int side = 0; side < 2; ++side) {
        size_t mark = trail_.size();
        Record(v);
        if (side == 0) {
          hi_[v] = mid;
        } else {
          lo_[v] = mid + 1;
        }
        if (Propagate()) Dfs();
        UndoTo(mark);
        if (TimeUp()) return;
      }
    }
  }

  // Defensive re-check of the returned assignment, exact where integral.
  void Verify(const std::vector<int64_t>& x) const {
    for (const Row& row : rows_) {
      if (row.integral) {
        int64_t act = 0;
        for (auto [v, a] : row.terms) act += std::llround(a) * x[v];
        if (act > static_cast<int64_t>(std::llround(row.rhs))) {
          throw std::logic_error("ilp: returned assignment violates a constraint");
        }
      } else {
        double act = 0;
        for (auto [v, a] : row.terms) act += a * static_cast<double>(x[v]);
        if (act > row.rhs + 1e-6 * (1.0 + std::abs(row.rhs))) {
          throw std::logic_error("ilp: returned assignment violates a constraint");
        }
      }
    }
  }

  struct FamilyEntry {
    double cost = 0;
    std::vector<int> vars;
  };

  const IlpProblem& p_;
  double time_limit_;
  std::vector<Row> rows_;
  std::vector<std::vector<int>> groups_;
  std::vector<int> group_of_;
  std::map<std::pair<int, int>, std::map<std::pair<int, int>, FamilyEntry>> families_;

  std::vector<int64_t> lo_, hi_;
  std::vector<std::tuple<int, int64_t, int64_t>> trail_;
  std::vector<int64_t> best_;
  double best_obj_ = std::numeric_limits<double>::infinity();
  std::vector<double> history_;
  int64_t nodes_ = 0;
  bool aborted_ = false;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

IlpSolution solve(const IlpProblem& p, double time_limit_seconds) {
  Solver solver(p, time_limit_seconds);
  return solver.Run();
}

}  // namespace parashard
