#pragma once

#include <vector>

#include "great/baselines.hpp"
#include "great/decoder.hpp"

namespace great {

/// Routes from a rollout's action list; objective and feasibility are
/// recomputed against `inst` (which may differ in scale from the instance
/// the trace was produced on).
inline Solution trace_to_solution(const RoutingInstance& inst, const RolloutTrace& trace) {
  Solution sol;
  switch (inst.kind) {
    case Kind::Tsp: {
      std::vector<int> cycle = {trace.start};
      cycle.insert(cycle.end(), trace.actions.begin(), trace.actions.end());
      sol.routes = {cycle};
      break;
    }
    case Kind::Cvrp: {
      std::vector<int> current;
      for (int a : trace.actions) {
        if (a == 0) {
          if (!current.empty()) sol.routes.push_back(current);
          current.clear();
        } else {
          current.push_back(a);
        }
      }
      if (!current.empty()) sol.routes.push_back(current);
      break;
    }
    case Kind::Op: {
      std::vector<int> path = {0};
      for (int a : trace.actions) {
        path.push_back(a);
        if (a != 0) sol.collected.push_back(a);
      }
      sol.routes = {path};
      break;
    }
  }
  const SolutionCheck chk = check_solution(inst, sol);
  sol.feasible = chk.feasible;
  sol.objective = chk.objective;
  return sol;
}

inline bool solution_better(Kind kind, const Solution& a, const Solution& b) {
  if (kind == Kind::Op) return a.objective > b.objective;
  return a.objective < b.objective;
}

inline Solution empty_op_solution() {
  Solution sol;
  sol.routes = {{0}};
  sol.objective = 0.0;
  sol.feasible = true;
  return sol;
}

/// k augmentation factors evenly spaced over [0.5, 1.5]; k=1 is just {1.0}.
inline std::vector<double> augmentation_factors(int k) {
  if (k < 1) throw Error("augmentation count must be >= 1");
  if (k == 1) return {1.0};
  std::vector<double> f(k);
  for (int i = 0; i < k; ++i) f[i] = 0.5 + static_cast<double>(i) / (k - 1);
  return f;
}

/// Greedy POMO under each augmentation factor; every candidate route is
/// scored on the original instance and the best feasible one wins. Only
/// XASY OP can end up with no feasible candidate; it falls back to the
/// empty depot route.
inline Solution augmented_solve(const RoutingInstance& inst, ParameterStore& store,
                                const GreatConfig& cfg, int k) {
  bool have = false;
  Solution best;
  for (double factor : augmentation_factors(k)) {
    const RoutingInstance scaled = scale_instance(inst, factor);
    PolicyContext ctx(scaled, store, cfg, false);
    const std::vector<RolloutTrace> traces =
        pomo_rollouts(ctx, DecodeMode::Greedy, SplitRng(inst.seed).fork("aug"));
    for (const RolloutTrace& trace : traces) {
      Solution cand = trace_to_solution(inst, trace);
      if (!cand.feasible) continue;
      if (!have || solution_better(inst.kind, cand, best)) {
        best = std::move(cand);
        have = true;
      }
    }
  }
  if (!have) return empty_op_solution();
  return best;
}

}  // namespace great
