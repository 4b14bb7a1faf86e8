#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "great/instance.hpp"

namespace great {

constexpr double kBudgetTol = 1e-9;

struct ActionMask {
  std::vector<std::uint8_t> allowed;

  bool operator[](int i) const { return allowed[i] != 0; }
  int count() const {
    int c = 0;
    for (auto a : allowed) c += a != 0;
    return c;
  }
};

/// Partial-solution state for sequential construction. Value-like: stepping
/// returns a new state, so batched rollouts can branch freely.
struct EnvState {
  const RoutingInstance* inst = nullptr;
  int start = 0;
  int current = 0;
  std::vector<std::uint8_t> visited;  // customers/nodes marked once served
  std::vector<int> route;             // includes the closing node when done
  double traveled = 0.0;
  int remaining_capacity = 0;    // CVRP
  double remaining_budget = 0.0; // OP
  int served = 0;                // visited nodes excluding the depot (CVRP/OP) or all (TSP)
  bool done = false;
};

inline EnvState reset(const RoutingInstance& inst, int start_node) {
  const int n = inst.n();
  if (start_node < 0 || start_node >= n)
    throw Error("start node " + std::to_string(start_node) + " out of range");
  if (inst.kind != Kind::Tsp && start_node != RoutingInstance::kDepot)
    throw Error("cvrp/op episodes must start at the depot");
  EnvState s;
  s.inst = &inst;
  s.start = start_node;
  s.current = start_node;
  s.visited.assign(n, 0);
  s.visited[start_node] = 1;
  s.route = {start_node};
  s.remaining_capacity = inst.capacity;
  s.remaining_budget = inst.budget;
  s.served = inst.kind == Kind::Tsp ? 1 : 0;
  return s;
}

inline ActionMask valid_actions(const EnvState& s) {
  if (s.done) throw ContractError("valid_actions on a finished episode");
  const RoutingInstance& inst = *s.inst;
  const int n = inst.n();
  ActionMask mask;
  mask.allowed.assign(n, 0);
  switch (inst.kind) {
    case Kind::Tsp:
      for (int j = 0; j < n; ++j) mask.allowed[j] = !s.visited[j];
      break;
    case Kind::Cvrp:
      for (int j = 1; j < n; ++j)
        mask.allowed[j] = !s.visited[j] && inst.demands[j] <= s.remaining_capacity;
      mask.allowed[0] = s.current != 0;  // no zero-length depot loops
      break;
    case Kind::Op:
      if (inst.distribution == Distribution::Xasy) {
        // Return feasibility is deliberately not masked; infeasible tours
        // are punished with zero reward instead.
        for (int j = 1; j < n; ++j) mask.allowed[j] = !s.visited[j];
      } else {
        for (int j = 1; j < n; ++j)
          mask.allowed[j] = !s.visited[j] && inst.dist.at(s.current, j) + inst.dist.at(j, 0) <=
                                                 s.remaining_budget + kBudgetTol;
      }
      mask.allowed[0] = 1;  // closing the route is always an option
      break;
  }
  return mask;
}

inline EnvState step(EnvState s, int node) {
  if (s.done) throw ContractError("step on a finished episode");
  const RoutingInstance& inst = *s.inst;
  const ActionMask mask = valid_actions(s);
  if (node < 0 || node >= inst.n() || !mask[node])
    throw IllegalMoveError("node " + std::to_string(node) + " is not a valid action");
  const double d = inst.dist.at(s.current, node);
  s.traveled += d;
  s.route.push_back(node);
  switch (inst.kind) {
    case Kind::Tsp:
      s.visited[node] = 1;
      s.served += 1;
      s.current = node;
      if (s.served == inst.n()) {
        // auto-close: append the return edge instead of demanding a final action
        s.traveled += inst.dist.at(node, s.start);
        s.route.push_back(s.start);
        s.done = true;
      }
      break;
    case Kind::Cvrp:
      if (node == 0) {
        s.remaining_capacity = inst.capacity;
      } else {
        s.visited[node] = 1;
        s.served += 1;
        s.remaining_capacity -= inst.demands[node];
      }
      s.current = node;
      if (node == 0 && s.served == inst.n() - 1) s.done = true;
      break;
    case Kind::Op:
      s.remaining_budget -= d;
      if (node == 0) {
        s.done = true;
      } else {
        s.visited[node] = 1;
        s.served += 1;
      }
      s.current = node;
      break;
  }
  return s;
}

inline double finalize_reward(const EnvState& s) {
  if (!s.done) throw ContractError("finalize_reward before the episode is done");
  const RoutingInstance& inst = *s.inst;
  switch (inst.kind) {
    case Kind::Tsp:
    case Kind::Cvrp:
      return -s.traveled;
    case Kind::Op: {
      if (s.traveled > inst.budget + kBudgetTol) return 0.0;
      double prize = 0.0;
      for (int j = 1; j < inst.n(); ++j)
        if (s.visited[j]) prize += inst.prizes[j];
      return prize;
    }
  }
  return 0.0;
}

/// Independent recomputation of the traveled distance from the route list.
inline double route_list_length(const RoutingInstance& inst, const std::vector<int>& route) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < route.size(); ++i)
    len += inst.dist.at(route[i], route[i + 1]);
  return len;
}

}  // namespace great
