#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "great/env.hpp"
#include "great/instance.hpp"

namespace great {

/// Route container shared by heuristics, oracles and policy decoding.
///
/// Conventions per problem kind:
///  - TSP:  routes = {cycle [v0 .. v_{n-1}]} with an implicit closing edge.
///  - CVRP: routes = customer subtours, each implicitly depot -> ... -> depot.
///  - OP:   routes = {physical path [0, ..., 0]}; `collected` lists the
///          prize-scoring customers (return legs may pass through others).
struct Solution {
  std::vector<std::vector<int>> routes;
  std::vector<int> collected;
  double objective = 0.0;
  bool feasible = true;
};

struct SolutionCheck {
  bool feasible = false;
  double objective = 0.0;
};

/// Recomputes the objective from the routes and validates feasibility
/// independently of however the solution was produced.
inline SolutionCheck check_solution(const RoutingInstance& inst, const Solution& sol) {
  const int n = inst.n();
  SolutionCheck out;
  switch (inst.kind) {
    case Kind::Tsp: {
      if (sol.routes.size() != 1) return out;
      const auto& r = sol.routes[0];
      if (static_cast<int>(r.size()) != n) return out;
      std::vector<std::uint8_t> seen(n, 0);
      for (int v : r) {
        if (v < 0 || v >= n || seen[v]) return out;
        seen[v] = 1;
      }
      double len = 0.0;
      for (std::size_t i = 0; i + 1 < r.size(); ++i) len += inst.dist.at(r[i], r[i + 1]);
      len += inst.dist.at(r.back(), r.front());
      out.feasible = true;
      out.objective = len;
      return out;
    }
    case Kind::Cvrp: {
      std::vector<std::uint8_t> seen(n, 0);
      double len = 0.0;
      int served = 0;
      for (const auto& r : sol.routes) {
        if (r.empty()) continue;
        int load = 0;
        int prev = 0;
        for (int v : r) {
          if (v <= 0 || v >= n || seen[v]) return out;
          seen[v] = 1;
          ++served;
          load += inst.demands[v];
          len += inst.dist.at(prev, v);
          prev = v;
        }
        if (load > inst.capacity) return out;
        len += inst.dist.at(prev, 0);
      }
      if (served != n - 1) return out;
      out.feasible = true;
      out.objective = len;
      return out;
    }
    case Kind::Op: {
      if (sol.routes.size() != 1) return out;
      const auto& path = sol.routes[0];
      if (path.empty() || path.front() != 0) return out;
      if (path.size() > 1 && path.back() != 0) return out;
      double len = route_list_length(inst, path);
      std::vector<std::uint8_t> on_path(n, 0);
      for (int v : path) {
        if (v < 0 || v >= n) return out;
        on_path[v] = 1;
      }
      std::vector<std::uint8_t> seen(n, 0);
      double prize = 0.0;
      for (int c : sol.collected) {
        if (c <= 0 || c >= n || seen[c] || !on_path[c]) return out;
        seen[c] = 1;
        prize += inst.prizes[c];
      }
      out.feasible = len <= inst.budget + kBudgetTol;
      out.objective = prize;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// simple TSP heuristics
// ---------------------------------------------------------------------------

inline Solution nearest_neighbor(const RoutingInstance& inst) {
  const int n = inst.n();
  std::vector<int> route = {0};
  std::vector<std::uint8_t> visited(n, 0);
  visited[0] = 1;
  double len = 0.0;
  int cur = 0;
  for (int k = 1; k < n; ++k) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (!visited[j] && inst.dist.at(cur, j) < best_d) {
        best_d = inst.dist.at(cur, j);
        best = j;
      }
    visited[best] = 1;
    route.push_back(best);
    len += best_d;
    cur = best;
  }
  len += inst.dist.at(cur, 0);
  return {{route}, {}, len, true};
}

namespace detail {

/// Cheapest-increase insertion into a directed cycle, scanning positions in
/// tour order so ties resolve to the earliest slot.
inline void insert_cheapest(std::vector<int>& tour, const DistanceMatrix& d, int v) {
  std::size_t best_pos = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tour.size(); ++i) {
    const int a = tour[i];
    const int b = tour[(i + 1) % tour.size()];
    const double cost = d.at(a, v) + d.at(v, b) - d.at(a, b);
    if (cost < best_cost) {
      best_cost = cost;
      best_pos = i;
    }
  }
  tour.insert(tour.begin() + best_pos + 1, v);
}

inline Solution insertion_heuristic(const RoutingInstance& inst, bool farthest) {
  const int n = inst.n();
  if (n == 2) {
    return {{{0, 1}}, {}, inst.dist.at(0, 1) + inst.dist.at(1, 0), true};
  }
  std::vector<std::uint8_t> in_tour(n, 0);
  in_tour[0] = 1;
  int seed = -1;
  double seed_d = farthest ? -1.0 : std::numeric_limits<double>::infinity();
  for (int v = 1; v < n; ++v) {
    const double dv = inst.dist.at(0, v);
    if (farthest ? dv > seed_d : dv < seed_d) {
      seed_d = dv;
      seed = v;
    }
  }
  std::vector<int> tour = {0, seed};
  in_tour[seed] = 1;
  // distance of node v to the tour: min over tour nodes u of d(u, v)
  std::vector<double> to_tour(n, std::numeric_limits<double>::infinity());
  for (int v = 0; v < n; ++v)
    if (!in_tour[v]) to_tour[v] = std::min(inst.dist.at(0, v), inst.dist.at(seed, v));
  for (int k = 2; k < n; ++k) {
    int pick = -1;
    double pick_d = farthest ? -1.0 : std::numeric_limits<double>::infinity();
    for (int v = 1; v < n; ++v) {
      if (in_tour[v]) continue;
      if (farthest ? to_tour[v] > pick_d : to_tour[v] < pick_d) {
        pick_d = to_tour[v];
        pick = v;
      }
    }
    insert_cheapest(tour, inst.dist, pick);
    in_tour[pick] = 1;
    for (int v = 1; v < n; ++v)
      if (!in_tour[v]) to_tour[v] = std::min(to_tour[v], inst.dist.at(pick, v));
  }
  double len = 0.0;
  for (int i = 0; i < n; ++i) len += inst.dist.at(tour[i], tour[(i + 1) % n]);
  return {{tour}, {}, len, true};
}

}  // namespace detail

inline Solution nearest_insertion(const RoutingInstance& inst) {
  return detail::insertion_heuristic(inst, false);
}

inline Solution farthest_insertion(const RoutingInstance& inst) {
  return detail::insertion_heuristic(inst, true);
}

// ---------------------------------------------------------------------------
// shortest paths
// ---------------------------------------------------------------------------

struct ShortestPath {
  double length = 0.0;
  std::vector<int> path;  // source .. target inclusive
};

/// Directed shortest path using only intermediate nodes from `allowed`.
/// Label-setting; nonnegative weights assumed.
inline ShortestPath dijkstra_shortest_path(const DistanceMatrix& dist, int source, int target,
                                           const std::vector<std::uint8_t>& allowed) {
  const int n = dist.n;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<std::uint8_t> settled(n, 0);
  best[source] = 0.0;
  for (int it = 0; it < n; ++it) {
    int u = -1;
    double bu = std::numeric_limits<double>::infinity();
    for (int v = 0; v < n; ++v)
      if (!settled[v] && best[v] < bu) {
        bu = best[v];
        u = v;
      }
    if (u < 0) break;
    settled[u] = 1;
    if (u == target) break;
    if (u != source && !allowed[u]) continue;  // cannot leave through a forbidden node
    for (int v = 0; v < n; ++v) {
      if (v == u || settled[v]) continue;
      if (v != target && !allowed[v]) continue;
      const double cand = best[u] + dist.at(u, v);
      if (cand < best[v]) {
        best[v] = cand;
        parent[v] = u;
      }
    }
  }
  if (!std::isfinite(best[target]))
    throw Error("no path from " + std::to_string(source) + " to " + std::to_string(target));
  ShortestPath out;
  out.length = best[target];
  for (int v = target; v != -1; v = parent[v]) out.path.push_back(v);
  std::reverse(out.path.begin(), out.path.end());
  if (out.path.front() != source) out.path.insert(out.path.begin(), source);
  return out;
}

// ---------------------------------------------------------------------------
// greedy orienteering
// ---------------------------------------------------------------------------

namespace detail {

/// Shortest return to the depot; direct edge unless the instance is XASY,
/// where detours through still-unvisited customers may be shorter.
inline ShortestPath op_return_path(const RoutingInstance& inst, int from,
                                   const std::vector<std::uint8_t>& unvisited) {
  if (from == 0) return {0.0, {0}};
  if (inst.distribution != Distribution::Xasy)
    return {inst.dist.at(from, 0), {from, 0}};
  return dijkstra_shortest_path(inst.dist, from, 0, unvisited);
}

}  // namespace detail

/// Prize/distance-greedy OP construction. A candidate is feasible when the
/// move plus its return leg fits the remaining budget; the return leg is the
/// true shortest path on XASY.
inline Solution greedy_op(const RoutingInstance& inst) {
  const int n = inst.n();
  std::vector<std::uint8_t> unvisited(n, 0);
  for (int j = 1; j < n; ++j) unvisited[j] = 1;
  Solution sol;
  sol.routes = {{0}};
  double budget_left = inst.budget;
  int cur = 0;
  while (true) {
    int pick = -1;
    double pick_ratio = -1.0;
    for (int j = 1; j < n; ++j) {
      if (!unvisited[j]) continue;
      std::vector<std::uint8_t> after = unvisited;
      after[j] = 0;
      const double ret = detail::op_return_path(inst, j, after).length;
      const double move = inst.dist.at(cur, j);
      if (move + ret > budget_left + kBudgetTol) continue;
      const double ratio = move > 0.0 ? inst.prizes[j] / move
                                      : std::numeric_limits<double>::infinity();
      if (ratio > pick_ratio) {
        pick_ratio = ratio;
        pick = j;
      }
    }
    if (pick < 0) break;
    budget_left -= inst.dist.at(cur, pick);
    unvisited[pick] = 0;
    cur = pick;
    sol.routes[0].push_back(pick);
    sol.collected.push_back(pick);
    sol.objective += inst.prizes[pick];
  }
  if (cur != 0) {
    const ShortestPath ret = detail::op_return_path(inst, cur, unvisited);
    sol.routes[0].insert(sol.routes[0].end(), ret.path.begin() + 1, ret.path.end());
  }
  return sol;
}

// ---------------------------------------------------------------------------
// exact oracles (desk-scale stand-ins for external solvers)
// ---------------------------------------------------------------------------

constexpr int kHeldKarpMaxN = 16;
constexpr int kExactOpMaxN = 12;
constexpr int kExactCvrpMaxN = 9;

/// Exact directed TSP by subset dynamic programming, O(n^2 2^n).
inline Solution held_karp_tsp(const RoutingInstance& inst) {
  const int n = inst.n();
  if (n > kHeldKarpMaxN)
    throw SizeLimitError("held_karp_tsp caps at n=" + std::to_string(kHeldKarpMaxN) +
                         ", got " + std::to_string(n));
  const int c = n - 1;  // customers 1..n-1, bit j-1 for node j
  const std::size_t full = std::size_t{1} << c;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * c, inf);
  std::vector<int> parent(full * c, -1);
  for (int j = 0; j < c; ++j) dp[(std::size_t{1} << j) * c + j] = inst.dist.at(0, j + 1);
  for (std::size_t mask = 1; mask < full; ++mask) {
    for (int j = 0; j < c; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double base = dp[mask * c + j];
      if (base == inf) continue;
      for (int k = 0; k < c; ++k) {
        if (mask & (std::size_t{1} << k)) continue;
        const std::size_t nm = mask | (std::size_t{1} << k);
        const double cand = base + inst.dist.at(j + 1, k + 1);
        if (cand < dp[nm * c + k]) {
          dp[nm * c + k] = cand;
          parent[nm * c + k] = j;
        }
      }
    }
  }
  double best = inf;
  int best_last = -1;
  for (int j = 0; j < c; ++j) {
    const double cand = dp[(full - 1) * c + j] + inst.dist.at(j + 1, 0);
    if (cand < best) {
      best = cand;
      best_last = j;
    }
  }
  std::vector<int> route(n);
  std::size_t mask = full - 1;
  int j = best_last;
  for (int pos = n - 1; pos >= 1; --pos) {
    route[pos] = j + 1;
    const int pj = parent[mask * c + j];
    mask &= ~(std::size_t{1} << j);
    j = pj;
  }
  route[0] = 0;
  return {{route}, {}, best, true};
}

/// Exact OP by subset DP over (visited set, last node) storing the minimum
/// travel distance; maximizes prize among states whose closing return fits
/// the budget (true shortest return on XASY).
inline Solution exact_op_small(const RoutingInstance& inst) {
  const int n = inst.n();
  if (n > kExactOpMaxN)
    throw SizeLimitError("exact_op_small caps at n=" + std::to_string(kExactOpMaxN) +
                         ", got " + std::to_string(n));
  const int c = n - 1;
  const std::size_t full = std::size_t{1} << c;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * c, inf);
  std::vector<int> parent(full * c, -1);
  for (int j = 0; j < c; ++j) dp[(std::size_t{1} << j) * c + j] = inst.dist.at(0, j + 1);
  for (std::size_t mask = 1; mask < full; ++mask)
    for (int j = 0; j < c; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double base = dp[mask * c + j];
      if (base == inf) continue;
      for (int k = 0; k < c; ++k) {
        if (mask & (std::size_t{1} << k)) continue;
        const std::size_t nm = mask | (std::size_t{1} << k);
        const double cand = base + inst.dist.at(j + 1, k + 1);
        if (cand < dp[nm * c + k]) {
          dp[nm * c + k] = cand;
          parent[nm * c + k] = j;
        }
      }
    }
  double best_prize = 0.0;
  std::size_t best_mask = 0;
  int best_last = -1;
  ShortestPath best_ret;
  for (std::size_t mask = 1; mask < full; ++mask) {
    double prize = 0.0;
    for (int j = 0; j < c; ++j)
      if (mask & (std::size_t{1} << j)) prize += inst.prizes[j + 1];
    if (prize <= best_prize) continue;
    for (int j = 0; j < c; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double base = dp[mask * c + j];
      if (base == inf) continue;
      std::vector<std::uint8_t> unvisited(n, 0);
      for (int k = 0; k < c; ++k)
        if (!(mask & (std::size_t{1} << k))) unvisited[k + 1] = 1;
      const ShortestPath ret = detail::op_return_path(inst, j + 1, unvisited);
      if (base + ret.length <= inst.budget + kBudgetTol) {
        best_prize = prize;
        best_mask = mask;
        best_last = j;
        best_ret = ret;
        break;
      }
    }
  }
  Solution sol;
  sol.objective = best_prize;
  if (best_last < 0) {
    sol.routes = {{0}};
    return sol;
  }
  std::vector<int> order;
  std::size_t mask = best_mask;
  int j = best_last;
  while (j != -1) {
    order.push_back(j + 1);
    const int pj = parent[mask * c + j];
    mask &= ~(std::size_t{1} << j);
    j = pj;
  }
  std::reverse(order.begin(), order.end());
  sol.collected = order;
  sol.routes = {{0}};
  sol.routes[0].insert(sol.routes[0].end(), order.begin(), order.end());
  sol.routes[0].insert(sol.routes[0].end(), best_ret.path.begin() + 1, best_ret.path.end());
  return sol;
}

/// Exact CVRP: Held-Karp path costs per customer subset, then a partition DP
/// over capacity-feasible subsets.
inline Solution exact_cvrp_small(const RoutingInstance& inst) {
  const int n = inst.n();
  if (n > kExactCvrpMaxN)
    throw SizeLimitError("exact_cvrp_small caps at n=" + std::to_string(kExactCvrpMaxN) +
                         ", got " + std::to_string(n));
  const int c = n - 1;
  const std::size_t full = std::size_t{1} << c;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * c, inf);
  std::vector<int> parent(full * c, -1);
  for (int j = 0; j < c; ++j) dp[(std::size_t{1} << j) * c + j] = inst.dist.at(0, j + 1);
  for (std::size_t mask = 1; mask < full; ++mask)
    for (int j = 0; j < c; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double base = dp[mask * c + j];
      if (base == inf) continue;
      for (int k = 0; k < c; ++k) {
        if (mask & (std::size_t{1} << k)) continue;
        const std::size_t nm = mask | (std::size_t{1} << k);
        const double cand = base + inst.dist.at(j + 1, k + 1);
        if (cand < dp[nm * c + k]) {
          dp[nm * c + k] = cand;
          parent[nm * c + k] = j;
        }
      }
    }
  std::vector<double> route_cost(full, inf);
  std::vector<int> route_last(full, -1);
  std::vector<int> demand_sum(full, 0);
  route_cost[0] = 0.0;
  for (std::size_t mask = 1; mask < full; ++mask) {
    int dsum = 0;
    for (int j = 0; j < c; ++j)
      if (mask & (std::size_t{1} << j)) dsum += inst.demands[j + 1];
    demand_sum[mask] = dsum;
    if (dsum > inst.capacity) continue;
    for (int j = 0; j < c; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double cand = dp[mask * c + j] + inst.dist.at(j + 1, 0);
      if (cand < route_cost[mask]) {
        route_cost[mask] = cand;
        route_last[mask] = j;
      }
    }
  }
  std::vector<double> best(full, inf);
  std::vector<std::size_t> choice(full, 0);
  best[0] = 0.0;
  for (std::size_t mask = 1; mask < full; ++mask) {
    const std::size_t low = mask & (~mask + 1);  // the lowest set bit anchors the subset
    for (std::size_t sub = mask; sub; sub = (sub - 1) & mask) {
      if (!(sub & low)) continue;
      if (route_cost[sub] == inf) continue;
      const double cand = route_cost[sub] + best[mask ^ sub];
      if (cand < best[mask]) {
        best[mask] = cand;
        choice[mask] = sub;
      }
    }
  }
  Solution sol;
  sol.objective = best[full - 1];
  for (std::size_t mask = full - 1; mask;) {
    const std::size_t sub = choice[mask];
    std::vector<int> order;
    std::size_t m = sub;
    int j = route_last[sub];
    while (j != -1) {
      order.push_back(j + 1);
      const int pj = parent[m * c + j];
      m &= ~(std::size_t{1} << j);
      j = pj;
    }
    std::reverse(order.begin(), order.end());
    sol.routes.push_back(order);
    mask ^= sub;
  }
  return sol;
}

}  // namespace great
