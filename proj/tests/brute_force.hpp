#pragma once

// Test-only reference solvers: plain enumeration, kept deliberately
// independent of the library's dynamic-programming oracles.

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "great/instance.hpp"

namespace brute {

struct Result {
  double objective = 0.0;
  std::vector<int> route;  // kind-specific; see each function
};

// Exact TSP by lexicographic enumeration of all (n-1)! orders from node 0.
// Distances accumulate left to right, matching an incremental tour build.
inline Result tsp(const great::RoutingInstance& inst) {
  const int n = inst.n();
  std::vector<int> perm(n - 1);
  std::iota(perm.begin(), perm.end(), 1);
  Result best;
  best.objective = std::numeric_limits<double>::infinity();
  do {
    double len = inst.dist.at(0, perm[0]);
    for (int i = 0; i + 1 < n - 1; ++i) len += inst.dist.at(perm[i], perm[i + 1]);
    len += inst.dist.at(perm.back(), 0);
    if (len < best.objective) {
      best.objective = len;
      best.route = {0};
      best.route.insert(best.route.end(), perm.begin(), perm.end());
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Exact CVRP: every permutation of customers x every split into consecutive
// depot-returning blocks, keeping capacity-feasible splits only.
inline double cvrp(const great::RoutingInstance& inst) {
  const int n = inst.n();
  const int c = n - 1;
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    // split mask bit i set = return to the depot after perm[i]
    for (unsigned split = 0; split < (1u << (c - 1)); ++split) {
      double len = 0.0;
      int load = 0;
      int prev = 0;
      bool ok = true;
      for (int i = 0; i < c && ok; ++i) {
        load += inst.demands[perm[i]];
        if (load > inst.capacity) ok = false;
        len += inst.dist.at(prev, perm[i]);
        prev = perm[i];
        const bool cut = i == c - 1 || (split & (1u << i));
        if (cut) {
          len += inst.dist.at(prev, 0);
          prev = 0;
          load = 0;
        }
      }
      if (ok && len < best) best = len;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Shortest path from `from` to 0 using only `allowed` intermediates, by
// depth-first enumeration (independent of the library's label-setting code).
inline double dfs_return(const great::DistanceMatrix& d, int from,
                         std::vector<std::uint8_t>& allowed) {
  double best = d.at(from, 0);
  for (int v = 1; v < d.n; ++v) {
    if (!allowed[v]) continue;
    allowed[v] = 0;
    const double sub = d.at(from, v) + dfs_return(d, v, allowed);
    allowed[v] = 1;
    best = std::min(best, sub);
  }
  return best;
}

// Exact OP: enumerate every subset and every visiting order of it; a route is
// feasible when direct legs plus the (shortest, for XASY) closing return fit
// the budget. Returns the best collectible prize.
inline double op(const great::RoutingInstance& inst) {
  const int n = inst.n();
  const int c = n - 1;
  double best = 0.0;
  for (unsigned set = 0; set < (1u << c); ++set) {
    std::vector<int> nodes;
    double prize = 0.0;
    for (int j = 0; j < c; ++j)
      if (set & (1u << j)) {
        nodes.push_back(j + 1);
        prize += inst.prizes[j + 1];
      }
    if (nodes.empty() || prize <= best) continue;
    std::sort(nodes.begin(), nodes.end());
    do {
      double len = inst.dist.at(0, nodes[0]);
      for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
        len += inst.dist.at(nodes[i], nodes[i + 1]);
      double ret;
      if (inst.distribution == great::Distribution::Xasy) {
        std::vector<std::uint8_t> allowed(n, 0);
        for (int j = 0; j < c; ++j)
          if (!(set & (1u << j))) allowed[j + 1] = 1;
        ret = dfs_return(inst.dist, nodes.back(), allowed);
      } else {
        ret = inst.dist.at(nodes.back(), 0);
      }
      if (len + ret <= inst.budget + 1e-9) {
        best = prize;
        break;
      }
    } while (std::next_permutation(nodes.begin(), nodes.end()));
  }
  return best;
}

}  // namespace brute
