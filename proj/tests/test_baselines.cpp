#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "brute_force.hpp"
#include "great/baselines.hpp"

using namespace great;

namespace {

RoutingInstance from_matrix(std::vector<double> d, Distribution dist = Distribution::Xasy) {
  RoutingInstance inst;
  inst.distribution = dist;
  inst.dist.n = static_cast<int>(std::sqrt(static_cast<double>(d.size())) + 0.5);
  inst.dist.d = std::move(d);
  return inst;
}

}  // namespace

TEST_CASE("nearest_neighbor") {
  SECTION("two nodes") {
    RoutingInstance inst = gen_xasy(2, 1);
    const Solution sol = nearest_neighbor(inst);
    REQUIRE(sol.routes[0] == std::vector<int>{0, 1});
    REQUIRE(sol.objective == inst.dist.at(0, 1) + inst.dist.at(1, 0));
  }
  SECTION("worked 3x3 matrix") {
    const RoutingInstance inst = from_matrix({0, .2, .9, .4, 0, .1, .5, .8, 0});
    const Solution sol = nearest_neighbor(inst);
    REQUIRE(sol.routes[0] == std::vector<int>{0, 1, 2});
    REQUIRE(sol.objective == Catch::Approx(0.8).margin(1e-15));
  }
  SECTION("visits every node exactly once") {
    const RoutingInstance inst = gen_xasy(20, 3);
    const Solution sol = nearest_neighbor(inst);
    REQUIRE(check_solution(inst, sol).feasible);
  }
}

TEST_CASE("insertion heuristics") {
  SECTION("n=3 returns the better directed triangle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const RoutingInstance inst = gen_xasy(3, seed);
      const double t1 = inst.dist.at(0, 1) + inst.dist.at(1, 2) + inst.dist.at(2, 0);
      const double t2 = inst.dist.at(0, 2) + inst.dist.at(2, 1) + inst.dist.at(1, 0);
      const double best = std::min(t1, t2);
      REQUIRE(nearest_insertion(inst).objective == Catch::Approx(best).margin(1e-12));
      REQUIRE(farthest_insertion(inst).objective == Catch::Approx(best).margin(1e-12));
    }
  }
  SECTION("never beats the exact optimum and stays feasible") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
      const RoutingInstance inst = gen_tmat(9, seed);
      const double opt = held_karp_tsp(inst).objective;
      for (const Solution& sol : {nearest_insertion(inst), farthest_insertion(inst),
                                  nearest_neighbor(inst)}) {
        const SolutionCheck chk = check_solution(inst, sol);
        REQUIRE(chk.feasible);
        REQUIRE(chk.objective == Catch::Approx(sol.objective).margin(1e-12));
        REQUIRE(sol.objective >= opt - 1e-12);
      }
    }
  }
  SECTION("n=2 fallback") {
    const RoutingInstance inst = gen_xasy(2, 5);
    REQUIRE(nearest_insertion(inst).objective ==
            inst.dist.at(0, 1) + inst.dist.at(1, 0));
  }
  SECTION("deterministic") {
    const RoutingInstance inst = gen_xasy(12, 9);
    REQUIRE(nearest_insertion(inst).routes == nearest_insertion(inst).routes);
    REQUIRE(farthest_insertion(inst).routes == farthest_insertion(inst).routes);
  }
}

TEST_CASE("dijkstra_shortest_path") {
  SECTION("direct edge wins under the triangle inequality") {
    const RoutingInstance inst = gen_tmat(10, 4);
    std::vector<std::uint8_t> allowed(10, 1);
    for (int t = 1; t < 10; ++t) {
      const ShortestPath sp = dijkstra_shortest_path(inst.dist, 0, t, allowed);
      REQUIRE(sp.length == Catch::Approx(inst.dist.at(0, t)).margin(1e-12));
    }
  }
  SECTION("hand-built xasy detour") {
    // d(2,0)=0.9 but 2->3->0 costs 0.2
    RoutingInstance inst = from_matrix({0, .5, .5, .5,
                                        .5, 0, .5, .5,
                                        .9, .5, 0, .1,
                                        .1, .5, .5, 0});
    std::vector<std::uint8_t> allowed(4, 0);
    allowed[3] = 1;
    const ShortestPath sp = dijkstra_shortest_path(inst.dist, 2, 0, allowed);
    REQUIRE(sp.length == Catch::Approx(0.2).margin(1e-15));
    REQUIRE(sp.path == std::vector<int>{2, 3, 0});
  }
  SECTION("empty allowed set degenerates to the direct edge") {
    const RoutingInstance inst = gen_xasy(6, 6);
    std::vector<std::uint8_t> allowed(6, 0);
    const ShortestPath sp = dijkstra_shortest_path(inst.dist, 2, 4, allowed);
    REQUIRE(sp.length == inst.dist.at(2, 4));
    REQUIRE(sp.path == std::vector<int>{2, 4});
  }
  SECTION("agrees with dfs enumeration on xasy") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const RoutingInstance inst = gen_xasy(8, seed);
      std::vector<std::uint8_t> allowed(8, 0);
      SplitRng rng(seed);
      for (int j = 1; j < 8; ++j) allowed[j] = rng.uniform() < 0.6;
      const int source = 1 + static_cast<int>(rng.uniform_int(0, 6));
      std::vector<std::uint8_t> a2 = allowed;
      a2[source] = 0;
      const double expect = brute::dfs_return(inst.dist, source, a2);
      const ShortestPath sp = dijkstra_shortest_path(inst.dist, source, 0, a2);
      REQUIRE(sp.length == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("greedy_op") {
  SECTION("worked example masks the expensive customer") {
    RoutingInstance inst = from_matrix({0, 1, 3,
                                        1, 0, 1,
                                        3, 1, 0},
                                       Distribution::Euc);
    inst.kind = Kind::Op;
    inst.prizes = {0.0, 0.5, 0.9};
    inst.budget = 4.0;
    const Solution sol = greedy_op(inst);
    REQUIRE(sol.collected == std::vector<int>{1});
    REQUIRE(sol.objective == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(check_solution(inst, sol).feasible);
  }
  SECTION("zero budget collects nothing") {
    RoutingInstance inst = attach_op(gen_euclidean(8, 7), 7);
    inst.budget = 0.0;
    const Solution sol = greedy_op(inst);
    REQUIRE(sol.collected.empty());
    REQUIRE(sol.objective == 0.0);
  }
  SECTION("replay check: the true travel never exceeds the budget") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      for (auto dist : {Distribution::Euc, Distribution::Tmat, Distribution::Xasy}) {
        const RoutingInstance inst = generate(Kind::Op, dist, 10, seed);
        const Solution sol = greedy_op(inst);
        const double traveled = route_list_length(inst, sol.routes[0]);
        REQUIRE(traveled <= inst.budget + kBudgetTol);
        REQUIRE(check_solution(inst, sol).feasible);
      }
    }
  }
  SECTION("euc/tmat returns are always the direct depot edge") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      for (auto dist : {Distribution::Euc, Distribution::Tmat}) {
        const RoutingInstance inst = generate(Kind::Op, dist, 10, seed);
        const Solution sol = greedy_op(inst);
        if (sol.collected.empty()) continue;
        // physical path is exactly depot + collected + depot, no detours
        REQUIRE(sol.routes[0].size() == sol.collected.size() + 2);
      }
    }
  }
}

TEST_CASE("held_karp_tsp") {
  SECTION("two nodes") {
    RoutingInstance inst = from_matrix({0, .3, .7, 0});
    REQUIRE(held_karp_tsp(inst).objective == Catch::Approx(1.0).margin(1e-15));
  }
  SECTION("worked 3x3 matrix") {
    const RoutingInstance inst = from_matrix({0, .2, .9, .4, 0, .1, .5, .8, 0});
    const Solution sol = held_karp_tsp(inst);
    REQUIRE(sol.objective == Catch::Approx(0.8).margin(1e-15));
    REQUIRE(sol.routes[0] == std::vector<int>{0, 1, 2});
  }
  SECTION("n=8 xasy seed=17 equals the permutation minimum exactly") {
    const RoutingInstance inst = gen_xasy(8, 17);
    const brute::Result expect = brute::tsp(inst);
    const Solution sol = held_karp_tsp(inst);
    REQUIRE(sol.objective == expect.objective);
    REQUIRE(sol.routes[0] == expect.route);
  }
  SECTION("matching across distributions at n<=8") {
    for (std::uint64_t seed = 0; seed < 12; ++seed)
      for (auto dist : {Distribution::Euc, Distribution::Tmat, Distribution::Xasy}) {
        const RoutingInstance inst = generate(Kind::Tsp, dist, 7, seed);
        REQUIRE(held_karp_tsp(inst).objective == brute::tsp(inst).objective);
      }
  }
  SECTION("size limit") {
    REQUIRE_THROWS_AS(held_karp_tsp(gen_xasy(17, 1)), SizeLimitError);
  }
}

TEST_CASE("exact_op_small") {
  SECTION("zero budget") {
    RoutingInstance inst = attach_op(gen_euclidean(7, 3), 3);
    inst.budget = 0.0;
    const Solution sol = exact_op_small(inst);
    REQUIRE(sol.objective == 0.0);
    REQUIRE(sol.collected.empty());
  }
  SECTION("the greedy worked example is already optimal") {
    RoutingInstance inst = from_matrix({0, 1, 3,
                                        1, 0, 1,
                                        3, 1, 0},
                                       Distribution::Euc);
    inst.kind = Kind::Op;
    inst.prizes = {0.0, 0.5, 0.9};
    inst.budget = 4.0;
    REQUIRE(exact_op_small(inst).objective == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("equals route enumeration and bounds greedy") {
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      for (auto dist : {Distribution::Euc, Distribution::Tmat, Distribution::Xasy}) {
        const RoutingInstance inst = generate(Kind::Op, dist, 8, seed);
        const Solution sol = exact_op_small(inst);
        REQUIRE(sol.objective == Catch::Approx(brute::op(inst)).margin(1e-12));
        REQUIRE(sol.objective >= greedy_op(inst).objective - 1e-12);
        REQUIRE(check_solution(inst, sol).feasible);
      }
  }
  SECTION("size limit") {
    REQUIRE_THROWS_AS(exact_op_small(attach_op(gen_xasy(13, 1), 1)), SizeLimitError);
  }
}

TEST_CASE("exact_cvrp_small") {
  SECTION("single customer") {
    const RoutingInstance inst = attach_cvrp(gen_euclidean(2, 5), 5);
    const Solution sol = exact_cvrp_small(inst);
    REQUIRE(sol.objective == inst.dist.at(0, 1) + inst.dist.at(1, 0));
    REQUIRE(sol.routes == std::vector<std::vector<int>>{{1}});
  }
  SECTION("joint demand over capacity forces two round trips") {
    RoutingInstance inst = attach_cvrp(gen_euclidean(3, 6), 6);
    inst.demands = {0, 30, 30};
    inst.capacity = 50;
    const Solution sol = exact_cvrp_small(inst);
    const double expect = inst.dist.at(0, 1) + inst.dist.at(1, 0) + inst.dist.at(0, 2) +
                          inst.dist.at(2, 0);
    REQUIRE(sol.objective == Catch::Approx(expect).margin(1e-12));
    REQUIRE(sol.routes.size() == 2);
  }
  SECTION("n=7 seed=23 matches the partition brute force") {
    const RoutingInstance inst = attach_cvrp(gen_xasy(7, 23), 23);
    REQUIRE(exact_cvrp_small(inst).objective == Catch::Approx(brute::cvrp(inst)).margin(1e-12));
  }
  SECTION("matches brute force across distributions, tight capacity") {
    for (std::uint64_t seed = 0; seed < 12; ++seed)
      for (auto dist : {Distribution::Euc, Distribution::Tmat, Distribution::Xasy}) {
        RoutingInstance inst = generate(Kind::Cvrp, dist, 6, seed);
        inst.capacity = 12;  // force several subtours
        const Solution sol = exact_cvrp_small(inst);
        REQUIRE(sol.objective == Catch::Approx(brute::cvrp(inst)).margin(1e-12));
        REQUIRE(check_solution(inst, sol).feasible);
        REQUIRE(check_solution(inst, sol).objective ==
                Catch::Approx(sol.objective).margin(1e-12));
      }
  }
  SECTION("size limit") {
    REQUIRE_THROWS_AS(exact_cvrp_small(attach_cvrp(gen_xasy(10, 1), 1)), SizeLimitError);
  }
}
