#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "brute_force.hpp"
#include "great/instance.hpp"

using namespace great;

TEST_CASE("euclidean generator") {
  SECTION("forced coordinates give the closed-form diagonal") {
    const RoutingInstance inst = euclidean_from_coords({{0.0, 0.0}, {1.0, 1.0}});
    REQUIRE(inst.dist.at(0, 1) == Catch::Approx(std::sqrt(2.0)).margin(1e-15));
    REQUIRE(inst.dist.at(0, 1) == inst.dist.at(1, 0));
  }
  SECTION("zero diagonal for any seed") {
    const RoutingInstance inst = gen_euclidean(17, 42);
    for (int i = 0; i < inst.n(); ++i) REQUIRE(inst.dist.at(i, i) == 0.0);
  }
  SECTION("n=100 seed=7: symmetric, all entries <= sqrt(2)") {
    const RoutingInstance inst = gen_euclidean(100, 7);
    const double limit = std::sqrt(2.0);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        REQUIRE(inst.dist.at(i, j) <= limit);
        REQUIRE(inst.dist.at(i, j) == inst.dist.at(j, i));
      }
  }
  SECTION("size check") { REQUIRE_THROWS_AS(gen_euclidean(1, 0), InvalidSizeError); }
}

TEST_CASE("tmat generator") {
  SECTION("n=2 closure is identity, normalization divides by the max") {
    DistanceMatrix raw(2);
    raw.at(0, 1) = 0.8;
    raw.at(1, 0) = 0.4;
    const RoutingInstance inst = tmat_from_raw(raw);
    REQUIRE(inst.dist.at(0, 1) == 1.0);
    REQUIRE(inst.dist.at(1, 0) == 0.5);
  }
  SECTION("n=20 seed=3: all triangle inequalities hold, max is exactly 1") {
    const RoutingInstance inst = gen_tmat(20, 3);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j)
        for (int k = 0; k < 20; ++k)
          REQUIRE(inst.dist.at(i, j) <= inst.dist.at(i, k) + inst.dist.at(k, j) + 1e-12);
    REQUIRE(inst.dist.max_entry() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("xasy generator") {
  SECTION("entries in (0,1), zero diagonal") {
    const RoutingInstance inst = gen_xasy(30, 5);
    for (int i = 0; i < 30; ++i)
      for (int j = 0; j < 30; ++j) {
        if (i == j) {
          REQUIRE(inst.dist.at(i, j) == 0.0);
        } else {
          REQUIRE(inst.dist.at(i, j) > 0.0);
          REQUIRE(inst.dist.at(i, j) < 1.0);
        }
      }
  }
  SECTION("n=50 seed=11: at least one triangle violation") {
    const RoutingInstance inst = gen_xasy(50, 11);
    bool violated = false;
    for (int i = 0; i < 50 && !violated; ++i)
      for (int j = 0; j < 50 && !violated; ++j)
        for (int k = 0; k < 50 && !violated; ++k)
          if (i != j && j != k && i != k)
            violated = inst.dist.at(i, j) > inst.dist.at(i, k) + inst.dist.at(k, j);
    REQUIRE(violated);
  }
  SECTION("same seed twice is bitwise identical") {
    const RoutingInstance a = gen_xasy(25, 123);
    const RoutingInstance b = gen_xasy(25, 123);
    REQUIRE(a.dist.d == b.dist.d);
  }
}

TEST_CASE("generator determinism across kinds") {
  for (auto dist : {Distribution::Euc, Distribution::Tmat, Distribution::Xasy})
    for (auto kind : {Kind::Tsp, Kind::Cvrp, Kind::Op}) {
      const RoutingInstance a = generate(kind, dist, 12, 99);
      const RoutingInstance b = generate(kind, dist, 12, 99);
      REQUIRE(instances_equal(a, b));
    }
}

TEST_CASE("cvrp attachment") {
  const RoutingInstance inst = attach_cvrp(gen_euclidean(100, 5), 5);
  REQUIRE(inst.demands[0] == 0);
  REQUIRE(inst.capacity == 50);
  for (int i = 1; i < 100; ++i) {
    REQUIRE(inst.demands[i] >= 1);
    REQUIRE(inst.demands[i] <= 9);
    REQUIRE(inst.demands[i] <= inst.capacity);
  }
}

TEST_CASE("op attachment") {
  const RoutingInstance euc = attach_op(gen_euclidean(40, 2), 2);
  REQUIRE(euc.budget == 4.0);
  REQUIRE(euc.prizes[0] == 0.0);
  for (int i = 1; i < 40; ++i) {
    REQUIRE(euc.prizes[i] >= 0.01);
    REQUIRE(euc.prizes[i] <= 1.0);
  }
  const RoutingInstance xasy = attach_op(gen_xasy(40, 2), 2);
  REQUIRE(xasy.budget == 0.4);
}

TEST_CASE("scale_instance") {
  SECTION("identity factor") {
    const RoutingInstance inst = gen_xasy(10, 1);
    const RoutingInstance scaled = scale_instance(inst, 1.0);
    REQUIRE(instances_equal(inst, scaled));
  }
  SECTION("plain multiplication") {
    RoutingInstance inst = gen_xasy(5, 1);
    inst.dist.at(0, 1) = 0.4;
    const RoutingInstance scaled = scale_instance(inst, 0.5);
    REQUIRE(scaled.dist.at(0, 1) == 0.2);
  }
  SECTION("op budget scales with the distances") {
    const RoutingInstance inst = attach_op(gen_euclidean(6, 3), 3);
    const RoutingInstance scaled = scale_instance(inst, 2.0);
    REQUIRE(scaled.budget == inst.budget * 2.0);
    REQUIRE(scaled.prizes == inst.prizes);
  }
  SECTION("scaling preserves the optimal tour (brute force, n<=8)") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull})
      for (double factor : {0.5, 1.3, 2.0}) {
        const RoutingInstance inst = gen_xasy(7, seed);
        const brute::Result base = brute::tsp(inst);
        const brute::Result scaled = brute::tsp(scale_instance(inst, factor));
        REQUIRE(base.route == scaled.route);
      }
  }
  SECTION("op feasible sequences unchanged at n=6 under scaling") {
    const RoutingInstance inst = attach_op(gen_xasy(6, 7), 7);
    const RoutingInstance scaled = scale_instance(inst, 2.0);
    // enumerate every customer sequence and compare direct-leg feasibility
    std::vector<int> nodes = {1, 2, 3, 4, 5};
    std::sort(nodes.begin(), nodes.end());
    int checked = 0;
    for (unsigned set = 1; set < 32; ++set) {
      std::vector<int> seq;
      for (int j = 0; j < 5; ++j)
        if (set & (1u << j)) seq.push_back(nodes[j]);
      std::sort(seq.begin(), seq.end());
      do {
        auto traveled = [&](const RoutingInstance& ri) {
          double len = ri.dist.at(0, seq[0]);
          for (std::size_t i = 0; i + 1 < seq.size(); ++i) len += ri.dist.at(seq[i], seq[i + 1]);
          return len + ri.dist.at(seq.back(), 0);
        };
        const bool f1 = traveled(inst) <= inst.budget + 1e-9;
        const bool f2 = traveled(scaled) <= scaled.budget + 1e-9;
        REQUIRE(f1 == f2);
        ++checked;
      } while (std::next_permutation(seq.begin(), seq.end()));
    }
    REQUIRE(checked == 325);  // sum over k of C(5,k) k!
  }
  SECTION("nonpositive factor") {
    REQUIRE_THROWS_AS(scale_instance(gen_xasy(4, 1), 0.0), Error);
  }
}

TEST_CASE("instance serialization") {
  SECTION("round trip is lossless over 1000 random instances") {
    SplitRng rng(2024);
    for (int i = 0; i < 1000; ++i) {
      const Kind kind = static_cast<Kind>(rng.uniform_int(0, 2));
      const Distribution dist = static_cast<Distribution>(rng.uniform_int(0, 2));
      const int n = static_cast<int>(rng.uniform_int(2, 12));
      const RoutingInstance inst = generate(kind, dist, n, rng.next_u64());
      const RoutingInstance back = parse_instance(serialize_instance(inst));
      REQUIRE(instances_equal(inst, back));
    }
  }
  SECTION("empty stream") {
    REQUIRE_THROWS_AS(parse_instance(""), ParseError);
  }
  SECTION("unknown kind tag names the tag") {
    const std::string line =
        R"({"kind":"mstp","distribution":"euc","n":2,"seed":0,"dist":[0,1,1,0]})";
    try {
      parse_instance(line);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("mstp") != std::string::npos);
    }
  }
  SECTION("malformed json reports a byte offset") {
    try {
      parse_instance("{\"kind\":", 100);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      REQUIRE(e.byte_offset >= 100);
    }
  }
  SECTION("file level round trip") {
    const std::string path = "test_instances_tmp.jsonl";
    std::vector<RoutingInstance> insts;
    for (int i = 0; i < 5; ++i) insts.push_back(generate(Kind::Op, Distribution::Xasy, 6, i));
    write_instances(path, insts);
    const auto back = read_instances(path);
    REQUIRE(back.size() == insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i) REQUIRE(instances_equal(insts[i], back[i]));
    std::remove(path.c_str());
  }
}
