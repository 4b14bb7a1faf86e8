#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "great/baselines.hpp"
#include "great/rng.hpp"
#include "great/solve.hpp"
#include "great/training.hpp"

namespace great {

using Solver = std::function<Solution(const RoutingInstance&)>;

struct GapRow {
  int instance = 0;
  double objective = 0.0;
  double reference = 0.0;
  double gap = 0.0;
  bool feasible = false;
  double millis = 0.0;
  bool excluded = false;  // reference infeasible or zero objective
};

struct GapReport {
  std::vector<GapRow> rows;
  double mean_gap = 0.0;
  int excluded_count = 0;
  double total_millis = 0.0;
  double ci_lo = 0.0;  // 95% bootstrap interval of the mean gap
  double ci_hi = 0.0;

  void recompute_aggregate() {
    double sum = 0.0;
    int used = 0;
    excluded_count = 0;
    total_millis = 0.0;
    for (const auto& r : rows) {
      total_millis += r.millis;
      if (r.excluded) {
        ++excluded_count;
        continue;
      }
      sum += r.gap;
      ++used;
    }
    mean_gap = used ? sum / used : 0.0;
  }

  void bootstrap_ci(std::uint64_t seed = 0, int resamples = 1000) {
    std::vector<double> gaps;
    for (const auto& r : rows)
      if (!r.excluded) gaps.push_back(r.gap);
    if (gaps.empty()) {
      ci_lo = ci_hi = 0.0;
      return;
    }
    SplitRng rng = SplitRng(seed).fork("bootstrap");
    std::vector<double> means(resamples);
    for (int b = 0; b < resamples; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < gaps.size(); ++i)
        s += gaps[static_cast<std::size_t>(rng.uniform_int(0, gaps.size() - 1))];
      means[b] = s / gaps.size();
    }
    std::sort(means.begin(), means.end());
    ci_lo = means[static_cast<std::size_t>(0.025 * (resamples - 1))];
    ci_hi = means[static_cast<std::size_t>(0.975 * (resamples - 1))];
  }
};

/// Sign convention: minimization gaps are (obj - ref)/ref; OP gaps are
/// flipped so beating the reference shows up negative.
inline double gap_of(Kind kind, double objective, double reference) {
  if (kind == Kind::Op) return -(objective - reference) / reference;
  return (objective - reference) / reference;
}

inline GapReport evaluate_dataset(const std::vector<RoutingInstance>& dataset,
                                  const Solver& solver, const Solver& reference,
                                  int threads = 1) {
  GapReport report;
  report.rows.resize(dataset.size());
  parallel_strided(static_cast<int>(dataset.size()), threads, [&](int i, int) {
    const RoutingInstance& inst = dataset[i];
    GapRow row;
    row.instance = i;
    const auto t0 = std::chrono::steady_clock::now();
    const Solution sol = solver(inst);
    row.millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const Solution ref = reference(inst);
    const SolutionCheck sol_chk = check_solution(inst, sol);
    const SolutionCheck ref_chk = check_solution(inst, ref);
    row.objective = sol_chk.objective;
    row.reference = ref_chk.objective;
    row.feasible = sol_chk.feasible;
    if (!ref_chk.feasible || ref_chk.objective == 0.0) {
      row.excluded = true;
    } else {
      row.gap = gap_of(inst.kind, sol_chk.objective, ref_chk.objective);
    }
    report.rows[i] = row;
  });
  report.recompute_aggregate();
  report.bootstrap_ci();
  return report;
}

inline void write_gap_csv(const std::string& path, const GapReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "instance,objective,reference,gap,feasible,millis\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%d,%.17g\n", r.instance, r.objective,
                  r.reference, r.excluded ? std::nan("") : r.gap, r.feasible ? 1 : 0, r.millis);
    out << buf;
  }
}

inline GapReport read_gap_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != "instance,objective,reference,gap,feasible,millis")
    throw ParseError("bad gap csv header", 0);
  GapReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    GapRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw ParseError("short gap csv row", 0);
      return field;
    };
    r.instance = std::stoi(next());
    r.objective = std::stod(next());
    r.reference = std::stod(next());
    const double gap = std::stod(next());
    r.feasible = next() == "1";
    r.millis = std::stod(next());
    if (std::isnan(gap)) {
      r.excluded = true;
    } else {
      r.gap = gap;
    }
    report.rows.push_back(r);
  }
  report.recompute_aggregate();
  report.bootstrap_ci();
  return report;
}

/// Named reference solvers usable from the command line.
inline Solver oracle_solver(const std::string& name) {
  if (name == "held-karp") return [](const RoutingInstance& i) { return held_karp_tsp(i); };
  if (name == "nn") return [](const RoutingInstance& i) { return nearest_neighbor(i); };
  if (name == "nearest-insertion")
    return [](const RoutingInstance& i) { return nearest_insertion(i); };
  if (name == "farthest-insertion")
    return [](const RoutingInstance& i) { return farthest_insertion(i); };
  if (name == "greedy-op") return [](const RoutingInstance& i) { return greedy_op(i); };
  if (name == "exact-op") return [](const RoutingInstance& i) { return exact_op_small(i); };
  if (name == "exact-cvrp") return [](const RoutingInstance& i) { return exact_cvrp_small(i); };
  throw Error("unknown oracle '" + name +
              "' (expected held-karp|nn|nearest-insertion|farthest-insertion|greedy-op|exact-op|exact-cvrp)");
}

inline Solver neural_solver(ParameterStore& store, const GreatConfig& cfg, int augmentation) {
  return [&store, cfg, augmentation](const RoutingInstance& inst) {
    return augmented_solve(inst, store, cfg, augmentation);
  };
}

}  // namespace great
