#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "great/errors.hpp"
#include "great/rng.hpp"

namespace great {

enum class Kind { Tsp, Cvrp, Op };
enum class Distribution { Euc, Tmat, Xasy };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::Tsp: return "tsp";
    case Kind::Cvrp: return "cvrp";
    case Kind::Op: return "op";
  }
  return "?";
}

inline const char* to_string(Distribution d) {
  switch (d) {
    case Distribution::Euc: return "euc";
    case Distribution::Tmat: return "tmat";
    case Distribution::Xasy: return "xasy";
  }
  return "?";
}

inline Kind kind_from_string(std::string_view s) {
  if (s == "tsp") return Kind::Tsp;
  if (s == "cvrp") return Kind::Cvrp;
  if (s == "op") return Kind::Op;
  throw Error("unknown kind tag '" + std::string(s) + "'");
}

inline Distribution distribution_from_string(std::string_view s) {
  if (s == "euc") return Distribution::Euc;
  if (s == "tmat") return Distribution::Tmat;
  if (s == "xasy") return Distribution::Xasy;
  throw Error("unknown distribution tag '" + std::string(s) + "'");
}

/// Dense n x n matrix of directed distances, row-major, zero diagonal.
struct DistanceMatrix {
  int n = 0;
  std::vector<double> d;

  DistanceMatrix() = default;
  explicit DistanceMatrix(int n_) : n(n_), d(static_cast<std::size_t>(n_) * n_, 0.0) {}

  double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; }

  double max_entry() const {
    double m = 0.0;
    for (double x : d) m = std::max(m, x);
    return m;
  }
};

struct RoutingInstance {
  Kind kind = Kind::Tsp;
  Distribution distribution = Distribution::Euc;
  DistanceMatrix dist;
  std::uint64_t seed = 0;

  // CVRP only.
  std::vector<int> demands;
  int capacity = 0;

  // OP only.
  std::vector<double> prizes;
  double budget = 0.0;

  int n() const { return dist.n; }
  static constexpr int kDepot = 0;
};

constexpr int kDefaultCapacity = 50;
constexpr double kDefaultOpBudget = 4.0;
constexpr double kDefaultOpBudgetXasy = 0.4;

inline void require_size(int n) {
  if (n < 2) throw InvalidSizeError("instance needs at least 2 nodes, got " + std::to_string(n));
}

/// Distance matrix from explicit planar coordinates (the EUC construction).
inline RoutingInstance euclidean_from_coords(const std::vector<std::pair<double, double>>& coords,
                                             std::uint64_t seed = 0) {
  require_size(static_cast<int>(coords.size()));
  const int n = static_cast<int>(coords.size());
  RoutingInstance inst;
  inst.kind = Kind::Tsp;
  inst.distribution = Distribution::Euc;
  inst.seed = seed;
  inst.dist = DistanceMatrix(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dx = coords[i].first - coords[j].first;
      const double dy = coords[i].second - coords[j].second;
      inst.dist.at(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  return inst;
}

inline RoutingInstance gen_euclidean(int n, std::uint64_t seed) {
  require_size(n);
  SplitRng rng = SplitRng(seed).fork("euc");
  std::vector<std::pair<double, double>> coords(n);
  for (auto& c : coords) {
    c.first = rng.uniform();
    c.second = rng.uniform();
  }
  return euclidean_from_coords(coords, seed);
}

/// Triangle-inequality repair: all-pairs shortest-path closure followed by
/// division by the largest entry, so the maximum distance is exactly 1.
inline RoutingInstance tmat_from_raw(DistanceMatrix raw, std::uint64_t seed = 0) {
  require_size(raw.n);
  const int n = raw.n;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double dik = raw.at(i, k);
      for (int j = 0; j < n; ++j) {
        const double via = dik + raw.at(k, j);
        if (via < raw.at(i, j)) raw.at(i, j) = via;
      }
    }
  const double m = raw.max_entry();
  for (double& x : raw.d) x /= m;

  RoutingInstance inst;
  inst.kind = Kind::Tsp;
  inst.distribution = Distribution::Tmat;
  inst.seed = seed;
  inst.dist = std::move(raw);
  return inst;
}

inline RoutingInstance gen_tmat(int n, std::uint64_t seed) {
  require_size(n);
  SplitRng rng = SplitRng(seed).fork("tmat");
  DistanceMatrix raw(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) raw.at(i, j) = rng.uniform_open();
  return tmat_from_raw(std::move(raw), seed);
}

inline RoutingInstance gen_xasy(int n, std::uint64_t seed) {
  require_size(n);
  SplitRng rng = SplitRng(seed).fork("xasy");
  RoutingInstance inst;
  inst.kind = Kind::Tsp;
  inst.distribution = Distribution::Xasy;
  inst.seed = seed;
  inst.dist = DistanceMatrix(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) inst.dist.at(i, j) = rng.uniform_open();
  return inst;
}

inline RoutingInstance generate(Kind kind, Distribution dist, int n, std::uint64_t seed);

/// Adds uniform customer demands in {1..9} and the default capacity.
inline RoutingInstance attach_cvrp(RoutingInstance inst, std::uint64_t seed) {
  require_size(inst.n());
  SplitRng rng = SplitRng(seed).fork("demand");
  inst.kind = Kind::Cvrp;
  inst.demands.assign(inst.n(), 0);
  for (int i = 1; i < inst.n(); ++i)
    inst.demands[i] = static_cast<int>(rng.uniform_int(1, 9));
  inst.capacity = kDefaultCapacity;
  return inst;
}

/// Adds uniform prizes from {0.01 .. 1.00} and the distribution's default budget.
inline RoutingInstance attach_op(RoutingInstance inst, std::uint64_t seed) {
  require_size(inst.n());
  SplitRng rng = SplitRng(seed).fork("prize");
  inst.kind = Kind::Op;
  inst.prizes.assign(inst.n(), 0.0);
  for (int i = 1; i < inst.n(); ++i)
    inst.prizes[i] = static_cast<double>(rng.uniform_int(1, 100)) / 100.0;
  inst.budget = inst.distribution == Distribution::Xasy ? kDefaultOpBudgetXasy : kDefaultOpBudget;
  return inst;
}

inline RoutingInstance generate(Kind kind, Distribution dist, int n, std::uint64_t seed) {
  RoutingInstance inst;
  switch (dist) {
    case Distribution::Euc: inst = gen_euclidean(n, seed); break;
    case Distribution::Tmat: inst = gen_tmat(n, seed); break;
    case Distribution::Xasy: inst = gen_xasy(n, seed); break;
  }
  if (kind == Kind::Cvrp) inst = attach_cvrp(std::move(inst), seed);
  if (kind == Kind::Op) inst = attach_op(std::move(inst), seed);
  return inst;
}

/// Multiplies all distances (and the OP budget, keeping the feasible set
/// fixed) by `factor`. Demands, capacity and prizes are untouched.
inline RoutingInstance scale_instance(RoutingInstance inst, double factor) {
  if (!(factor > 0.0)) throw Error("scale factor must be positive, got " + std::to_string(factor));
  for (double& x : inst.dist.d) x *= factor;
  if (inst.kind == Kind::Op) inst.budget *= factor;
  return inst;
}

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

/// One-line JSON record; floats carry 17 significant digits so parsing is lossless.
inline std::string serialize_instance(const RoutingInstance& inst) {
  std::string out;
  out.reserve(static_cast<std::size_t>(inst.n()) * inst.n() * 20 + 128);
  out += "{\"kind\":\"";
  out += to_string(inst.kind);
  out += "\",\"distribution\":\"";
  out += to_string(inst.distribution);
  out += "\",\"n\":" + std::to_string(inst.n());
  out += ",\"seed\":" + std::to_string(inst.seed);
  out += ",\"dist\":[";
  for (std::size_t i = 0; i < inst.dist.d.size(); ++i) {
    if (i) out += ',';
    detail::append_double(out, inst.dist.d[i]);
  }
  out += ']';
  if (inst.kind == Kind::Cvrp) {
    out += ",\"demands\":[";
    for (std::size_t i = 0; i < inst.demands.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(inst.demands[i]);
    }
    out += "],\"capacity\":" + std::to_string(inst.capacity);
  }
  if (inst.kind == Kind::Op) {
    out += ",\"prizes\":[";
    for (std::size_t i = 0; i < inst.prizes.size(); ++i) {
      if (i) out += ',';
      detail::append_double(out, inst.prizes[i]);
    }
    out += "],\"budget\":";
    detail::append_double(out, inst.budget);
  }
  out += '}';
  return out;
}

inline RoutingInstance parse_instance(std::string_view line, std::size_t base_offset = 0) {
  if (line.empty()) throw ParseError("empty instance record", base_offset);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed instance record: ") + e.what(),
                     base_offset + e.byte);
  }
  auto need = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field))
      throw ParseError(std::string("missing field '") + field + "'", base_offset);
    return j.at(field);
  };
  RoutingInstance inst;
  try {
    inst.kind = kind_from_string(need("kind").get<std::string>());
    inst.distribution = distribution_from_string(need("distribution").get<std::string>());
  } catch (const Error& e) {
    throw ParseError(e.what(), base_offset);
  }
  const int n = need("n").get<int>();
  if (n < 2) throw ParseError("instance field n must be >= 2", base_offset);
  inst.seed = need("seed").get<std::uint64_t>();
  inst.dist.n = n;
  inst.dist.d = need("dist").get<std::vector<double>>();
  if (inst.dist.d.size() != static_cast<std::size_t>(n) * n)
    throw ParseError("dist length " + std::to_string(inst.dist.d.size()) + " != n*n", base_offset);
  if (inst.kind == Kind::Cvrp) {
    inst.demands = need("demands").get<std::vector<int>>();
    inst.capacity = need("capacity").get<int>();
    if (inst.demands.size() != static_cast<std::size_t>(n))
      throw ParseError("demands length != n", base_offset);
  }
  if (inst.kind == Kind::Op) {
    inst.prizes = need("prizes").get<std::vector<double>>();
    inst.budget = need("budget").get<double>();
    if (inst.prizes.size() != static_cast<std::size_t>(n))
      throw ParseError("prizes length != n", base_offset);
  }
  return inst;
}

inline void write_instances(const std::string& path, const std::vector<RoutingInstance>& insts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& inst : insts) out << serialize_instance(inst) << '\n';
}

inline std::vector<RoutingInstance> read_instances(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::vector<RoutingInstance> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_instance(line, offset));
    offset += line.size() + 1;
  }
  if (out.empty()) throw ParseError("empty instance stream", 0);
  return out;
}

inline bool instances_equal(const RoutingInstance& a, const RoutingInstance& b) {
  return a.kind == b.kind && a.distribution == b.distribution && a.seed == b.seed &&
         a.dist.n == b.dist.n && a.dist.d == b.dist.d && a.demands == b.demands &&
         a.capacity == b.capacity && a.prizes == b.prizes && a.budget == b.budget;
}

}  // namespace great
