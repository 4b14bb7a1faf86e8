#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "great/params.hpp"
#include "great/rng.hpp"

namespace great {

/// Scalar objective over the store. When `with_grad` is set the callee must
/// also accumulate d(loss)/d(params) into the store's gradient buffers.
using LossFn = std::function<double(ParameterStore&, bool with_grad)>;

struct GradCheckReport {
  bool pass = false;
  double worst_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares analytic gradients against central finite differences on a random
/// sample of parameter coordinates (all of them when the model is small).
inline GradCheckReport finite_diff_check(const LossFn& fn, ParameterStore& store, double tol,
                                         std::size_t min_coords = 200, std::uint64_t seed = 0,
                                         double step = 1e-5) {
  store.zero_grad();
  fn(store, true);
  std::vector<ad::Buffer> analytic(store.count());
  for (std::size_t p = 0; p < store.count(); ++p) analytic[p] = store.param(p).grad;

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < store.count(); ++p)
    for (std::size_t i = 0; i < store.param(p).size(); ++i) coords.emplace_back(p, i);

  SplitRng rng = SplitRng(seed).fork("fd");
  if (coords.size() > min_coords) {
    for (std::size_t i = 0; i < min_coords; ++i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i, coords.size() - 1));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(min_coords);
  }

  GradCheckReport report;
  report.pass = true;
  report.coords_checked = coords.size();
  for (auto [p, i] : coords) {
    Param& param = store.param(p);
    ad::Buffer& v = *param.value;
    const double saved = v[i];
    v[i] = saved + step;
    const double fp = fn(store, false);
    v[i] = saved - step;
    const double fm = fn(store, false);
    v[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
    if (rel > report.worst_rel_err) {
      report.worst_rel_err = rel;
      report.worst_param = param.name;
      report.worst_index = i;
    }
  }
  report.pass = report.worst_rel_err < tol;
  return report;
}

}  // namespace great
