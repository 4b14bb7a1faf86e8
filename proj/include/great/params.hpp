#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "great/errors.hpp"
#include "great/rng.hpp"
#include "great/tensor.hpp"

namespace great {

/// One trainable tensor with its gradient accumulator and optimizer state.
struct Param {
  std::string name;
  ad::Shape shape;
  std::shared_ptr<ad::Buffer> value;
  ad::Buffer grad;
  ad::Buffer adam_m;
  ad::Buffer adam_v;
  std::int64_t step = 0;

  std::size_t size() const { return value->size(); }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

/// Named parameters in registration order. Gradient accumulation is the
/// single synchronization point when batches run on parallel tapes.
class ParameterStore {
 public:
  Param& add(const std::string& name, ad::Shape shape) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param>();
    p->name = name;
    p->shape = shape;
    const std::size_t n = ad::numel(shape);
    p->value = std::make_shared<ad::Buffer>(n, 0.0);
    p->grad.assign(n, 0.0);
    p->adam_m.assign(n, 0.0);
    p->adam_v.assign(n, 0.0);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  const Param& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
  }

  std::size_t count() const { return params_.size(); }
  Param& param(std::size_t i) { return *params_[i]; }
  const Param& param(std::size_t i) const { return *params_[i]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_)
      for (double& g : p->grad) g = 0.0;
  }

  void adam_step(const AdamConfig& cfg = {}) {
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& p : params_)
        for (double g : p->grad) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) {
        const double s = cfg.clip_norm / norm;
        for (auto& p : params_)
          for (double& g : p->grad) g *= s;
      }
    }
    for (auto& p : params_) {
      p->step += 1;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
      ad::Buffer& v = *p->value;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = p->grad[i];
        p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
        p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = p->adam_m[i] / bc1;
        const double vhat = p->adam_v[i] / bc2;
        v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
  }

  /// Glorot-uniform fill for matrices, zeros for biases, ones where `ones`.
  void init_xavier(SplitRng rng) {
    for (auto& p : params_) {
      SplitRng prng = rng.fork(p->name);
      const bool is_gain = p->name.size() >= 4 && p->name.substr(p->name.size() - 4) == "gain";
      if (is_gain) {
        for (double& v : *p->value) v = 1.0;
      } else if (p->shape.size() < 2) {
        for (double& v : *p->value) v = 0.0;
      } else {
        const double fan_in = static_cast<double>(p->shape[0]);
        const double fan_out = static_cast<double>(p->shape[1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : *p->value) v = prng.uniform_real(-bound, bound);
      }
    }
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-tape view of the store: leaf tensors plus the read-back of their
/// gradients. accumulate() is the only place tape gradients touch the store.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, ParameterStore& store) : tape_(&tape), store_(&store) {}

  ad::Tensor operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Param& p = store_->at(name);
    ad::Tensor t = tape_->leaf(p.shape, p.value);
    bound_.emplace(name, t);
    order_.push_back(name);
    return t;
  }

  void accumulate() {
    for (const auto& name : order_) {
      const ad::Tensor& t = bound_.at(name);
      if (!tape_->needs_grad(t.id)) continue;
      Param& p = store_->at(name);
      const ad::Buffer& g = tape_->grad(t.id);
      for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
    }
  }

  /// Accumulates into an external buffer map instead of the store (used by
  /// worker threads; merging in thread order keeps runs reproducible).
  void accumulate(std::unordered_map<std::string, ad::Buffer>& sink) {
    for (const auto& name : order_) {
      const ad::Tensor& t = bound_.at(name);
      if (!tape_->needs_grad(t.id)) continue;
      const ad::Buffer& g = tape_->grad(t.id);
      auto [it, fresh] = sink.try_emplace(name);
      if (fresh) it->second.assign(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }

 private:
  ad::Tape* tape_;
  ParameterStore* store_;
  std::unordered_map<std::string, ad::Tensor> bound_;
  std::vector<std::string> order_;
};

}  // namespace great
