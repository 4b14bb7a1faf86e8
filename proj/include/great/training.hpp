#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "great/checkpoint.hpp"
#include "great/decoder.hpp"
#include "great/solve.hpp"

namespace great {

struct TrainConfig {
  int epochs = 400;
  int instances_per_epoch = 25000;
  int dataset_refresh_every = 10;
  int batch_size = 32;
  double scale_min = 0.5;
  double scale_max = 1.5;
  int validation_size = 1000;
  Kind kind = Kind::Tsp;
  Distribution distribution = Distribution::Euc;
  int nodes = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  bool validate_augmented = false;  // off by default; x9 best-of when enabled
  AdamConfig adam;
  GreatConfig model;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
    if (instances_per_epoch < 1) throw ConfigError("instances_per_epoch", "must be >= 1");
    if (dataset_refresh_every < 1) throw ConfigError("dataset_refresh_every", "must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(scale_min > 0.0) || !(scale_max > scale_min))
      throw ConfigError("scale_range", "needs 0 < lo < hi");
    if (validation_size < 1) throw ConfigError("validation_size", "must be >= 1");
    if (nodes < 2) throw ConfigError("nodes", "must be >= 2");
    if (threads < 1) throw ConfigError("threads", "must be >= 1");
    model.validate();
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"epochs", c.epochs},
      {"instances_per_epoch", c.instances_per_epoch},
      {"dataset_refresh_every", c.dataset_refresh_every},
      {"batch_size", c.batch_size},
      {"scale_range", {c.scale_min, c.scale_max}},
      {"validation_size", c.validation_size},
      {"kind", to_string(c.kind)},
      {"distribution", to_string(c.distribution)},
      {"nodes", c.nodes},
      {"seed", c.seed},
      {"threads", c.threads},
      {"validate_augmented", c.validate_augmented},
      {"learning_rate", c.adam.lr},
      {"model",
       {{"hidden_dim", c.model.hidden_dim},
        {"layers", c.model.layers},
        {"heads", c.model.heads},
        {"variant", to_string(c.model.variant)},
        {"symmetric_mode", c.model.symmetric_mode},
        {"logit_clip", c.model.logit_clip}}},
  };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const nlohmann::json& obj, const char* field, auto& dst) {
    if (!obj.contains(field)) return;
    try {
      dst = obj.at(field).get<std::decay_t<decltype(dst)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field, "wrong type");
    }
  };
  static const char* known[] = {"epochs",          "instances_per_epoch",
                                "dataset_refresh_every", "batch_size",
                                "scale_range",     "validation_size",
                                "kind",            "distribution",
                                "nodes",           "seed",
                                "threads",         "validate_augmented",
                                "learning_rate",   "model"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(it.key(), "unknown field");
  }
  get(j, "epochs", c.epochs);
  get(j, "instances_per_epoch", c.instances_per_epoch);
  get(j, "dataset_refresh_every", c.dataset_refresh_every);
  get(j, "batch_size", c.batch_size);
  if (j.contains("scale_range")) {
    std::vector<double> r;
    get(j, "scale_range", r);
    if (r.size() != 2) throw ConfigError("scale_range", "expected [lo, hi]");
    c.scale_min = r[0];
    c.scale_max = r[1];
  }
  get(j, "validation_size", c.validation_size);
  if (j.contains("kind")) {
    std::string s;
    get(j, "kind", s);
    try {
      c.kind = kind_from_string(s);
    } catch (const Error&) {
      throw ConfigError("kind", "expected tsp|cvrp|op");
    }
  }
  if (j.contains("distribution")) {
    std::string s;
    get(j, "distribution", s);
    try {
      c.distribution = distribution_from_string(s);
    } catch (const Error&) {
      throw ConfigError("distribution", "expected euc|tmat|xasy");
    }
  }
  get(j, "nodes", c.nodes);
  get(j, "seed", c.seed);
  get(j, "threads", c.threads);
  get(j, "validate_augmented", c.validate_augmented);
  get(j, "learning_rate", c.adam.lr);
  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    static const char* mknown[] = {"hidden_dim", "layers",         "heads",
                                   "variant",    "symmetric_mode", "logit_clip"};
    for (auto it = m.begin(); it != m.end(); ++it) {
      bool ok = false;
      for (const char* k : mknown) ok = ok || it.key() == k;
      if (!ok) throw ConfigError("model." + it.key(), "unknown field");
    }
    get(m, "hidden_dim", c.model.hidden_dim);
    get(m, "layers", c.model.layers);
    get(m, "heads", c.model.heads);
    if (m.contains("variant")) {
      std::string s;
      get(m, "variant", s);
      try {
        c.model.variant = variant_from_string(s);
      } catch (const Error&) {
        throw ConfigError("model.variant", "expected nb|nf");
      }
    }
    get(m, "symmetric_mode", c.model.symmetric_mode);
    get(m, "logit_clip", c.model.logit_clip);
  }
  c.validate();
  return c;
}

/// Strided index split: worker t handles i with i % threads == t. The
/// assignment is fixed, so results do not depend on scheduling.
template <typename Fn>
inline void parallel_strided(int count, int threads, const Fn& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += threads) fn(i, t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<RoutingInstance> make_dataset(Kind kind, Distribution dist, int n, int count,
                                                 SplitRng rng, int threads = 1) {
  std::vector<RoutingInstance> out(count);
  std::vector<std::uint64_t> seeds(count);
  for (int i = 0; i < count; ++i) seeds[i] = rng.fork(i).next_u64();
  parallel_strided(count, threads,
                   [&](int i, int) { out[i] = generate(kind, dist, n, seeds[i]); });
  return out;
}

/// Shared-mean-baseline REINFORCE surrogate: with b the mean reward,
/// loss = -(1/N) sum_r (R_r - b) * sum_t log p(a_t | trace r). Rewards and
/// baseline are constants; gradients flow through the log-probs only.
inline ad::Tensor pomo_loss(const std::vector<RolloutTrace>& traces) {
  if (traces.size() < 2)
    throw Error("pomo_loss needs at least 2 rollouts for a shared baseline");
  double baseline = 0.0;
  for (const auto& t : traces) baseline += t.reward;
  baseline /= static_cast<double>(traces.size());
  std::vector<ad::Tensor> sums;
  std::vector<double> weights;
  sums.reserve(traces.size());
  weights.reserve(traces.size());
  for (const auto& t : traces) {
    if (!t.logp_sum.defined())
      throw ContractError("pomo_loss needs traces recorded on a gradient tape");
    sums.push_back(t.logp_sum);
    weights.push_back(-(t.reward - baseline) / static_cast<double>(traces.size()));
  }
  return ad::weighted_sum(sums, weights);
}

struct EpochReport {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_loss = 0.0;
  double seconds = 0.0;
  double instances_per_second = 0.0;
};

/// One pass over the dataset: per batch, a single scale factor from
/// (scale_min, scale_max), sampled POMO rollouts per instance, mean-loss
/// gradients, one optimizer step. Rewards are taken on the scaled instance.
inline EpochReport train_epoch(ParameterStore& store, const TrainConfig& cfg, int epoch,
                               const std::vector<RoutingInstance>& dataset) {
  const auto t0 = std::chrono::steady_clock::now();
  SplitRng scale_rng = SplitRng(cfg.seed).fork("scale").fork(static_cast<std::uint64_t>(epoch));
  SplitRng rollout_root = SplitRng(cfg.seed).fork("rollout").fork(static_cast<std::uint64_t>(epoch));
  const int count = static_cast<int>(dataset.size());
  double reward_sum = 0.0, loss_sum = 0.0;
  int batch_index = 0;
  for (int begin = 0; begin < count; begin += cfg.batch_size, ++batch_index) {
    const int end = std::min(begin + cfg.batch_size, count);
    const int bsize = end - begin;
    const double factor =
        cfg.scale_min + scale_rng.fork(batch_index).uniform_open() * (cfg.scale_max - cfg.scale_min);
    if (!(factor > cfg.scale_min && factor < cfg.scale_max))
      throw ContractError("scale factor left the open training range");
    std::vector<std::unordered_map<std::string, ad::Buffer>> sinks(std::max(1, cfg.threads));
    std::vector<double> rewards(bsize, 0.0), losses(bsize, 0.0);
    try {
      parallel_strided(bsize, cfg.threads, [&](int k, int worker) {
        const int gi = begin + k;
        const RoutingInstance scaled = scale_instance(dataset[gi], factor);
        PolicyContext ctx(scaled, store, cfg.model, true);
        const std::vector<RolloutTrace> traces =
            pomo_rollouts(ctx, DecodeMode::Sample, rollout_root.fork(gi));
        const ad::Tensor loss = pomo_loss(traces);
        ctx.tape.backward(ad::scale(loss, 1.0 / bsize));
        ctx.bp.accumulate(sinks[worker]);
        double mean_r = 0.0;
        for (const auto& t : traces) mean_r += t.reward;
        rewards[k] = mean_r / static_cast<double>(traces.size());
        losses[k] = loss.scalar();
      });
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batch_index) + " aborted: " + e.what());
    }
    for (const auto& sink : sinks)
      for (const auto& [name, grad] : sink) {
        ad::Buffer& dst = store.at(name).grad;
        for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += grad[i];
      }
    store.adam_step(cfg.adam);
    store.zero_grad();
    for (double r : rewards) reward_sum += r;
    for (double l : losses) loss_sum += l;
  }
  EpochReport rep;
  rep.epoch = epoch;
  rep.mean_reward = reward_sum / count;
  rep.mean_loss = loss_sum / count;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.instances_per_second = count / std::max(rep.seconds, 1e-9);
  return rep;
}

/// Greedy best-of-POMO mean reward over a fixed validation set (unscaled
/// instances). Higher is better for every problem kind.
inline double validate(ParameterStore& store, const TrainConfig& cfg,
                       const std::vector<RoutingInstance>& valset) {
  std::vector<double> best(valset.size(), 0.0);
  parallel_strided(static_cast<int>(valset.size()), cfg.threads, [&](int i, int) {
    if (cfg.validate_augmented) {
      const Solution sol = augmented_solve(valset[i], store, cfg.model, 9);
      best[i] = cfg.kind == Kind::Op ? sol.objective : -sol.objective;
      return;
    }
    PolicyContext ctx(valset[i], store, cfg.model, false);
    const auto traces = pomo_rollouts(ctx, DecodeMode::Greedy, SplitRng(valset[i].seed).fork("val"));
    double b = traces[0].reward;
    for (const auto& t : traces) b = std::max(b, t.reward);
    best[i] = b;
  });
  double sum = 0.0;
  for (double b : best) sum += b;
  return sum / static_cast<double>(valset.size());
}

inline ParameterStore build_policy_store(const GreatConfig& cfg, Kind kind, std::uint64_t seed) {
  ParameterStore store;
  register_policy_params(store, cfg, kind);
  store.init_xavier(SplitRng(seed).fork("init"));
  return store;
}

struct TrainOutcome {
  double best_score = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  Checkpoint best_checkpoint;
  std::vector<EpochReport> reports;
  std::vector<double> validation_scores;
};

/// Full training loop: dataset refresh every `dataset_refresh_every` epochs,
/// validation and best-checkpoint selection after every epoch.
inline TrainOutcome train(ParameterStore& store, const TrainConfig& cfg,
                          const std::function<void(const EpochReport&, double)>& on_epoch = {}) {
  cfg.validate();
  const std::vector<RoutingInstance> valset =
      make_dataset(cfg.kind, cfg.distribution, cfg.nodes, cfg.validation_size,
                   SplitRng(cfg.seed).fork("val"), cfg.threads);
  TrainOutcome out;
  std::vector<RoutingInstance> dataset;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch % cfg.dataset_refresh_every == 0)
      dataset = make_dataset(cfg.kind, cfg.distribution, cfg.nodes, cfg.instances_per_epoch,
                             SplitRng(cfg.seed).fork("data").fork(epoch / cfg.dataset_refresh_every),
                             cfg.threads);
    const EpochReport rep = train_epoch(store, cfg, epoch, dataset);
    const double score = validate(store, cfg, valset);
    out.reports.push_back(rep);
    out.validation_scores.push_back(score);
    if (score > out.best_score) {
      out.best_score = score;
      out.best_epoch = epoch;
      out.best_checkpoint = snapshot_checkpoint(store, train_config_to_json(cfg), epoch, score);
    }
    if (on_epoch) on_epoch(rep, score);
  }
  return out;
}

// ---------------------------------------------------------------------------
// curriculum fine-tuning
// ---------------------------------------------------------------------------

/// Geometric 1.1x size progression from the base size, with the designated
/// checkpoint sizes spliced in. Sizes are floor(base * 1.1^k), stopping at
/// the last checkpoint.
inline std::vector<int> curriculum_schedule(int base_n, const std::vector<int>& checkpoints) {
  if (checkpoints.empty()) throw ConfigError("checkpoints", "need at least one checkpoint size");
  int prev = base_n;
  for (int c : checkpoints) {
    if (c <= prev) throw ConfigError("checkpoints", "sizes must be strictly increasing");
    prev = c;
  }
  const int last = checkpoints.back();
  std::vector<int> sizes;
  double x = static_cast<double>(base_n);
  while (true) {
    x *= 1.1;
    const int s = static_cast<int>(x);
    if (s >= last) break;
    if (s > base_n) sizes.push_back(s);
  }
  for (int c : checkpoints) sizes.push_back(c);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  return sizes;
}

inline int curriculum_batch_size(int n) { return n < 250 ? 16 : (n < 350 ? 8 : 4); }

struct CurriculumConfig {
  std::vector<int> checkpoint_sizes;
  int instances_per_size = 2000;
  int epochs_at_checkpoint = 5;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Few-shot fine-tuning over the size schedule. One epoch per size, the
/// checkpoint sizes get `epochs_at_checkpoint` epochs on the same dataset and
/// emit a snapshot each.
inline std::map<int, Checkpoint> curriculum_finetune(
    ParameterStore& store, const TrainConfig& base, const CurriculumConfig& cur,
    const std::function<void(int, const EpochReport&)>& on_epoch = {}) {
  const std::vector<int> sizes = curriculum_schedule(base.nodes, cur.checkpoint_sizes);
  std::map<int, Checkpoint> snapshots;
  for (int size : sizes) {
    TrainConfig cfg = base;
    cfg.nodes = size;
    cfg.batch_size = curriculum_batch_size(size);
    cfg.seed = SplitRng(cur.seed).fork("curriculum").fork(size).next_u64();
    cfg.threads = cur.threads;
    const bool is_ckpt =
        std::find(cur.checkpoint_sizes.begin(), cur.checkpoint_sizes.end(), size) !=
        cur.checkpoint_sizes.end();
    const int epochs = is_ckpt ? cur.epochs_at_checkpoint : 1;
    // same dataset across the repeated epochs at a checkpoint size
    const std::vector<RoutingInstance> dataset =
        make_dataset(cfg.kind, cfg.distribution, size, cur.instances_per_size,
                     SplitRng(cfg.seed).fork("data"), cfg.threads);
    for (int e = 0; e < epochs; ++e) {
      const EpochReport rep = train_epoch(store, cfg, e, dataset);
      if (on_epoch) on_epoch(size, rep);
    }
    if (is_ckpt) {
      TrainConfig echo = base;
      echo.nodes = size;
      snapshots[size] = snapshot_checkpoint(store, train_config_to_json(echo), 0, 0.0);
    }
  }
  return snapshots;
}

}  // namespace great
