#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "great/encoder.hpp"
#include "great/env.hpp"
#include "great/instance.hpp"
#include "great/params.hpp"
#include "great/rng.hpp"
#include "great/tensor.hpp"

namespace great {

constexpr double kLogitClip = 10.0;
constexpr double kMaskedLogit = -1e300;  // effectively -inf, kept finite for the engine
constexpr double kTieTol = 1e-12;
constexpr int kPomoCap = 100;

enum class DecodeMode { Greedy, Sample };

inline int context_width(int hidden_dim, Kind kind) {
  return 3 * hidden_dim + (kind == Kind::Tsp ? 0 : 1);
}

inline void register_decoder_params(ParameterStore& store, const GreatConfig& cfg, Kind kind) {
  const int d = cfg.hidden_dim;
  store.add("dec.wc", {context_width(d, kind), d});
  store.add("dec.wq", {d, d});
  store.add("dec.wk", {d, d});
}

inline void register_policy_params(ParameterStore& store, const GreatConfig& cfg, Kind kind) {
  enc::register_encoder_params(store, cfg, kind);
  register_decoder_params(store, cfg, kind);
}

struct RolloutTrace {
  int start = 0;
  std::vector<int> actions;        // chosen nodes, in order
  std::vector<double> step_logps;  // log-probability of each chosen action
  double reward = 0.0;
  ad::Tensor logp_sum;  // on-tape sum of step log-probs; defined when recording gradients

  double logp_total() const {
    double s = 0.0;
    for (double v : step_logps) s += v;
    return s;
  }
};

/// Per-instance forward state: the tape, the encoder output and the
/// precomputed pointer keys, shared by every rollout of this instance.
struct PolicyContext {
  PolicyContext(const RoutingInstance& instance, ParameterStore& store, const GreatConfig& config,
                bool with_grad)
      : inst(&instance), cfg(config), bp(tape, store) {
    tape.grad_enabled = with_grad;
    enc_out = enc::encode(tape, bp, instance, config);
    // The raw pooled node features are unbounded; the decoder reads a
    // standardized view so the clipped pointer scores stay in the active
    // range of the tanh. The key path is additionally centered across nodes:
    // a score component shared by all candidates cancels in the softmax but
    // would drag every logit into the tanh's flat region together.
    nodes = ad::standardize_rows(enc_out.nodes);
    const int n = instance.n();
    ad::Tensor col_mean = ad::gather_rows(ad::mean_rows(nodes), std::vector<int>(n, 0));
    keys = ad::linear(ad::sub(nodes, col_mean), bp("dec.wk"));
  }
  PolicyContext(const PolicyContext&) = delete;
  PolicyContext& operator=(const PolicyContext&) = delete;

  const RoutingInstance* inst;
  GreatConfig cfg;
  ad::Tape tape;
  BoundParams bp;
  enc::EncodeOut enc_out;
  ad::Tensor nodes;  // standardized node embeddings, decoder's working view
  ad::Tensor keys;   // [n, d]
};

/// Projected state summary: graph mean, first node, current node and the
/// dynamic scalar (spare capacity or budget fraction) for CVRP/OP.
inline ad::Tensor context_vector(PolicyContext& ctx, const EnvState& state) {
  std::vector<ad::Tensor> parts;
  parts.push_back(ad::mean_rows(ctx.nodes));
  parts.push_back(ad::gather_rows(ctx.nodes, {state.start}));
  parts.push_back(ad::gather_rows(ctx.nodes, {state.current}));
  const Kind kind = ctx.inst->kind;
  if (kind == Kind::Cvrp)
    parts.push_back(ctx.tape.input({1, 1}, {static_cast<double>(state.remaining_capacity) /
                                            ctx.inst->capacity}));
  if (kind == Kind::Op)
    parts.push_back(ctx.tape.input(
        {1, 1}, {ctx.inst->budget > 0.0 ? state.remaining_budget / ctx.inst->budget : 0.0}));
  return ad::linear(ad::concat_cols(parts), ctx.bp("dec.wc"));
}

/// Clipped single-head pointer scores; masked entries carry a -inf sentinel.
inline ad::Tensor pointer_logits(PolicyContext& ctx, const ad::Tensor& context,
                                 const ActionMask& mask) {
  int valid = 0;
  for (auto a : mask.allowed) valid += a != 0;
  if (valid == 0) throw NoValidActionError("pointer_logits with a fully masked state");
  const int d = ctx.cfg.hidden_dim;
  const int n = ctx.inst->n();
  ad::Tensor q = ad::linear(context, ctx.bp("dec.wq"));           // [1, d]
  ad::Tensor scores = ad::matmul(ctx.keys, ad::reshape(q, {d, 1}));  // [n, 1]
  ad::Tensor u = ad::scale(ad::tanh(ad::scale(ad::reshape(scores, {n}),
                                              1.0 / std::sqrt(static_cast<double>(d)))),
                           ctx.cfg.logit_clip);
  return ad::mask_fill(u, mask.allowed, kMaskedLogit);
}

/// Probabilities of the masked softmax, computed off-tape.
inline std::vector<double> masked_probs(const ad::Buffer& logits,
                                        const std::vector<std::uint8_t>& mask) {
  const int n = static_cast<int>(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j)
    if (mask[j]) mx = std::max(mx, logits[j]);
  std::vector<double> p(n, 0.0);
  double denom = 0.0;
  for (int j = 0; j < n; ++j)
    if (mask[j]) {
      p[j] = std::exp(logits[j] - mx);
      denom += p[j];
    }
  for (int j = 0; j < n; ++j) p[j] /= denom;
  return p;
}

/// Lowest index within kTieTol of the maximum probability.
inline int greedy_pick(const std::vector<double>& probs, const std::vector<std::uint8_t>& mask) {
  double best = -1.0;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (mask[j]) best = std::max(best, probs[j]);
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (mask[j] && probs[j] >= best - kTieTol) return static_cast<int>(j);
  throw NoValidActionError("greedy_pick saw no unmasked action");
}

inline int sample_pick(const std::vector<double>& probs, const std::vector<std::uint8_t>& mask,
                       SplitRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (mask[j]) {
      acc += probs[j];
      last = static_cast<int>(j);
      if (u < acc) return last;
    }
  if (last < 0) throw NoValidActionError("sample_pick saw no unmasked action");
  return last;
}

/// One rollout sharing the context's encoder output. `forced_first >= 0`
/// pins the first action (POMO diversification for CVRP/OP).
inline RolloutTrace rollout_on(PolicyContext& ctx, int start, DecodeMode mode, SplitRng rng,
                               int forced_first = -1) {
  EnvState state = reset(*ctx.inst, start);
  RolloutTrace trace;
  trace.start = start;
  std::vector<ad::Tensor> logp_nodes;
  bool first = true;
  while (!state.done) {
    const ActionMask mask = valid_actions(state);
    ad::Tensor logits = pointer_logits(ctx, context_vector(ctx, state), mask);
    int action;
    if (first && forced_first >= 0) {
      action = forced_first;
      if (!mask[action])
        throw IllegalMoveError("forced first action " + std::to_string(action) + " is masked");
    } else {
      const std::vector<double> probs = masked_probs(logits.data(), mask.allowed);
      action = mode == DecodeMode::Greedy ? greedy_pick(probs, mask.allowed)
                                          : sample_pick(probs, mask.allowed, rng);
    }
    ad::Tensor logp = ad::masked_log_prob(logits, mask.allowed, action);
    trace.actions.push_back(action);
    trace.step_logps.push_back(logp.scalar());
    if (ctx.tape.grad_enabled) logp_nodes.push_back(logp);
    state = step(std::move(state), action);
    first = false;
  }
  trace.reward = finalize_reward(state);
  if (ctx.tape.grad_enabled && !logp_nodes.empty())
    trace.logp_sum = ad::weighted_sum(logp_nodes, std::vector<double>(logp_nodes.size(), 1.0));
  return trace;
}

/// Stand-alone single rollout; encodes the instance once internally.
inline RolloutTrace decode_rollout(const RoutingInstance& inst, ParameterStore& store,
                                   const GreatConfig& cfg, int start, DecodeMode mode,
                                   SplitRng rng) {
  PolicyContext ctx(inst, store, cfg, false);
  return rollout_on(ctx, start, mode, rng);
}

/// Replays a fixed action sequence, recomputing step log-probs under the
/// context's current parameters. The loss of such traces is a smooth
/// function of the parameters, which is what gradient checking needs.
inline RolloutTrace rollout_forced(PolicyContext& ctx, int start, const std::vector<int>& actions) {
  EnvState state = reset(*ctx.inst, start);
  RolloutTrace trace;
  trace.start = start;
  std::vector<ad::Tensor> logp_nodes;
  for (int action : actions) {
    const ActionMask mask = valid_actions(state);
    ad::Tensor logits = pointer_logits(ctx, context_vector(ctx, state), mask);
    ad::Tensor logp = ad::masked_log_prob(logits, mask.allowed, action);
    trace.actions.push_back(action);
    trace.step_logps.push_back(logp.scalar());
    if (ctx.tape.grad_enabled) logp_nodes.push_back(logp);
    state = step(std::move(state), action);
  }
  if (!state.done) throw ContractError("forced action sequence does not finish the episode");
  trace.reward = finalize_reward(state);
  if (ctx.tape.grad_enabled && !logp_nodes.empty())
    trace.logp_sum = ad::weighted_sum(logp_nodes, std::vector<double>(logp_nodes.size(), 1.0));
  return trace;
}

/// POMO rollout set: TSP uses one rollout per start node, CVRP/OP start at
/// the depot with the first customer forced, both capped at 100 rollouts.
inline std::vector<RolloutTrace> pomo_rollouts(PolicyContext& ctx, DecodeMode mode, SplitRng rng) {
  const int n = ctx.inst->n();
  std::vector<RolloutTrace> traces;
  if (ctx.inst->kind == Kind::Tsp) {
    const int count = std::min(n, kPomoCap);
    traces.reserve(count);
    for (int s = 0; s < count; ++s) traces.push_back(rollout_on(ctx, s, mode, rng.fork(s)));
  } else {
    const int count = std::min(n - 1, kPomoCap);
    traces.reserve(count);
    for (int r = 0; r < count; ++r) {
      const int customer = r + 1;
      // A forced customer can be masked only under nonstandard budgets;
      // skip such rollouts instead of stepping illegally.
      const ActionMask mask = valid_actions(reset(*ctx.inst, 0));
      if (!mask[customer]) continue;
      traces.push_back(rollout_on(ctx, 0, mode, rng.fork(r), customer));
    }
    if (traces.empty()) traces.push_back(rollout_on(ctx, 0, mode, rng.fork("fallback")));
  }
  return traces;
}

inline std::vector<RolloutTrace> pomo_rollouts(const RoutingInstance& inst, ParameterStore& store,
                                               const GreatConfig& cfg, DecodeMode mode,
                                               SplitRng rng) {
  PolicyContext ctx(inst, store, cfg, false);
  return pomo_rollouts(ctx, mode, rng);
}

/// Replays the recorded actions through a fresh environment.
inline double replay_trace(const RoutingInstance& inst, const RolloutTrace& trace) {
  EnvState state = reset(inst, trace.start);
  for (int a : trace.actions) state = step(std::move(state), a);
  return finalize_reward(state);
}

}  // namespace great
