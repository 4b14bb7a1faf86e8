#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "great/eval.hpp"
#include "great/gradcheck.hpp"
#include "great/training.hpp"

using namespace great;

namespace {

TrainConfig tiny_config(Variant v = Variant::NB) {
  TrainConfig cfg;
  cfg.kind = Kind::Tsp;
  cfg.distribution = Distribution::Xasy;
  cfg.nodes = 6;
  cfg.epochs = 1;
  cfg.instances_per_epoch = 32;
  cfg.batch_size = 8;
  cfg.validation_size = 8;
  cfg.seed = 7;
  cfg.model.hidden_dim = 16;
  cfg.model.layers = 1;
  cfg.model.heads = 2;
  cfg.model.variant = v;
  return cfg;
}

}  // namespace

TEST_CASE("pomo_loss") {
  SECTION("equal rewards give zero loss and zero gradient") {
    ParameterStore store;
    Param& p = store.add("logits", {1, 3});
    (*p.value) = {-0.3, -0.7, -1.1};
    ad::Tape tape;
    BoundParams bp(tape, store);
    std::vector<RolloutTrace> traces(3);
    for (int r = 0; r < 3; ++r) {
      traces[r].reward = -2.0;
      traces[r].logp_sum = ad::sum_all(ad::slice_cols(bp("logits"), r, 1));
    }
    const ad::Tensor loss = pomo_loss(traces);
    REQUIRE(loss.scalar() == 0.0);
    tape.backward(loss);
    bp.accumulate();
    for (double g : store.at("logits").grad) REQUIRE(g == 0.0);
  }
  SECTION("hand-evaluated two-trace example") {
    ParameterStore store;
    Param& p = store.add("logps", {1, 2});
    (*p.value) = {-0.5, -0.5};
    ad::Tape tape;
    BoundParams bp(tape, store);
    std::vector<RolloutTrace> traces(2);
    traces[0].reward = -1.0;
    traces[1].reward = -3.0;
    for (int r = 0; r < 2; ++r)
      traces[r].logp_sum = ad::sum_all(ad::slice_cols(bp("logps"), r, 1));
    const ad::Tensor loss = pomo_loss(traces);
    REQUIRE(loss.scalar() == 0.0);  // advantages [+1, -1] against equal logps
    tape.backward(loss);
    bp.accumulate();
    // gradient favors the better trace: d loss / d logp_0 = -(R0-b)/2 = -0.5
    REQUIRE(store.at("logps").grad[0] == -0.5);
    REQUIRE(store.at("logps").grad[1] == 0.5);
  }
  SECTION("advantage centering is exact") {
    SplitRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_int(0, 8));
      std::vector<double> rewards(n);
      for (double& r : rewards) r = rng.uniform_real(-5.0, 5.0);
      double b = 0.0;
      for (double r : rewards) b += r;
      b /= n;
      double centered = 0.0;
      for (double r : rewards) centered += r - b;
      REQUIRE(std::abs(centered) < 1e-12);
    }
  }
  SECTION("a single trace is a degenerate baseline") {
    std::vector<RolloutTrace> traces(1);
    REQUIRE_THROWS_AS(pomo_loss(traces), Error);
  }
}

TEST_CASE("full pipeline gradient: encoder + decoder log-probs + pomo_loss") {
  // n=6, d=16, H=4, 2 layers, both variants; actions frozen from one sampled
  // run so the loss is smooth in the parameters.
  for (Variant v : {Variant::NB, Variant::NF}) {
    GreatConfig cfg;
    cfg.hidden_dim = 16;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.variant = v;
    const RoutingInstance inst = gen_xasy(6, 21);
    ParameterStore store;
    register_policy_params(store, cfg, Kind::Tsp);
    store.init_xavier(SplitRng(21).fork("init"));
    std::vector<std::vector<int>> action_sets;
    std::vector<int> starts;
    {
      PolicyContext ctx(inst, store, cfg, false);
      for (const auto& t : pomo_rollouts(ctx, DecodeMode::Sample, SplitRng(5))) {
        action_sets.push_back(t.actions);
        starts.push_back(t.start);
      }
    }
    LossFn fn = [&](ParameterStore& s, bool with_grad) {
      PolicyContext ctx(inst, s, cfg, with_grad);
      std::vector<RolloutTrace> traces;
      for (std::size_t r = 0; r < action_sets.size(); ++r)
        traces.push_back(rollout_forced(ctx, starts[r], action_sets[r]));
      if (!with_grad) {
        double b = 0.0;
        for (const auto& t : traces) b += t.reward;
        b /= traces.size();
        double loss = 0.0;
        for (const auto& t : traces) loss += -(t.reward - b) * t.logp_total() / traces.size();
        return loss;
      }
      const ad::Tensor loss = pomo_loss(traces);
      ctx.tape.backward(loss);
      ctx.bp.accumulate();
      return loss.scalar();
    };
    const GradCheckReport rep = finite_diff_check(fn, store, 1e-4, 250, 31);
    INFO(to_string(v) << ": worst " << rep.worst_param << " rel err " << rep.worst_rel_err);
    REQUIRE(rep.pass);
  }
}

TEST_CASE("train_epoch") {
  SECTION("fixed master seed reproduces the epoch report and the parameters") {
    const TrainConfig cfg = tiny_config();
    auto run = [&] {
      ParameterStore store = build_policy_store(cfg.model, cfg.kind, cfg.seed);
      const auto dataset = make_dataset(cfg.kind, cfg.distribution, cfg.nodes,
                                        cfg.instances_per_epoch, SplitRng(cfg.seed).fork("data"));
      const EpochReport rep = train_epoch(store, cfg, 0, dataset);
      ad::Buffer all;
      for (std::size_t i = 0; i < store.count(); ++i)
        all.insert(all.end(), store.param(i).value->begin(), store.param(i).value->end());
      return std::make_tuple(rep.mean_reward, rep.mean_loss, all);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(std::get<0>(a) == std::get<0>(b));
    REQUIRE(std::get<1>(a) == std::get<1>(b));
    REQUIRE(std::get<2>(a) == std::get<2>(b));
  }
  SECTION("thread count does not change the sampled trajectories") {
    TrainConfig cfg = tiny_config();
    auto run = [&](int threads) {
      cfg.threads = threads;
      ParameterStore store = build_policy_store(cfg.model, cfg.kind, cfg.seed);
      const auto dataset = make_dataset(cfg.kind, cfg.distribution, cfg.nodes,
                                        cfg.instances_per_epoch, SplitRng(cfg.seed).fork("data"));
      return train_epoch(store, cfg, 0, dataset).mean_reward;
    };
    REQUIRE(run(1) == run(2));
  }
}

TEST_CASE("validate") {
  const TrainConfig cfg = tiny_config();
  ParameterStore store = build_policy_store(cfg.model, cfg.kind, 3);
  const auto valset = make_dataset(cfg.kind, cfg.distribution, cfg.nodes, 10,
                                   SplitRng(cfg.seed).fork("val"));
  SECTION("same parameters give the same score") {
    REQUIRE(validate(store, cfg, valset) == validate(store, cfg, valset));
  }
  SECTION("best-of-pomo dominates single-start greedy") {
    for (const auto& inst : valset) {
      PolicyContext ctx(inst, store, cfg.model, false);
      const auto traces = pomo_rollouts(ctx, DecodeMode::Greedy, SplitRng(inst.seed).fork("val"));
      double best = traces[0].reward;
      for (const auto& t : traces) best = std::max(best, t.reward);
      const RolloutTrace single =
          decode_rollout(inst, store, cfg.model, 0, DecodeMode::Greedy, SplitRng(0));
      REQUIRE(best >= single.reward);
    }
  }
}

TEST_CASE("checkpoint io") {
  SECTION("round trip preserves tensors at 32-bit precision") {
    SplitRng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      ParameterStore store;
      const int params = 1 + static_cast<int>(rng.uniform_int(0, 3));
      for (int p = 0; p < params; ++p) {
        const int r = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const int c = 1 + static_cast<int>(rng.uniform_int(0, 5));
        Param& pp = store.add("p" + std::to_string(p), {r, c});
        for (double& v : *pp.value) v = rng.uniform_real(-2.0, 2.0);
        for (double& v : pp.adam_m) v = rng.uniform_real(-1.0, 1.0);
        for (double& v : pp.adam_v) v = rng.uniform_real(0.0, 1.0);
        pp.step = rng.uniform_int(0, 1000);
      }
      const Checkpoint ckpt = snapshot_checkpoint(store, {{"trial", trial}}, trial, 0.5);
      const std::string bytes = checkpoint_to_bytes(ckpt);
      const Checkpoint back = checkpoint_from_bytes(bytes);
      REQUIRE(checkpoint_to_bytes(back) == bytes);  // bitwise stable
      ParameterStore store2;
      for (std::size_t i = 0; i < store.count(); ++i)
        store2.add(store.param(i).name, store.param(i).shape);
      apply_checkpoint(back, store2);
      for (std::size_t i = 0; i < store.count(); ++i) {
        const Param& a = store.param(i);
        const Param& b = store2.param(i);
        REQUIRE(b.step == a.step);
        for (std::size_t k = 0; k < a.size(); ++k) {
          REQUIRE((*b.value)[k] == static_cast<double>(static_cast<float>((*a.value)[k])));
          REQUIRE(b.adam_m[k] == static_cast<double>(static_cast<float>(a.adam_m[k])));
          REQUIRE(b.adam_v[k] == static_cast<double>(static_cast<float>(a.adam_v[k])));
        }
      }
    }
  }
  SECTION("truncation reports expected vs actual") {
    ParameterStore store;
    Param& p = store.add("w", {4, 4});
    for (double& v : *p.value) v = 0.5;
    const std::string bytes = checkpoint_to_bytes(snapshot_checkpoint(store, {}, 0, 0.0));
    try {
      checkpoint_from_bytes(std::string_view(bytes).substr(0, bytes.size() - 10));
      FAIL("expected truncation error");
    } catch (const CheckpointTruncatedError& e) {
      REQUIRE(std::string(e.what()).find("payload") != std::string::npos);
    }
  }
  SECTION("unknown version") {
    ParameterStore store;
    store.add("w", {2});
    std::string bytes = checkpoint_to_bytes(snapshot_checkpoint(store, {}, 0, 0.0));
    bytes[8] = 9;  // bump the version field
    REQUIRE_THROWS_AS(checkpoint_from_bytes(bytes), CheckpointVersionError);
  }
  SECTION("shape mismatch names the tensor") {
    ParameterStore a;
    a.add("w", {2, 2});
    const Checkpoint ckpt = snapshot_checkpoint(a, {}, 0, 0.0);
    ParameterStore b;
    b.add("w", {2, 3});
    REQUIRE_THROWS_AS(apply_checkpoint(ckpt, b), CheckpointShapeError);
  }
  SECTION("checkpoint reload reproduces the validation score") {
    const TrainConfig cfg = tiny_config();
    ParameterStore store = build_policy_store(cfg.model, cfg.kind, 5);
    const auto valset = make_dataset(cfg.kind, cfg.distribution, cfg.nodes, 6,
                                     SplitRng(1).fork("val"));
    const Checkpoint ckpt = snapshot_checkpoint(store, train_config_to_json(cfg), 0, 0.0);
    ParameterStore store2;
    register_policy_params(store2, cfg.model, cfg.kind);
    apply_checkpoint(ckpt, store2);
    const double s2 = validate(store2, cfg, valset);
    // a second round trip is exact: the parameters are already f32-representable
    ParameterStore store3;
    register_policy_params(store3, cfg.model, cfg.kind);
    apply_checkpoint(checkpoint_from_bytes(checkpoint_to_bytes(
                         snapshot_checkpoint(store2, train_config_to_json(cfg), 0, 0.0))),
                     store3);
    REQUIRE(validate(store3, cfg, valset) == s2);
  }
}

TEST_CASE("train loop keeps the best checkpoint") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  ParameterStore store = build_policy_store(cfg.model, cfg.kind, cfg.seed);
  const TrainOutcome out = train(store, cfg);
  REQUIRE(out.reports.size() == 3);
  double best = -1e300;
  for (double s : out.validation_scores) best = std::max(best, s);
  REQUIRE(out.best_score == best);
  REQUIRE(out.best_checkpoint.entries.size() == store.count() * 3);
}

TEST_CASE("train config json") {
  SECTION("round trip") {
    TrainConfig cfg = tiny_config(Variant::NF);
    cfg.model.hidden_dim = 16;
    cfg.adam.lr = 5e-4;
    const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    REQUIRE(back.nodes == cfg.nodes);
    REQUIRE(back.model.variant == Variant::NF);
    REQUIRE(back.adam.lr == 5e-4);
    REQUIRE(back.scale_min == 0.5);
  }
  SECTION("unknown field is named") {
    try {
      train_config_from_json({{"epoch", 10}});
      FAIL("expected config error");
    } catch (const ConfigError& e) {
      REQUIRE(e.field == "epoch");
    }
  }
  SECTION("wrong type is named") {
    try {
      train_config_from_json({{"epochs", "ten"}});
      FAIL("expected config error");
    } catch (const ConfigError& e) {
      REQUIRE(e.field == "epochs");
    }
  }
  SECTION("bad enum is named") {
    try {
      train_config_from_json({{"kind", "knapsack"}});
      FAIL("expected config error");
    } catch (const ConfigError& e) {
      REQUIRE(e.field == "kind");
    }
  }
}

TEST_CASE("curriculum") {
  SECTION("paper-scale schedule from 100 with checkpoints 200 and 500") {
    const std::vector<int> expect = {110, 121, 133, 146, 161, 177, 194, 200, 214,
                                     235, 259, 285, 313, 345, 379, 417, 459, 500};
    REQUIRE(curriculum_schedule(100, {200, 500}) == expect);
  }
  SECTION("fine-tuning batch sizes by instance size") {
    REQUIRE(curriculum_batch_size(110) == 16);
    REQUIRE(curriculum_batch_size(249) == 16);
    REQUIRE(curriculum_batch_size(300) == 8);
    REQUIRE(curriculum_batch_size(349) == 8);
    REQUIRE(curriculum_batch_size(350) == 4);
    REQUIRE(curriculum_batch_size(500) == 4);
  }
  SECTION("non-increasing checkpoints are rejected") {
    REQUIRE_THROWS_AS(curriculum_schedule(100, {200, 150}), ConfigError);
    REQUIRE_THROWS_AS(curriculum_schedule(100, {90}), ConfigError);
  }
  SECTION("desk smoke: finetune runs and both snapshots load") {
    TrainConfig base = tiny_config();
    base.nodes = 6;
    ParameterStore store = build_policy_store(base.model, base.kind, 9);
    CurriculumConfig cur;
    cur.checkpoint_sizes = {8, 10};
    cur.instances_per_size = 8;
    cur.epochs_at_checkpoint = 2;
    cur.seed = 9;
    const auto snaps = curriculum_finetune(store, base, cur);
    REQUIRE(snaps.size() == 2);
    for (const auto& [size, ckpt] : snaps) {
      ParameterStore fresh;
      register_policy_params(fresh, base.model, base.kind);
      REQUIRE_NOTHROW(apply_checkpoint(ckpt, fresh));
      const TrainConfig echo = train_config_from_json(ckpt.config);
      REQUIRE(echo.nodes == size);
    }
  }
}
