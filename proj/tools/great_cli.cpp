#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "great/great.hpp"

namespace {

great::TrainConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw great::Error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw great::Error("config is not valid json: " + std::string(e.what()));
  }
  return great::train_config_from_json(j);
}

struct LoadedModel {
  great::TrainConfig cfg;
  great::ParameterStore store;
};

LoadedModel load_model(const std::string& path) {
  const great::Checkpoint ckpt = great::load_checkpoint(path);
  LoadedModel m;
  m.cfg = great::train_config_from_json(ckpt.config);
  great::register_policy_params(m.store, m.cfg.model, m.cfg.kind);
  great::apply_checkpoint(ckpt, m.store);
  return m;
}

void print_report(const great::GapReport& report) {
  std::printf("%-10s %14s %14s %10s %9s %10s\n", "instance", "objective", "reference", "gap",
              "feasible", "millis");
  for (const auto& r : report.rows) {
    if (r.excluded)
      std::printf("%-10d %14.6f %14.6f %10s %9s %10.2f\n", r.instance, r.objective, r.reference,
                  "excl", r.feasible ? "yes" : "no", r.millis);
    else
      std::printf("%-10d %14.6f %14.6f %9.4f%% %9s %10.2f\n", r.instance, r.objective, r.reference,
                  100.0 * r.gap, r.feasible ? "yes" : "no", r.millis);
  }
  std::printf("mean gap %.4f%%  (95%% bootstrap [%.4f%%, %.4f%%])  excluded %d  total %.1f ms\n",
              100.0 * report.mean_gap, 100.0 * report.ci_lo, 100.0 * report.ci_hi,
              report.excluded_count, report.total_millis);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GREAT: edge-attention routing models, oracles and evaluation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a JSONL instance dataset");
  std::string gen_kind = "tsp", gen_dist = "euc", gen_out;
  int gen_n = 100, gen_count = 1;
  std::uint64_t gen_seed = 0;
  int gen_threads = 1;
  gen->add_option("--kind", gen_kind, "tsp|cvrp|op");
  gen->add_option("--dist", gen_dist, "euc|tmat|xasy");
  gen->add_option("--n", gen_n, "node count")->check(CLI::Range(2, 100000));
  gen->add_option("--count", gen_count, "number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--threads", gen_threads, "worker threads");
  gen->add_option("--out", gen_out, "output path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a policy from a JSON config");
  std::string train_config_path, train_out = "model.ckpt";
  int train_threads = 0;
  train_cmd->add_option("--config", train_config_path, "JSON config file")->required();
  train_cmd->add_option("--out", train_out, "best-checkpoint output path");
  train_cmd->add_option("--threads", train_threads, "override config threads");

  // finetune
  auto* ft = app.add_subcommand("finetune", "curriculum fine-tuning from a checkpoint");
  std::string ft_model, ft_outdir = ".";
  std::vector<int> ft_checkpoints;
  int ft_instances = 2000, ft_epochs_ckpt = 5, ft_threads = 1;
  std::uint64_t ft_seed = 0;
  ft->add_option("--model", ft_model, "base checkpoint")->required();
  ft->add_option("--checkpoints", ft_checkpoints, "snapshot sizes, ascending")->required();
  ft->add_option("--instances", ft_instances, "instances per size");
  ft->add_option("--epochs-at-checkpoint", ft_epochs_ckpt, "epochs at snapshot sizes");
  ft->add_option("--seed", ft_seed, "fine-tuning seed");
  ft->add_option("--threads", ft_threads, "worker threads");
  ft->add_option("--out", ft_outdir, "directory for ft<size>.ckpt snapshots");

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "solve instances with a trained model");
  std::string solve_model, solve_data, solve_out;
  int solve_aug = 1, solve_threads = 1;
  solve_cmd->add_option("--model", solve_model, "checkpoint")->required();
  solve_cmd->add_option("--data", solve_data, "JSONL instance file")->required();
  solve_cmd->add_option("--aug", solve_aug, "augmentation count (x1/x9/x33)")
      ->check(CLI::PositiveNumber);
  solve_cmd->add_option("--threads", solve_threads, "worker threads");
  solve_cmd->add_option("--out", solve_out, "JSONL output of objectives/routes");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "gap evaluation against a reference solver");
  std::string eval_model, eval_data, eval_oracle = "held-karp", eval_csv;
  int eval_aug = 1, eval_threads = 1;
  eval_cmd->add_option("--model", eval_model, "checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "JSONL instance file")->required();
  eval_cmd->add_option("--aug", eval_aug, "augmentation count")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--oracle", eval_oracle, "reference solver name");
  eval_cmd->add_option("--threads", eval_threads, "worker threads");
  eval_cmd->add_option("--csv", eval_csv, "also write the per-instance CSV here");

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "run a classical solver over a dataset");
  std::string oracle_data, oracle_method = "held-karp", oracle_out;
  int oracle_threads = 1;
  oracle_cmd->add_option("--data", oracle_data, "JSONL instance file")->required();
  oracle_cmd->add_option("--method", oracle_method, "solver name");
  oracle_cmd->add_option("--threads", oracle_threads, "worker threads");
  oracle_cmd->add_option("--out", oracle_out, "JSONL output of objectives/routes");

  // dump-embeddings
  auto* dump = app.add_subcommand("dump-embeddings", "node-encoding similarity matrices as CSV");
  std::string dump_model, dump_data, dump_out = "similarity.csv";
  int dump_index = 0;
  dump->add_option("--model", dump_model, "checkpoint")->required();
  dump->add_option("--data", dump_data, "JSONL instance file")->required();
  dump->add_option("--index", dump_index, "instance index within the file");
  dump->add_option("--out", dump_out, "CSV output path");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      const great::Kind kind = great::kind_from_string(gen_kind);
      const great::Distribution dist = great::distribution_from_string(gen_dist);
      const auto instances = great::make_dataset(kind, dist, gen_n, gen_count,
                                                 great::SplitRng(gen_seed), gen_threads);
      great::write_instances(gen_out, instances);
      std::printf("wrote %d %s/%s instances (n=%d) to %s\n", gen_count, gen_kind.c_str(),
                  gen_dist.c_str(), gen_n, gen_out.c_str());
    }

    if (train_cmd->parsed()) {
      great::TrainConfig cfg = config_from_file(train_config_path);
      if (train_threads > 0) cfg.threads = train_threads;
      great::ParameterStore store = great::build_policy_store(cfg.model, cfg.kind, cfg.seed);
      std::printf("training %s %s n=%d, %d epochs x %d instances, %zu parameters\n",
                  great::to_string(cfg.kind), great::to_string(cfg.distribution), cfg.nodes,
                  cfg.epochs, cfg.instances_per_epoch, store.total_size());
      const great::TrainOutcome outcome =
          great::train(store, cfg, [](const great::EpochReport& rep, double score) {
            std::printf("epoch %3d  reward %10.4f  loss %12.6f  val %10.4f  (%.1f inst/s)\n",
                        rep.epoch, rep.mean_reward, rep.mean_loss, score,
                        rep.instances_per_second);
            std::fflush(stdout);
          });
      great::save_checkpoint(train_out, outcome.best_checkpoint);
      std::printf("best validation %.4f at epoch %d -> %s\n", outcome.best_score,
                  outcome.best_epoch, train_out.c_str());
    }

    if (ft->parsed()) {
      LoadedModel m = load_model(ft_model);
      great::CurriculumConfig cur;
      cur.checkpoint_sizes = ft_checkpoints;
      cur.instances_per_size = ft_instances;
      cur.epochs_at_checkpoint = ft_epochs_ckpt;
      cur.seed = ft_seed;
      cur.threads = ft_threads;
      const auto snapshots = great::curriculum_finetune(
          m.store, m.cfg, cur, [](int size, const great::EpochReport& rep) {
            std::printf("size %4d  reward %10.4f  loss %12.6f  (%.1f inst/s)\n", size,
                        rep.mean_reward, rep.mean_loss, rep.instances_per_second);
            std::fflush(stdout);
          });
      for (const auto& [size, ckpt] : snapshots) {
        const std::string path = ft_outdir + "/ft" + std::to_string(size) + ".ckpt";
        great::save_checkpoint(path, ckpt);
        std::printf("snapshot %s\n", path.c_str());
      }
    }

    if (solve_cmd->parsed()) {
      LoadedModel m = load_model(solve_model);
      const auto dataset = great::read_instances(solve_data);
      std::vector<great::Solution> sols(dataset.size());
      great::parallel_strided(static_cast<int>(dataset.size()), solve_threads, [&](int i, int) {
        sols[i] = great::augmented_solve(dataset[i], m.store, m.cfg.model, solve_aug);
      });
      double mean = 0.0;
      for (const auto& s : sols) mean += s.objective;
      mean /= static_cast<double>(sols.size());
      if (!solve_out.empty()) {
        std::ofstream out(solve_out, std::ios::binary);
        for (std::size_t i = 0; i < sols.size(); ++i) {
          nlohmann::json j = {{"instance", i},
                              {"objective", sols[i].objective},
                              {"feasible", sols[i].feasible},
                              {"routes", sols[i].routes}};
          out << j.dump() << '\n';
        }
      }
      std::printf("solved %zu instances (x%d), mean objective %.6f\n", sols.size(), solve_aug,
                  mean);
    }

    if (eval_cmd->parsed()) {
      LoadedModel m = load_model(eval_model);
      const auto dataset = great::read_instances(eval_data);
      const great::GapReport report =
          great::evaluate_dataset(dataset, great::neural_solver(m.store, m.cfg.model, eval_aug),
                                  great::oracle_solver(eval_oracle), eval_threads);
      print_report(report);
      if (!eval_csv.empty()) great::write_gap_csv(eval_csv, report);
    }

    if (oracle_cmd->parsed()) {
      const auto dataset = great::read_instances(oracle_data);
      const great::Solver solver = great::oracle_solver(oracle_method);
      std::vector<great::Solution> sols(dataset.size());
      great::parallel_strided(static_cast<int>(dataset.size()), oracle_threads,
                              [&](int i, int) { sols[i] = solver(dataset[i]); });
      double mean = 0.0;
      for (const auto& s : sols) mean += s.objective;
      mean /= static_cast<double>(sols.size());
      if (!oracle_out.empty()) {
        std::ofstream out(oracle_out, std::ios::binary);
        for (std::size_t i = 0; i < sols.size(); ++i) {
          nlohmann::json j = {{"instance", i},
                              {"objective", sols[i].objective},
                              {"feasible", sols[i].feasible},
                              {"routes", sols[i].routes}};
          out << j.dump() << '\n';
        }
      }
      std::printf("%s over %zu instances: mean objective %.6f\n", oracle_method.c_str(),
                  sols.size(), mean);
    }

    if (dump->parsed()) {
      LoadedModel m = load_model(dump_model);
      const auto dataset = great::read_instances(dump_data);
      if (dump_index < 0 || dump_index >= static_cast<int>(dataset.size()))
        throw great::Error("--index out of range for the dataset");
      great::dump_node_similarity(m.store, dataset[dump_index], m.cfg.model, dump_out);
      std::printf("wrote similarity matrices for instance %d to %s\n", dump_index,
                  dump_out.c_str());
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
