/*
 * Copyright 2026 The rankreward Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: run-online, run-offline, gen-pool, verify-theory
// and serve.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "rankreward.hpp"

namespace rr = rankreward;
namespace th = rankreward::theory;

namespace {

struct Common {
  std::string config;
  std::string env;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string reward;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON) or a run manifest");
  cmd->add_option("--env", c.env, "Environment when no config is given (grid-nav, point-mass)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory or file");
  cmd->add_option("--reward", c.reward, "Override the reward source (rmse, rbrl, ground_truth)");
}

rr::ExperimentConfig resolve(const Common& c) {
  rr::ExperimentConfig cfg = !c.config.empty() ? rr::load_config(c.config)
                                               : rr::default_config(c.env.empty() ? "grid-nav" : c.env);
  if (!c.config.empty() && !c.env.empty() && c.env != cfg.env) {
    throw rr::ConfigError("--env " + c.env + " conflicts with the config's env " + cfg.env);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.reward.empty()) cfg.reward = rr::reward_source_from_string(c.reward);
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_summary(const nlohmann::json& s) { std::cout << s.dump(2) << '\n'; }

int run_online_cmd(const Common& c) {
  rr::ExperimentConfig cfg = resolve(c);
  if (cfg.teacher.mode == rr::TeacherMode::live) {
    throw rr::ConfigError("teacher.mode is live; use `serve` to run with a human rater");
  }
  if (cfg.output_dir.empty()) cfg.output_dir = "runs/online";
  const rr::OnlineResult r = rr::run_online(cfg);
  rr::write_online_outputs(cfg, r, "run-online");
  print_summary(rr::online_summary(r));
  return 0;
}

int run_offline_cmd(const Common& c, const std::string& pool_path) {
  rr::ExperimentConfig cfg = resolve(c);
  if (!pool_path.empty()) cfg.offline.pool = pool_path;
  if (cfg.offline.pool.empty()) throw rr::ConfigError("run-offline needs --pool or offline.pool");
  if (cfg.output_dir.empty()) cfg.output_dir = "runs/offline";
  const auto pool = rr::pool_from_json(rr::read_json_file(cfg.offline.pool));
  const rr::OfflineResult r = rr::run_offline(cfg, pool);
  rr::write_offline_outputs(cfg, r);
  print_summary(rr::offline_summary(r));
  return 0;
}

int gen_pool_cmd(const Common& c) {
  const rr::ExperimentConfig cfg = resolve(c);
  const std::string path = c.out.empty() ? "pool.json" : c.out;
  const rr::PoolResult p = rr::gen_pool(cfg);
  rr::write_json_file(path, rr::pool_to_json(p.pool));
  std::cout << "wrote " << p.pool.size() << " trajectories to " << path << " after " << p.episodes_tried
            << " episodes; cells " << nlohmann::json(p.cell_counts).dump() << '\n';
  if (!p.complete) {
    std::cerr << "warning: not every cell reached " << cfg.pool.per_class << " trajectories\n";
    return 3;
  }
  return 0;
}

int verify_theory_cmd(std::size_t per_n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t checked = 0, agree = 0, grid = 0, grid_ok = 0, tried = 0, witnessed = 0;
  for (std::size_t n : {3u, 4u, 5u}) {
    for (std::size_t i = 0; i < per_n; ++i) {
      th::InstanceShape shape;
      shape.n_classes = n;
      shape.states = n >= 5 ? 4 : 3;
      const auto inst = th::random_instance(shape, rng, 5000);
      if (!inst) continue;
      ++checked;
      const auto r = th::feasible_set(*inst);
      agree += th::rmse_zero_set(*inst) == r && std::binary_search(r.begin(), r.end(), inst->r_star);
      const double half = 0.5 / static_cast<double>(n);
      const auto w = th::rbrl_counterexample(*inst, rr::uniform_boundaries(n), 10.0, 0.2 * half);
      ++tried;
      witnessed += w && w->is_counterexample;
    }
    th::InstanceShape shape;
    shape.n_classes = n;
    shape.max_per_class = 2;
    shape.states = n >= 5 ? 4 : 3;
    const auto inst = th::random_instance(shape, rng, 5000);
    if (!inst) continue;
    const double bound = rr::rank_error_bound(static_cast<int>(n));
    for (int i = 0; i < 20; ++i) {
      const double eps = (i + 0.5) / 20.0;
      ++grid;
      grid_ok += th::relaxed_equivalence(*inst, eps, rng, 2).equal == (eps < bound);
    }
  }
  std::printf("zero set == feasible set: %zu/%zu instances\n", agree, checked);
  std::printf("relaxed set == feasible set iff eps < bound: %zu/%zu grid points\n", grid_ok, grid);
  std::printf("RbRL offset-midpoint counterexamples: %zu/%zu\n", witnessed, tried);
  const bool ok = checked > 0 && agree == checked && grid_ok == grid && witnessed == tried;
  std::printf("%s\n", ok ? "all checks hold" : "CHECKS FAILED");
  return ok ? 0 : 1;
}

int serve_cmd(const Common& c, std::optional<int> port, bool simulate) {
  rr::ExperimentConfig cfg = resolve(c);
  if (port) cfg.service.port = *port;
  if (!simulate) cfg.teacher.mode = rr::TeacherMode::live;
  if (cfg.output_dir.empty()) cfg.output_dir = "runs/live";
  rr::RatingQueue queue;
  rr::RatingServer server(queue);
  const int bound = server.start(cfg.service.host, cfg.service.port);
  std::cerr << "rating service on http://" << cfg.service.host << ":" << bound << '\n';
  const rr::OnlineResult r = rr::run_online(cfg, &queue);
  rr::write_online_outputs(cfg, r, "serve");
  print_summary(rr::online_summary(r));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rating-based reward learning experiments"};
  app.require_subcommand(1);

  Common online_opts;
  auto* online = app.add_subcommand("run-online", "Online reward learning with a simulated teacher");
  add_common(online, online_opts);

  Common offline_opts;
  std::string pool_path;
  auto* offline = app.add_subcommand("run-offline", "Train a reward on a rated pool, then an agent on it");
  add_common(offline, offline_opts);
  offline->add_option("--pool", pool_path, "Pool file written by gen-pool");

  Common pool_opts;
  auto* pool = app.add_subcommand("gen-pool", "Generate an offline trajectory pool from a trained controller");
  add_common(pool, pool_opts);

  std::size_t per_n = 40;
  std::uint64_t theory_seed = 2024;
  auto* theory = app.add_subcommand("verify-theory", "Check the solution-set oracles on random instances");
  theory->add_option("--instances", per_n, "Random instances per class count");
  theory->add_option("--seed", theory_seed, "Seed");

  Common serve_opts;
  std::optional<int> port;
  bool simulate = false;
  auto* serve = app.add_subcommand("serve", "Online run with ratings collected over HTTP");
  add_common(serve, serve_opts);
  serve->add_option("--port", port, "Port for the rating service (0 picks one)");
  serve->add_flag("--simulated-teacher", simulate, "Keep the config's teacher mode (for smoke tests)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*online) return run_online_cmd(online_opts);
    if (*offline) return run_offline_cmd(offline_opts, pool_path);
    if (*pool) return gen_pool_cmd(pool_opts);
    if (*theory) return verify_theory_cmd(per_n, theory_seed);
    if (*serve) return serve_cmd(serve_opts, port, simulate);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
