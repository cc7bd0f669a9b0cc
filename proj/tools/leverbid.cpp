#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "leverbid/dynamics.hpp"
#include "leverbid/harness.hpp"
#include "leverbid/io.hpp"

namespace fs = std::filesystem;
using namespace leverbid;

namespace {

const std::vector<std::string> kExpectedOrder{"htlb_ddpg", "ddpg", "a2c", "cem", "manual"};

void configure_logging() {
  const char* level = std::getenv("LEVERBID_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_run(const fs::path& config_path, const RunOptions& opts, const std::string& only, int episodes) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  if (episodes > 0) cfg.episodes = episodes;
  if (!only.empty()) {
    std::vector<AlgorithmSpec> keep;
    for (const auto& name : split_csv(only)) {
      bool found = false;
      for (const auto& a : cfg.algorithms) {
        if (a.name == name || a.dir_name() == name) {
          keep.push_back(a);
          found = true;
        }
      }
      if (!found) keep.push_back(parse_algorithm(nlohmann::json(name)));
    }
    cfg.algorithms = keep;
  }
  const fs::path out = opts.out_dir.value_or(cfg.output);
  fs::create_directories(out);
  io::write_file_atomic(out / "experiment.json", cfg.to_json().dump(2) + "\n");
  const auto runs = run_experiment(cfg, opts);
  std::cout << summarize(runs).to_text();
  for (const auto& r : runs) spdlog::info("{}: {:.1f} s", r.algorithm.dir_name(), r.wall_time_s);
  return 0;
}

int cmd_compare(const fs::path& dir) {
  const SummaryTable t = compare_dir(dir, kExpectedOrder);
  std::cout << t.to_text();
  if (fs::exists(dir / "ordering.txt")) std::cout << io::read_file(dir / "ordering.txt");
  for (const auto& name : kExpectedOrder) {
    if (!t.find(name)) std::cout << "absent: " << name << "\n";
  }
  return 0;
}

int cmd_sweep(const fs::path& config_path, const fs::path& checkpoint, const std::optional<fs::path>& out_dir) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Environment env(cfg.env, ck.normalizer);
  const auto rows = traffic_sweep(env, ck.policy, cfg.eval_seeds);
  const std::string csv = traffic_csv(rows);
  std::cout << csv;
  const fs::path out = out_dir.value_or(cfg.output);
  write_table(out, "traffic_sweep", csv,
              {{"checkpoint", checkpoint.string()}, {"algorithm", ck.algorithm}, {"eval_seeds", cfg.eval_seeds},
               {"config_hash", cfg.hash()}});
  return 0;
}

int cmd_report(const fs::path& checkpoint, const std::optional<fs::path>& out_dir) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const PerProductReport r = per_product_report(ck.make_environment(), ck.policy, ck.eval_seeds);
  std::cout << r.to_csv();
  const auto summary = r.summary_json();
  std::cout << "positive: " << r.positive() << "/" << r.rows.size() << ", above 100%: " << r.above(1.0) << "\n";
  const fs::path out = out_dir.value_or(fs::is_directory(checkpoint) ? checkpoint : checkpoint.parent_path());
  nlohmann::json meta = summary;
  meta["checkpoint"] = checkpoint.string();
  meta["algorithm"] = ck.algorithm;
  write_table(out, "per_product", r.to_csv(), meta);
  return 0;
}

int cmd_dynamics(const fs::path& config_path, const std::optional<fs::path>& out_dir) {
  const EnvConfig env = EnvConfig::load(config_path.string());
  nlohmann::json all = nlohmann::json::array();
  for (const auto& p : env.products) {
    if (!p.target) continue;
    const double pmax = std::max(1.0, 1.5 * p.traffic_win.saturation);
    nlohmann::json j = to_json(fixed_points(p.traffic_win, p.exposure_effect, pmax));
    j["product_id"] = p.id;
    all.push_back(j);
    if (out_dir) {
      fs::create_directories(*out_dir);
      io::write_file_atomic(*out_dir / ("curves_" + std::to_string(p.id) + ".csv"),
                            curve_samples_csv(p.traffic_win, p.exposure_effect, pmax, 201));
    }
  }
  std::cout << all.dump(2) << "\n";
  if (out_dir) io::write_file_atomic(*out_dir / "fixed_points.json", all.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"leverbid: leverage-aware bidding experiments"};
  app.require_subcommand(1);

  RunOptions opts;
  std::string out;
  app.add_option("--seed-offset", opts.seed_offset, "Added to every configured seed");
  app.add_option("--jobs", opts.jobs, "Parallel training jobs")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory (overrides the config)");

  std::string config, dir, checkpoint, only;
  int episodes = 0;
  auto* run = app.add_subcommand("run", "Train the configured algorithms on every seed");
  run->add_option("config", config, "Experiment config (JSON)")->required();
  run->add_option("--algorithms", only, "Comma-separated subset of algorithms to run");
  run->add_option("--episodes", episodes, "Override the number of training episodes");

  auto* compare = app.add_subcommand("compare", "Summarize completed runs in a directory");
  compare->add_option("dir", dir, "Run directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Business vs organic traffic for min/manual/max/learned policies");
  sweep->add_option("config", config, "Experiment config (JSON)")->required();
  sweep->add_option("--checkpoint", checkpoint, "Trained checkpoint directory")->required();

  auto* report = app.add_subcommand("report", "Per-product relative organic increments of a checkpoint");
  report->add_option("checkpoint", checkpoint, "Checkpoint directory")->required();

  auto* dyn = app.add_subcommand("dynamics", "Fixed points of every target product's traffic map");
  dyn->add_option("config", config, "Environment or experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);
  const std::optional<fs::path> out_dir = out.empty() ? std::nullopt : std::optional<fs::path>(out);
  opts.out_dir = out_dir;

  try {
    if (*run) return cmd_run(config, opts, only, episodes);
    if (*compare) return cmd_compare(dir);
    if (*sweep) return cmd_sweep(config, checkpoint, out_dir);
    if (*report) return cmd_report(checkpoint, out_dir);
    if (*dyn) return cmd_dynamics(config, out_dir);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
