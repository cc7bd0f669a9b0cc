#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "leverbid/agents.hpp"
#include "leverbid/evaluation.hpp"
#include "leverbid/market.hpp"
#include "leverbid/training.hpp"

namespace leverbid {

// ---------------------------------------------------------------------------
// Experiment configuration

struct AlgorithmSpec {
  std::string name;    // htlb_ddpg, ddpg, htlb_a2c, a2c, cem, manual, fixed
  double ratio = 0.0;  // fixed only

  std::string dir_name() const;
  bool operator==(const AlgorithmSpec&) const = default;
};

AlgorithmSpec parse_algorithm(const nlohmann::json& j);
bool is_known_algorithm(const std::string& name);

struct ExperimentConfig {
  EnvConfig env;
  std::vector<AlgorithmSpec> algorithms;
  int episodes = 300;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::uint64_t> eval_seeds{1000001, 1000002, 1000003};
  int eval_every = 1;
  int expansions = 10;
  DdpgConfig ddpg;
  A2cConfig a2c;
  CemConfig cem;
  AdEmulator::Options emulator;
  std::filesystem::path output = "runs/default";

  void validate() const;
  nlohmann::json to_json() const;
  /// Relative "environment_file" entries are resolved against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string hash() const;  // hex FNV-1a of the canonical JSON
};

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::uint64_t seed_offset = 0;
  int jobs = 1;
  std::optional<std::filesystem::path> out_dir;  // overrides the config's output
  bool write = true;
  bool checkpoints = true;
};

struct SeedResult {
  std::uint64_t seed = 0;
  LearningCurve curve;
  bool diverged = false;
  std::string error;
  double converged = 0.0;
};

struct RunResult {
  AlgorithmSpec algorithm;
  std::vector<SeedResult> seeds;
  double wall_time_s = 0.0;
};

/// Trains one algorithm on every seed. Divergence of a seed is recorded,
/// not rethrown.
RunResult run_algorithm(const ExperimentConfig& config, const AlgorithmSpec& algorithm, const RunOptions& options = {});
std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Per-episode mean and population stddev of the seed curves.
LearningCurve mean_curve(const std::vector<LearningCurve>& curves);

/// First episode whose trailing `window`-episode mean reaches `threshold`.
std::optional<int> first_reach_episode(const LearningCurve& curve, double threshold, int window = 10);

// ---------------------------------------------------------------------------
// Checkpoints

struct LoadedCheckpoint {
  std::string algorithm;
  double ratio = 0.0;
  EnvConfig env;
  FeatureNormalizer normalizer;
  std::vector<std::uint64_t> eval_seeds;
  Policy policy;  // owns its networks

  Environment make_environment() const { return Environment(env, normalizer); }
};

void save_ddpg_checkpoint(const std::filesystem::path& dir, const std::string& algorithm, const DdpgAgent& agent,
                          const Environment& env, const std::vector<std::uint64_t>& eval_seeds);
void save_a2c_checkpoint(const std::filesystem::path& dir, const std::string& algorithm, const A2cAgent& agent,
                         const Environment& env, const std::vector<std::uint64_t>& eval_seeds);
void save_cem_checkpoint(const std::filesystem::path& dir, const CemAgent& agent, const Environment& env,
                         const std::vector<std::uint64_t>& eval_seeds);
void save_fixed_checkpoint(const std::filesystem::path& dir, const std::string& algorithm, double ratio,
                           const Environment& env, const std::vector<std::uint64_t>& eval_seeds);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Comparison

struct SummaryRow {
  std::string algorithm;
  double mean = 0.0;    // over non-diverged seeds
  double stddev = 0.0;  // sample stddev over seeds
  std::map<std::uint64_t, double> per_seed;
  std::vector<std::uint64_t> diverged;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;  // sorted by mean, descending

  const SummaryRow* find(const std::string& algorithm) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

SummaryTable summarize(const std::vector<RunResult>& runs);
SummaryTable summarize_dir(const std::filesystem::path& dir);

struct OrderingReport {
  std::vector<std::string> expected;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> holds;  // per seed: strict ordering of converged values
  int matching() const;
  std::string to_text() const;
};

OrderingReport ordering_report(const SummaryTable& table, const std::vector<std::string>& expected);

/// Writes summary.csv, summary.json and ordering.txt into `dir`.
SummaryTable compare_dir(const std::filesystem::path& dir, const std::vector<std::string>& expected_order);

// ---------------------------------------------------------------------------
// Traffic sweep and per-product report

struct TrafficRow {
  std::string label;  // min, manual, max, learned
  double business_increment = 0.0;
  double organic_increment = 0.0;
};

std::vector<TrafficRow> traffic_sweep(const Environment& env, const Policy& learned,
                                      const std::vector<std::uint64_t>& seeds);
std::string traffic_csv(const std::vector<TrafficRow>& rows);

struct ProductRow {
  int product_id = 0;
  double organic_policy = 0.0;
  double organic_manual = 0.0;
  double relative_increment = 0.0;  // (policy - manual) / max(manual, 1)
};

struct PerProductReport {
  std::vector<ProductRow> rows;
  int positive() const;
  int above(double threshold) const;
  std::string to_csv() const;
  nlohmann::json summary_json() const;
};

PerProductReport per_product_report(const Environment& env, const Policy& policy,
                                    const std::vector<std::uint64_t>& seeds);

/// Writes `csv` and a JSON sidecar (`stem`.json) atomically.
void write_table(const std::filesystem::path& dir, const std::string& stem, const std::string& csv,
                 const nlohmann::json& meta);

}  // namespace leverbid
