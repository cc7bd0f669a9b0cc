#include "leverbid/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "leverbid/io.hpp"

namespace leverbid {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kAlgorithms{"htlb_ddpg", "ddpg", "htlb_a2c", "a2c", "cem", "manual", "fixed"};

json algorithm_json(const AlgorithmSpec& a) {
  if (a.name == "fixed") return json{{"name", a.name}, {"ratio", a.ratio}};
  return a.name;
}

}  // namespace

bool is_known_algorithm(const std::string& name) {
  return std::find(kAlgorithms.begin(), kAlgorithms.end(), name) != kAlgorithms.end();
}

std::string AlgorithmSpec::dir_name() const {
  if (name != "fixed") return name;
  return "fixed_" + io::format_double(ratio);
}

AlgorithmSpec parse_algorithm(const json& j) {
  AlgorithmSpec a;
  if (j.is_string()) {
    a.name = j.get<std::string>();
  } else {
    a.name = j.at("name").get<std::string>();
    a.ratio = j.value("ratio", 0.0);
  }
  if (!is_known_algorithm(a.name)) throw ConfigError("unknown algorithm: " + a.name);
  return a;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

void ExperimentConfig::validate() const {
  env.validate();
  if (algorithms.empty()) throw ConfigError("experiment: no algorithms");
  if (episodes < 1) throw ConfigError("experiment: episodes must be >= 1");
  if (seeds.empty()) throw ConfigError("experiment: no seeds");
  if (eval_seeds.empty()) throw ConfigError("experiment: no eval_seeds");
  if (eval_every < 1) throw ConfigError("experiment: eval_every must be >= 1");
  if (expansions < 0) throw ConfigError("experiment: expansions must be >= 0");
  for (const auto& a : algorithms) {
    if (a.name == "fixed" && std::abs(a.ratio) > env.range) throw ConfigError("experiment: fixed ratio outside range");
  }
}

json ExperimentConfig::to_json() const {
  json algs = json::array();
  for (const auto& a : algorithms) algs.push_back(algorithm_json(a));
  return json{{"environment", env.to_json()},
              {"algorithms", algs},
              {"episodes", episodes},
              {"seeds", seeds},
              {"eval_seeds", eval_seeds},
              {"eval_every", eval_every},
              {"expansions", expansions},
              {"ddpg", ddpg.to_json()},
              {"a2c", a2c.to_json()},
              {"cem", cem.to_json()},
              {"emulator",
               {{"expected_value", emulator.expected_value},
                {"fidelity_sigma", emulator.fidelity_sigma},
                {"seed", emulator.seed}}},
              {"output", output.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    if (j.contains("environment")) {
      c.env = EnvConfig::from_json(j.at("environment"));
    } else if (j.contains("environment_file")) {
      fs::path p = j.at("environment_file").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      c.env = EnvConfig::load(p.string());
    } else {
      throw ConfigError("experiment: needs \"environment\" or \"environment_file\"");
    }
    c.algorithms.clear();
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a));
    c.episodes = j.value("episodes", c.episodes);
    c.seeds = j.value("seeds", c.seeds);
    c.eval_seeds = j.value("eval_seeds", c.eval_seeds);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.expansions = j.value("expansions", c.expansions);
    if (j.contains("ddpg")) c.ddpg = DdpgConfig::from_json(j.at("ddpg"));
    if (j.contains("a2c")) c.a2c = A2cConfig::from_json(j.at("a2c"));
    if (j.contains("cem")) c.cem = CemConfig::from_json(j.at("cem"));
    if (j.contains("emulator")) {
      const auto& e = j.at("emulator");
      c.emulator.expected_value = e.value("expected_value", true);
      c.emulator.fidelity_sigma = e.value("fidelity_sigma", 0.0);
      c.emulator.seed = e.value("seed", std::uint64_t{0});
    }
    c.output = j.value("output", c.output.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("no such config file: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::string ExperimentConfig::hash() const { return io::hex64(io::fnv1a64(to_json().dump())); }

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json checkpoint_header(const std::string& algorithm, const Environment& env,
                       const std::vector<std::uint64_t>& eval_seeds) {
  return json{{"format", "leverbid-checkpoint"},
              {"version", 1},
              {"algorithm", algorithm},
              {"environment", env.config().to_json()},
              {"normalizer", env.normalizer().to_json()},
              {"eval_seeds", eval_seeds}};
}

void write_manifest(const fs::path& dir, const json& j) {
  fs::create_directories(dir);
  io::write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

Policy actor_policy(std::shared_ptr<const nn::Network> net, double range) {
  return [net, range](const Environment& env) {
    const Eigen::MatrixXd out = nn::forward_batch(*net, env.state_matrix());
    std::vector<double> a(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index k = 0; k < out.cols(); ++k) a[static_cast<std::size_t>(k)] = range * out(0, k);
    return a;
  };
}

}  // namespace

void save_ddpg_checkpoint(const fs::path& dir, const std::string& algorithm, const DdpgAgent& agent,
                          const Environment& env, const std::vector<std::uint64_t>& eval_seeds) {
  fs::create_directories(dir);
  nn::save_network(agent.actor, dir / "actor.bin");
  nn::save_network(agent.critic, dir / "critic.bin");
  json j = checkpoint_header(algorithm, env, eval_seeds);
  j["range"] = agent.range();
  j["agent"] = agent.config().to_json();
  j["networks"] = {{"actor", "actor.bin"}, {"critic", "critic.bin"}};
  write_manifest(dir, j);
}

void save_a2c_checkpoint(const fs::path& dir, const std::string& algorithm, const A2cAgent& agent,
                         const Environment& env, const std::vector<std::uint64_t>& eval_seeds) {
  fs::create_directories(dir);
  nn::save_network(agent.policy, dir / "policy.bin");
  nn::save_network(agent.value, dir / "value.bin");
  json j = checkpoint_header(algorithm, env, eval_seeds);
  j["range"] = agent.range();
  j["agent"] = agent.config().to_json();
  j["action_grid"] = agent.action_grid();
  j["networks"] = {{"policy", "policy.bin"}, {"value", "value.bin"}};
  write_manifest(dir, j);
}

void save_cem_checkpoint(const fs::path& dir, const CemAgent& agent, const Environment& env,
                         const std::vector<std::uint64_t>& eval_seeds) {
  fs::create_directories(dir);
  nn::save_network(agent.actor, dir / "actor.bin");
  json j = checkpoint_header("cem", env, eval_seeds);
  j["range"] = agent.range();
  j["agent"] = agent.config().to_json();
  j["networks"] = {{"actor", "actor.bin"}};
  write_manifest(dir, j);
}

void save_fixed_checkpoint(const fs::path& dir, const std::string& algorithm, double ratio, const Environment& env,
                           const std::vector<std::uint64_t>& eval_seeds) {
  json j = checkpoint_header(algorithm, env, eval_seeds);
  j["ratio"] = ratio;
  write_manifest(dir, j);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest = fs::is_directory(dir) ? dir / "manifest.json" : dir;
  const fs::path root = manifest.parent_path();
  if (!fs::is_regular_file(manifest)) throw ConfigError("no checkpoint manifest at " + manifest.string());
  json j;
  try {
    j = json::parse(io::read_file(manifest));
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (j.value("format", "") != "leverbid-checkpoint") throw ConfigError("not a checkpoint: " + manifest.string());
  LoadedCheckpoint c;
  c.algorithm = j.at("algorithm").get<std::string>();
  c.env = EnvConfig::from_json(j.at("environment"));
  c.normalizer = FeatureNormalizer::from_json(j.at("normalizer"));
  c.eval_seeds = j.at("eval_seeds").get<std::vector<std::uint64_t>>();
  if (c.algorithm == "manual" || c.algorithm == "fixed") {
    c.ratio = j.value("ratio", 0.0);
    c.policy = fixed_policy(c.ratio);
  } else if (c.algorithm == "a2c" || c.algorithm == "htlb_a2c") {
    auto net = std::make_shared<const nn::Network>(nn::load_network(root / j.at("networks").at("policy").get<std::string>()));
    const auto grid = j.at("action_grid").get<std::vector<double>>();
    c.policy = [net, grid](const Environment& env) {
      const Eigen::MatrixXd p = nn::forward_batch(*net, env.state_matrix());
      std::vector<double> a(static_cast<std::size_t>(p.cols()));
      for (Eigen::Index k = 0; k < p.cols(); ++k) {
        Eigen::Index best = 0;
        p.col(k).maxCoeff(&best);
        a[static_cast<std::size_t>(k)] = grid.at(static_cast<std::size_t>(best));
      }
      return a;
    };
  } else {
    auto net = std::make_shared<const nn::Network>(nn::load_network(root / j.at("networks").at("actor").get<std::string>()));
    c.policy = actor_policy(net, j.at("range").get<double>());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::uint64_t agent_seed(std::uint64_t run_seed, const std::string& algorithm) {
  // Paired algorithms (htlb_x / x) share initial weights for a given seed.
  const std::string base = algorithm.rfind("htlb_", 0) == 0 ? algorithm.substr(5) : algorithm;
  return derive_seed(run_seed, io::fnv1a64(base));
}

SeedResult train_one(const ExperimentConfig& cfg, const AlgorithmSpec& alg, const Environment& base_env,
                     std::uint64_t seed, const std::optional<fs::path>& seed_dir, bool checkpoints) {
  SeedResult res;
  res.seed = seed;
  Environment env = base_env;
  TrainSettings ts;
  ts.episodes = cfg.episodes;
  ts.seed = seed;
  ts.eval_seeds = cfg.eval_seeds;
  ts.eval_every = cfg.eval_every;
  const std::optional<fs::path> ckpt =
      seed_dir && checkpoints ? std::optional<fs::path>(*seed_dir / "checkpoint") : std::nullopt;
  try {
    if (alg.name == "htlb_ddpg" || alg.name == "ddpg") {
      DdpgConfig dc = cfg.ddpg;
      dc.seed = agent_seed(seed, alg.name);
      DdpgAgent agent(dc, cfg.env.range);
      ts.expansions = alg.name == "htlb_ddpg" ? cfg.expansions : 0;
      AdEmulator::Options eo = cfg.emulator;
      eo.seed = derive_seed(seed, eo.seed);
      const AdEmulator em(env, eo);
      ReplayMemory memory(dc.memory_capacity);
      res.curve = htlb_train(agent, env, em, memory, ts);
      if (ckpt) save_ddpg_checkpoint(*ckpt, alg.name, agent, env, cfg.eval_seeds);
    } else if (alg.name == "htlb_a2c" || alg.name == "a2c") {
      A2cConfig ac = cfg.a2c;
      ac.seed = agent_seed(seed, alg.name);
      A2cAgent agent(ac, cfg.env.range);
      ts.expansions = alg.name == "htlb_a2c" ? cfg.expansions : 0;
      AdEmulator::Options eo = cfg.emulator;
      eo.seed = derive_seed(seed, eo.seed);
      const AdEmulator em(env, eo);
      res.curve = htlb_a2c_train(agent, env, em, ts);
      if (ckpt) save_a2c_checkpoint(*ckpt, alg.name, agent, env, cfg.eval_seeds);
    } else if (alg.name == "cem") {
      CemConfig cc = cfg.cem;
      cc.seed = agent_seed(seed, alg.name);
      CemAgent agent(cfg.ddpg, cc, cfg.env.range);
      res.curve = cem_train(agent, env, ts);
      if (ckpt) save_cem_checkpoint(*ckpt, agent, env, cfg.eval_seeds);
    } else {
      const double ratio = alg.name == "manual" ? 0.0 : alg.ratio;
      res.curve = fixed_curve(ratio, env, ts);
      if (ckpt) save_fixed_checkpoint(*ckpt, alg.name, ratio, env, cfg.eval_seeds);
    }
    res.converged = res.curve.converged(0.1);
  } catch (const nn::DivergenceError& e) {
    res.diverged = true;
    res.error = e.what();
    spdlog::warn("{} seed {} diverged: {}", alg.dir_name(), seed, e.what());
  }
  return res;
}

json seed_sidecar(const ExperimentConfig& cfg, const AlgorithmSpec& alg, const SeedResult& r,
                  const std::string& hash) {
  json j{{"algorithm", alg.dir_name()}, {"seed", r.seed},      {"episodes", cfg.episodes},
         {"eval_seeds", cfg.eval_seeds}, {"config_hash", hash}, {"diverged", r.diverged}};
  if (r.diverged) {
    j["error"] = r.error;
  } else {
    j["converged"] = r.converged;
  }
  return j;
}

}  // namespace

RunResult run_algorithm(const ExperimentConfig& config, const AlgorithmSpec& algorithm, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path out = options.out_dir.value_or(config.output) / algorithm.dir_name();
  const std::string hash = config.hash();
  const Environment base_env(config.env);

  std::vector<std::uint64_t> seeds;
  for (auto s : config.seeds) seeds.push_back(s + options.seed_offset);

  RunResult run;
  run.algorithm = algorithm;
  run.seeds.resize(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        const std::optional<fs::path> seed_dir =
            options.write ? std::optional<fs::path>(out / ("seed_" + std::to_string(seeds[i]))) : std::nullopt;
        spdlog::info("{} seed {}: training", algorithm.dir_name(), seeds[i]);
        run.seeds[i] = train_one(config, algorithm, base_env, seeds[i], seed_dir, options.checkpoints);
        if (seed_dir) {
          write_table(*seed_dir, "curve", run.seeds[i].curve.to_csv(),
                      seed_sidecar(config, algorithm, run.seeds[i], hash));
        }
        spdlog::info("{} seed {}: converged {:.3f}", algorithm.dir_name(), seeds[i], run.seeds[i].converged);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(seeds.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  run.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (options.write) {
    std::vector<LearningCurve> ok;
    json converged = json::object();
    json diverged = json::array();
    for (const auto& s : run.seeds) {
      if (s.diverged) {
        diverged.push_back(s.seed);
      } else {
        ok.push_back(s.curve);
        converged[std::to_string(s.seed)] = s.converged;
      }
    }
    const json meta{{"algorithm", algorithm.dir_name()}, {"config_hash", hash}, {"seeds", seeds},
                    {"episodes", config.episodes}};
    if (!ok.empty()) write_table(out, "curve", mean_curve(ok).to_csv(), meta);
    json manifest{{"algorithm", algorithm.name},
                  {"dir", algorithm.dir_name()},
                  {"config_hash", hash},
                  {"seeds", seeds},
                  {"seed_offset", options.seed_offset},
                  {"eval_seeds", config.eval_seeds},
                  {"episodes", config.episodes},
                  {"wall_time_s", run.wall_time_s},
                  {"converged", converged},
                  {"diverged", diverged},
                  {"experiment", config.to_json()}};
    if (algorithm.name == "fixed") manifest["ratio"] = algorithm.ratio;
    fs::create_directories(out);
    io::write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  }
  return run;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  std::vector<RunResult> runs;
  for (const auto& a : config.algorithms) runs.push_back(run_algorithm(config, a, options));
  return runs;
}

LearningCurve mean_curve(const std::vector<LearningCurve>& curves) {
  if (curves.empty()) throw std::invalid_argument("mean_curve: no curves");
  const std::size_t n = curves.front().points.size();
  for (const auto& c : curves) {
    if (c.points.size() != n) throw std::invalid_argument("mean_curve: curves differ in length");
  }
  LearningCurve out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v;
    for (const auto& c : curves) v.push_back(c.points[i].mean_return);
    out.points.push_back({curves.front().points[i].episode, mean_of(v), stddev_of(v)});
  }
  return out;
}

std::optional<int> first_reach_episode(const LearningCurve& curve, double threshold, int window) {
  if (window < 1) throw std::invalid_argument("first_reach_episode: window must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    sum += curve.points[i].mean_return;
    if (i >= static_cast<std::size_t>(window)) sum -= curve.points[i - window].mean_return;
    const auto len = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    if (len == static_cast<std::size_t>(window) && sum / static_cast<double>(len) >= threshold) {
      return curve.points[i].episode;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Comparison

const SummaryRow* SummaryTable::find(const std::string& algorithm) const {
  for (const auto& r : rows) {
    if (r.algorithm == algorithm) return &r;
  }
  return nullptr;
}

std::string SummaryTable::to_csv() const {
  io::CsvWriter csv({"algorithm", "mean", "std", "seeds", "diverged"});
  for (const auto& r : rows) {
    csv.row({r.algorithm, io::format_double(r.mean), io::format_double(r.stddev), std::to_string(r.per_seed.size()),
             std::to_string(r.diverged.size())});
  }
  return csv.str();
}

json SummaryTable::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json per = json::object();
    for (const auto& [s, v] : r.per_seed) per[std::to_string(s)] = v;
    rows_j.push_back({{"algorithm", r.algorithm}, {"mean", r.mean}, {"std", r.stddev}, {"per_seed", per},
                      {"diverged", r.diverged}});
  }
  return json{{"rows", rows_j}};
}

std::string SummaryTable::to_text() const {
  std::ostringstream ss;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %14s %14s %6s\n", "algorithm", "mean", "std", "seeds");
  ss << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %14.3f %14.3f %6zu\n", r.algorithm.c_str(), r.mean, r.stddev,
                  r.per_seed.size());
    ss << buf;
  }
  return ss.str();
}

namespace {

void finish_row(SummaryRow& row) {
  std::vector<double> v;
  for (const auto& [s, x] : row.per_seed) v.push_back(x);
  row.mean = mean_of(v);
  row.stddev = stddev_of(v, true);
}

void sort_rows(SummaryTable& t) {
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const SummaryRow& a, const SummaryRow& b) { return a.mean > b.mean; });
}

}  // namespace

SummaryTable summarize(const std::vector<RunResult>& runs) {
  SummaryTable t;
  for (const auto& run : runs) {
    SummaryRow row;
    row.algorithm = run.algorithm.dir_name();
    for (const auto& s : run.seeds) {
      if (s.diverged) {
        row.diverged.push_back(s.seed);
      } else {
        row.per_seed[s.seed] = s.converged;
      }
    }
    finish_row(row);
    t.rows.push_back(std::move(row));
  }
  sort_rows(t);
  return t;
}

SummaryTable summarize_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  SummaryTable t;
  for (const auto& d : subdirs) {
    const json m = json::parse(io::read_file(d / "manifest.json"));
    if (!m.contains("dir")) continue;
    SummaryRow row;
    row.algorithm = m.at("dir").get<std::string>();
    for (const auto& s : m.at("diverged")) row.diverged.push_back(s.get<std::uint64_t>());
    for (const auto& s : m.at("seeds")) {
      const auto seed = s.get<std::uint64_t>();
      const fs::path curve = d / ("seed_" + std::to_string(seed)) / "curve.csv";
      if (std::find(row.diverged.begin(), row.diverged.end(), seed) != row.diverged.end()) continue;
      if (!fs::exists(curve)) throw std::runtime_error("missing " + curve.string());
      row.per_seed[seed] = LearningCurve::from_csv(io::read_file(curve)).converged(0.1);
    }
    finish_row(row);
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::runtime_error("no runs found in " + dir.string());
  sort_rows(t);
  return t;
}

int OrderingReport::matching() const { return static_cast<int>(std::count(holds.begin(), holds.end(), true)); }

std::string OrderingReport::to_text() const {
  std::ostringstream ss;
  for (std::size_t i = 0; i < expected.size(); ++i) ss << (i ? " > " : "") << expected[i];
  ss << "\n";
  for (std::size_t i = 0; i < seeds.size(); ++i) ss << "seed " << seeds[i] << ": " << (holds[i] ? "holds" : "violated") << "\n";
  ss << "holds on " << matching() << "/" << seeds.size() << " seeds\n";
  return ss.str();
}

OrderingReport ordering_report(const SummaryTable& table, const std::vector<std::string>& expected) {
  OrderingReport r;
  r.expected = expected;
  std::vector<const SummaryRow*> rows;
  for (const auto& name : expected) {
    const SummaryRow* row = table.find(name);
    if (!row) throw std::invalid_argument("ordering_report: no results for " + name);
    rows.push_back(row);
  }
  for (const auto& [seed, v] : rows.front()->per_seed) {
    bool holds = true;
    for (std::size_t i = 0; i + 1 < rows.size() && holds; ++i) {
      const auto a = rows[i]->per_seed.find(seed), b = rows[i + 1]->per_seed.find(seed);
      holds = a != rows[i]->per_seed.end() && b != rows[i + 1]->per_seed.end() && a->second > b->second;
    }
    r.seeds.push_back(seed);
    r.holds.push_back(holds);
  }
  return r;
}

SummaryTable compare_dir(const fs::path& dir, const std::vector<std::string>& expected_order) {
  SummaryTable t = summarize_dir(dir);
  write_table(dir, "summary", t.to_csv(), t.to_json());
  std::vector<std::string> present;
  for (const auto& name : expected_order) {
    if (t.find(name)) present.push_back(name);
  }
  if (present.size() >= 2) io::write_file_atomic(dir / "ordering.txt", ordering_report(t, present).to_text());
  return t;
}

// ---------------------------------------------------------------------------
// Traffic sweep and per-product report

std::vector<TrafficRow> traffic_sweep(const Environment& env, const Policy& learned,
                                      const std::vector<std::uint64_t>& seeds) {
  Environment e = env;
  const double range = env.config().range;
  const std::vector<std::pair<std::string, Policy>> policies{{"min", fixed_policy(-range)},
                                                             {"manual", fixed_policy(0.0)},
                                                             {"max", fixed_policy(range)},
                                                             {"learned", learned}};
  std::vector<TrafficRow> rows;
  for (const auto& [label, policy] : policies) {
    TrafficRow row{label, 0.0, 0.0};
    for (auto s : seeds) {
      const EpisodeOutcome o = run_episode(e, s, policy);
      row.business_increment += o.business_increment / static_cast<double>(seeds.size());
      row.organic_increment += o.organic_increment / static_cast<double>(seeds.size());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string traffic_csv(const std::vector<TrafficRow>& rows) {
  io::CsvWriter csv({"policy", "business_increment", "organic_increment"});
  for (const auto& r : rows) {
    csv.row({r.label, io::format_double(r.business_increment), io::format_double(r.organic_increment)});
  }
  return csv.str();
}

int PerProductReport::positive() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const ProductRow& r) { return r.relative_increment > 0.0; }));
}

int PerProductReport::above(double threshold) const {
  return static_cast<int>(
      std::count_if(rows.begin(), rows.end(), [&](const ProductRow& r) { return r.relative_increment > threshold; }));
}

std::string PerProductReport::to_csv() const {
  io::CsvWriter csv({"product_id", "organic_policy", "organic_manual", "relative_increment"});
  for (const auto& r : rows) {
    csv.row({std::to_string(r.product_id), io::format_double(r.organic_policy), io::format_double(r.organic_manual),
             io::format_double(r.relative_increment)});
  }
  return csv.str();
}

json PerProductReport::summary_json() const {
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  return json{{"products", rows.size()},
              {"positive", positive()},
              {"positive_fraction", positive() / n},
              {"above_100_percent", above(1.0)}};
}

PerProductReport per_product_report(const Environment& env, const Policy& policy,
                                    const std::vector<std::uint64_t>& seeds) {
  Environment e = env;
  const std::size_t K = env.num_targets();
  std::vector<double> pol(K, 0.0), man(K, 0.0);
  for (auto s : seeds) {
    const EpisodeOutcome o = run_episode(e, s, policy);
    for (std::size_t k = 0; k < K; ++k) {
      pol[k] += o.organic_policy[k];
      man[k] += o.organic_manual[k];
    }
  }
  PerProductReport r;
  for (std::size_t k = 0; k < K; ++k) {
    const double n = static_cast<double>(std::max<std::size_t>(seeds.size(), 1));
    ProductRow row{env.target_ids()[k], pol[k] / n, man[k] / n, 0.0};
    row.relative_increment = (row.organic_policy - row.organic_manual) / std::max(row.organic_manual, 1.0);
    r.rows.push_back(row);
  }
  return r;
}

void write_table(const fs::path& dir, const std::string& stem, const std::string& csv, const json& meta) {
  fs::create_directories(dir);
  io::write_file_atomic(dir / (stem + ".csv"), csv);
  io::write_file_atomic(dir / (stem + ".json"), meta.dump(2) + "\n");
}

}  // namespace leverbid
