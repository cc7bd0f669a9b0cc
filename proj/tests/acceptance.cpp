// Acceptance checks A1-A12. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "leverbid/dynamics.hpp"
#include "leverbid/exposure_fit.hpp"
#include "leverbid/harness.hpp"
#include "leverbid/io.hpp"
#include "leverbid/nn.hpp"

using namespace leverbid;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

const Product& product_by_id(const EnvConfig& cfg, int id) {
  for (const auto& p : cfg.products) {
    if (p.id == id) return p;
  }
  throw std::out_of_range("no product " + std::to_string(id));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const RunResult& find_run(const std::vector<RunResult>& runs, const std::string& name) {
  for (const auto& r : runs) {
    if (r.algorithm.name == name) return r;
  }
  throw std::out_of_range("algorithm not in experiment: " + name);
}

LearningCurve seed_mean_curve(const RunResult& r) {
  std::vector<LearningCurve> curves;
  for (const auto& s : r.seeds) {
    if (!s.diverged) curves.push_back(s.curve);
  }
  return mean_curve(curves);
}

// ---------------------------------------------------------------------------

Verdict check_a1(const SummaryTable& table, double wall_s) {
  const std::vector<std::string> order{"htlb_ddpg", "ddpg", "a2c", "cem", "manual"};
  const OrderingReport rep = ordering_report(table, order);
  const double h = table.find("htlb_ddpg")->mean, d = table.find("ddpg")->mean;
  const bool margin = h >= d + 0.05 * std::abs(d);
  std::ostringstream s;
  s << "ordering in " << rep.matching() << "/" << rep.seeds.size() << " seeds; ";
  for (const auto& name : order) s << name << "=" << fmt(table.find(name)->mean, 6) << " ";
  s << "; htlb/ddpg margin " << fmt(d != 0.0 ? (h - d) / std::abs(d) * 100.0 : 0.0) << "%; runtime " << fmt(wall_s)
    << " s";
  return {rep.matching() >= 4 && margin && wall_s <= 900.0, s.str()};
}

Verdict faster_by(const RunResult& expanded, const RunResult& base, const std::string& label) {
  const LearningCurve ce = seed_mean_curve(expanded), cb = seed_mean_curve(base);
  const double final_base = cb.converged();
  const double threshold = 0.8 * final_base;
  const auto eb = first_reach_episode(cb, threshold);
  const auto ee = first_reach_episode(ce, threshold);
  std::ostringstream s;
  s << label << ": threshold " << fmt(threshold) << ", base reaches at " << (eb ? std::to_string(*eb) : "never")
    << ", expanded at " << (ee ? std::to_string(*ee) : "never");
  const bool ok = eb && ee && static_cast<double>(*ee) <= 0.7 * static_cast<double>(*eb);
  return {ok, s.str()};
}

Verdict check_a2(const std::vector<RunResult>& runs) {
  const Verdict d = faster_by(find_run(runs, "htlb_ddpg"), find_run(runs, "ddpg"), "DDPG");
  const Verdict a = faster_by(find_run(runs, "htlb_a2c"), find_run(runs, "a2c"), "A2C");
  return {d.pass && a.pass, d.detail + "; " + a.detail};
}

Verdict check_a3(const ExperimentConfig& cfg, const fs::path& out) {
  int ok = 0;
  std::ostringstream s;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path ck = out / "htlb_ddpg" / ("seed_" + std::to_string(seed)) / "checkpoint";
    const LoadedCheckpoint loaded = load_checkpoint(ck);
    const Environment env = loaded.make_environment();
    const auto rows = traffic_sweep(env, loaded.policy, cfg.eval_seeds);
    const TrafficRow &mn = rows[0], &mx = rows[2], &learned = rows[3];
    const bool holds = mx.business_increment > learned.business_increment &&
                       mx.organic_increment < learned.organic_increment && mn.organic_increment < 0.0;
    ok += holds ? 1 : 0;
    s << "seed " << seed << ": max(b=" << fmt(mx.business_increment) << ",o=" << fmt(mx.organic_increment)
      << ") learned(b=" << fmt(learned.business_increment) << ",o=" << fmt(learned.organic_increment)
      << ") min(o=" << fmt(mn.organic_increment) << ")" << (holds ? "" : " x") << "; ";
  }
  return {ok >= 4, std::to_string(ok) + "/" + std::to_string(cfg.seeds.size()) + " seeds; " + s.str()};
}

// Plain DDPG written against the agent primitives, compared with htlb_train(M=0).
Verdict check_a4(const ExperimentConfig& cfg) {
  TrainSettings settings;
  settings.episodes = static_cast<int>(cfg.ddpg.batch_size / std::max(cfg.env.horizon, 1)) + 12;
  settings.seed = 3;
  settings.eval_seeds = {cfg.eval_seeds.front()};
  settings.expansions = 0;
  DdpgConfig dc = cfg.ddpg;
  dc.seed = 77;
  const double range = cfg.env.range;

  std::vector<Eigen::VectorXd> reference;
  {
    Environment env(cfg.env);
    DdpgAgent agent(dc, range);
    ReplayMemory mem(dc.memory_capacity);
    std::mt19937_64 batch_rng(derive_seed(settings.seed, 1));
    std::mt19937_64 noise_rng(derive_seed(settings.seed, 2));
    OUProcess ou(env.num_targets(), dc.ou_theta, dc.ou_sigma * range);
    for (int e = 0; e < settings.episodes; ++e) {
      env.reset(train_episode_seed(settings.seed, e));
      ou.reset();
      const double mult = noise_multiplier(e, settings.episodes, dc.noise_final, dc.noise_decay_fraction);
      while (!env.done()) {
        Transition t;
        t.state = env.state();
        t.features = env.state_matrix();
        std::vector<double> a = agent.act(t.features);
        const auto& n = ou.sample(noise_rng);
        for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::clamp(a[k] + mult * n[k], -range, range);
        const StepResult r = env.step(a);
        t.actions = r.alphas;
        t.rewards = r.weighted;
        t.next_state = env.state();
        t.next_features = env.state_matrix();
        t.done = r.done;
        mem.push(std::move(t));
        if (mem.size() >= dc.batch_size) {
          for (int u = 0; u < dc.updates_per_step; ++u) {
            agent.update(mem.sample(dc.batch_size, batch_rng));
            reference.push_back(agent.actor.parameters());
            reference.push_back(agent.critic.parameters());
          }
        }
      }
    }
  }

  Environment env(cfg.env);
  DdpgAgent agent(dc, range);
  const AdEmulator em(env, cfg.emulator);
  ReplayMemory mem(dc.memory_capacity);
  std::vector<Eigen::VectorXd> trace;
  DdpgHooks hooks;
  hooks.on_update = [&](const DdpgAgent& a, const UpdateStats&) {
    trace.push_back(a.actor.parameters());
    trace.push_back(a.critic.parameters());
  };
  htlb_train(agent, env, em, mem, settings, hooks);
  std::size_t mismatches = trace.size() == reference.size() ? 0 : 1;
  for (std::size_t i = 0; i < std::min(trace.size(), reference.size()); ++i) {
    if (trace[i] != reference[i]) ++mismatches;
  }
  return {mismatches == 0 && !trace.empty(), std::to_string(trace.size() / 2) + " updates compared, " +
                                                 std::to_string(mismatches) + " mismatches"};
}

Verdict check_a5(const ExperimentConfig& cfg) {
  Environment env(cfg.env);
  DdpgConfig dc = cfg.ddpg;
  dc.hidden = {8};
  DdpgAgent agent(dc, cfg.env.range);
  const AdEmulator em(env, cfg.emulator);
  ReplayMemory mem(dc.memory_capacity);
  TrainSettings s;
  s.episodes = 160;
  s.seed = 1;
  s.eval_seeds = {cfg.eval_seeds.front()};
  s.eval_every = 1000;
  s.expansions = 10;
  std::size_t steps = 0, bad = 0;
  DdpgHooks hooks;
  hooks.on_step = [&](const Transition&) {
    if (mem.size() != std::min<std::size_t>(dc.memory_capacity, 11 * steps)) ++bad;
    ++steps;
  };
  htlb_train(agent, env, em, mem, s, hooks);
  if (mem.size() != std::min<std::size_t>(dc.memory_capacity, 11 * steps)) ++bad;
  return {bad == 0 && 11 * steps > dc.memory_capacity,
          std::to_string(steps) + " real steps, final size " + std::to_string(mem.size()) + ", " +
              std::to_string(bad) + " mismatches"};
}

Verdict check_a6(const ExperimentConfig& cfg) {
  double worst = 0.0;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const bool actor = i % 2 == 0;
    const int in = actor ? kStateDim : kStateDim + 1;
    std::vector<int> sizes{in};
    for (int h : cfg.ddpg.hidden) sizes.push_back(h);
    sizes.push_back(1);
    const nn::Network net = nn::mlp_new(sizes, nn::Activation::relu,
                                        actor ? nn::Activation::tanh : nn::Activation::linear, 1000 + i);
    Eigen::VectorXd x(in);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = n(rng);
    worst = std::max(worst, nn::finite_diff_check(net, x, 1e-6));
  }
  double dpg = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    DdpgConfig dc = cfg.ddpg;
    dc.seed = seed;
    const DdpgAgent agent(dc, cfg.env.range);
    Eigen::MatrixXd f(kStateDim, 8);
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
      for (Eigen::Index r = 0; r < f.rows(); ++r) f(r, c) = n(rng);
    }
    dpg = std::max(dpg, dpg_gradient_check(agent, f));
  }
  return {worst < 1e-4 && dpg < 1e-4, "network check worst " + fmt(worst) + ", DPG check worst " + fmt(dpg)};
}

Verdict check_a7(const ExperimentConfig& cfg) {
  std::ostringstream s;
  bool ok = true;
  auto roots = [](const FixedPointReport& r) {
    std::ostringstream o;
    o << "{";
    for (std::size_t i = 0; i < r.points.size(); ++i) o << (i ? ", " : "") << fmt(r.points[i].p, 6);
    o << "}";
    return o.str();
  };
  auto report_for = [&](int id) {
    const Product& p = product_by_id(cfg.env, id);
    return fixed_points(p.traffic_win, p.exposure_effect, p.traffic_win.saturation + 1.0);
  };

  const Product& cold = product_by_id(cfg.env, 0);
  const auto standard = report_for(0);
  const bool three = standard.points.size() == 3 && standard.points[0].p == 0.0 &&
                     standard.points[0].stability == Stability::stable &&
                     standard.points[1].stability == Stability::unstable &&
                     standard.points[2].stability == Stability::stable;
  ok = ok && three;
  s << "standard " << roots(standard);

  const auto high = report_for(4);
  const bool single_b = high.points.size() == 1 && high.points[0].p > 0.0 && high.points[0].stability == Stability::stable;
  ok = ok && single_b;
  s << "; high quality " << roots(high);

  const auto low = report_for(2);
  const bool zero_only = low.points.size() == 1 && low.points[0].p == 0.0;
  ok = ok && zero_only;
  s << "; low quality " << roots(low);

  if (three) {
    const double A = standard.points[1].p, B = standard.points[2].p;
    double worst_above = 0.0, worst_below = 0.0;
    for (double p0 : {A * 1.01, 0.5 * (A + B), 2.0 * B}) {
      const auto chain = simulate_chain(cold.traffic_win, cold.exposure_effect, p0, 500);
      worst_above = std::max(worst_above, std::abs(chain.back().p - B));
    }
    for (double p0 : {A * 0.99, 0.5 * A, 1.0}) {
      const auto chain = simulate_chain(cold.traffic_win, cold.exposure_effect, p0, 500);
      worst_below = std::max(worst_below, std::abs(chain.back().p));
    }
    ok = ok && worst_above < 1e-6 && worst_below == 0.0;
    s << "; chain |p-B| " << fmt(worst_above) << " above A, |p| " << fmt(worst_below) << " below A";
  }

  const Product& lowq = product_by_id(cfg.env, 2);
  const ExposureEffectFn shifted = shifted_exposure(lowq.exposure_effect, 300.0, lowq.business_quality, lowq.shift);
  const auto sh = fixed_points(lowq.traffic_win, shifted, lowq.traffic_win.saturation + 1.0);
  const bool interior = sh.stable_point && *sh.stable_point > 0.0 && *sh.stable_point < lowq.traffic_win.saturation;
  ok = ok && interior;
  s << "; shifted low quality " << roots(sh);
  return {ok, s.str()};
}

EnvConfig noise_free(const EnvConfig& c) {
  EnvConfig out = c;
  out.noise = NoiseConfig::none();
  return out;
}

Verdict check_a8(const ExperimentConfig& cfg) {
  Environment env(noise_free(cfg.env));
  const AdEmulator em(env);
  const std::size_t K = env.num_targets();
  const double range = cfg.env.range;
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-range, range);
  int states = 0, compared = 0, mismatches = 0;
  for (std::uint64_t seed = 1; states < 10; ++seed) {
    env.reset(seed);
    for (int t = 0; t < 3 && states < 10 && !env.done(); ++t, ++states) {
      for (int g = 0; g < 21; ++g) {
        for (int variant = 0; variant < 2; ++variant) {
          std::vector<double> a(K);
          for (std::size_t k = 0; k < K; ++k) {
            const int idx = variant == 0 ? g : (g + 7 * static_cast<int>(k)) % 21;
            a[k] = -range + 2.0 * range * idx / 20.0;
          }
          Environment probe = env;
          probe.step(a);
          ++compared;
          if (!(em.simulate_o(env.state(), a) == probe.state().o)) ++mismatches;
        }
      }
      std::vector<double> a(K);
      for (auto& v : a) v = u(rng);
      env.step(a);
    }
  }
  return {mismatches == 0, std::to_string(compared) + " (state, action) pairs, " + std::to_string(mismatches) +
                               " mismatches"};
}

Verdict check_a9(const ExperimentConfig& cfg) {
  int same_next = 0, differ_after = 0, trials = 0;
  for (const EnvConfig& c : {noise_free(cfg.env), cfg.env}) {
    Environment env(c);
    const std::size_t K = env.num_targets();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      env.reset(seed);
      env.step(std::vector<double>(K, 0.2));
      Environment a = env, b = env;
      a.step(std::vector<double>(K, -c.range));
      b.step(std::vector<double>(K, c.range));
      ++trials;
      if (a.state().x == b.state().x) ++same_next;
      const std::vector<double> hold(K, 0.0);
      a.step(hold);
      b.step(hold);
      if (!(a.state().x == b.state().x)) ++differ_after;
    }
  }
  return {same_next == trials && differ_after == trials,
          "x_{t+1} equal in " + std::to_string(same_next) + "/" + std::to_string(trials) + ", x_{t+2} differs in " +
              std::to_string(differ_after) + "/" + std::to_string(trials)};
}

Verdict check_a10(const ExperimentConfig& cfg, int episodes) {
  std::ostringstream s;
  // Fit accuracy: 200 logged noise-free samples per target against its parametric curve.
  const EnvConfig exact = noise_free(cfg.env);
  const SampleLog log = collect_exposure_samples(exact, 60, 1011);
  std::mt19937_64 rng(1010);
  double rmse = 0.0;
  for (const auto& [id, all] : log) {
    std::vector<ExposureSample> sub = all;
    std::shuffle(sub.begin(), sub.end(), rng);
    sub.resize(std::min<std::size_t>(sub.size(), 200));
    const auto fit = fit_exposure(sub);
    const auto& U = product_by_id(cfg.env, id).exposure_effect;
    double se = 0.0;
    const int grid = 500;
    for (int i = 0; i < grid; ++i) {
      const double p = fit.min_exposure() + (fit.max_exposure() - fit.min_exposure()) * (i + 0.5) / grid;
      se += std::pow(eval_fit(fit, p) - U(p), 2);
    }
    rmse = std::max(rmse, std::sqrt(se / grid));
  }
  s << "worst per-product fit RMSE " << fmt(rmse);

  // Replay environment against the noise-free parametric environment.
  const auto fits = fit_all(log, BandwidthRule::cross_validated);
  Environment truth(exact);
  Environment replay(replay_config_from_fit(fits, exact), truth.normalizer());
  const std::size_t K = truth.num_targets();
  double worst = 0.0;
  std::uniform_real_distribution<double> ua(-cfg.env.range, cfg.env.range);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int pol = 0; pol < 4; ++pol) {
      truth.reset(seed);
      replay.reset(seed);
      while (!truth.done()) {
        std::vector<double> a(K);
        for (auto& v : a) v = pol < 3 ? (pol - 1) * 0.5 * cfg.env.range : ua(rng);
        truth.step(a);
        replay.step(a);
        for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::abs(truth.scores()[k] - replay.scores()[k]));
      }
    }
  }
  s << "; replay max |dz| " << fmt(worst);

  // HTLB-DDPG trained on the replay environment, scored on the real one.
  Environment real(cfg.env);
  Environment replay_noisy(replay_config_from_fit(fits, cfg.env), real.normalizer());
  DdpgConfig dc = cfg.ddpg;
  dc.seed = derive_seed(0, io::fnv1a64("ddpg"));
  DdpgAgent agent(dc, cfg.env.range);
  TrainSettings ts;
  ts.episodes = episodes;
  ts.seed = 0;
  ts.eval_seeds = cfg.eval_seeds;
  ts.eval_every = 10;
  ts.expansions = cfg.expansions;
  const AdEmulator em(replay_noisy, cfg.emulator);
  ReplayMemory mem(dc.memory_capacity);
  htlb_train(agent, replay_noisy, em, mem, ts);
  const double learned = evaluate_policy(real, cfg.eval_seeds, agent.greedy_policy()).mean;
  const double manual = evaluate_policy(real, cfg.eval_seeds, fixed_policy(0.0)).mean;
  s << "; replay-trained agent " << fmt(learned) << " vs manual " << fmt(manual) << " on the real environment";
  return {rmse < 0.02 && worst < 0.02 && learned > manual, s.str()};
}

Verdict check_a11() {
  std::mt19937_64 rng(1111);
  std::uniform_int_distribution<int> len(1, 12);
  std::normal_distribution<double> n(0.0, 1000.0);
  std::bernoulli_distribution zero(0.1);
  int mismatches = 0;
  double generic = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(static_cast<std::size_t>(len(rng)));
    int pos = 0, neg = 0;
    for (auto& v : r) {
      v = zero(rng) ? 0.0 : n(rng);
      pos += v > 0.0;
      neg += v < 0.0;
    }
    if (compute_reward(r, RewardWeighting::inverse_abs) != static_cast<double>(pos - neg)) ++mismatches;
    generic = std::max(generic, std::abs(compute_reward(r, inverse_abs_etas(r)) - (pos - neg)));
  }
  return {mismatches == 0, "1000 vectors, " + std::to_string(mismatches) + " mismatches (explicit 1/|r| weights: max rounding " +
                               fmt(generic) + ")"};
}

Verdict check_a12(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  ExperimentConfig small = cfg;
  small.episodes = 20;
  small.seeds = {0, 1};
  int files = 0, differ = 0;
  std::vector<fs::path> dirs{out / "rerun_a", out / "rerun_b"};
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    fs::remove_all(dirs[i]);
    RunOptions o;
    o.out_dir = dirs[i];
    o.jobs = i == 0 ? 1 : jobs;
    o.checkpoints = false;
    run_experiment(small, o);
  }
  for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
    if (entry.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(entry.path(), dirs[0]);
    ++files;
    if (!fs::exists(dirs[1] / rel) || slurp(entry.path()) != slurp(dirs[1] / rel)) ++differ;
  }
  return {files > 0 && differ == 0, std::to_string(files) + " metric CSVs compared, " + std::to_string(differ) +
                                        " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leverbid acceptance checks"};
  std::string config = std::string(LEVERBID_CONFIG_DIR) + "/reference.json";
  fs::path out = "acceptance_runs";
  int jobs = 1;
  app.add_option("--config", config, "experiment config");
  app.add_option("--out", out, "output directory");
  app.add_option("--jobs", jobs, "worker threads");
  std::vector<std::string> only;
  app.add_option("--only", only, "run only these criteria (e.g. A4,A7)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const ExperimentConfig cfg = ExperimentConfig::load(config);
  const fs::path ref_out = out / "reference";
  fs::create_directories(out);

  std::vector<std::pair<std::string, std::function<Verdict()>>> checks;
  std::vector<RunResult> runs;
  double wall = 0.0;
  auto ensure_reference = [&]() {
    if (!runs.empty()) return;
    RunOptions o;
    o.out_dir = ref_out;
    o.jobs = jobs;
    const auto t0 = std::chrono::steady_clock::now();
    runs = run_experiment(cfg, o);
    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  checks.emplace_back("A1", [&] {
    ensure_reference();
    return check_a1(summarize(runs), wall);
  });
  checks.emplace_back("A2", [&] {
    ensure_reference();
    return check_a2(runs);
  });
  checks.emplace_back("A3", [&] {
    ensure_reference();
    return check_a3(cfg, ref_out);
  });
  checks.emplace_back("A4", [&] { return check_a4(cfg); });
  checks.emplace_back("A5", [&] { return check_a5(cfg); });
  checks.emplace_back("A6", [&] { return check_a6(cfg); });
  checks.emplace_back("A7", [&] { return check_a7(cfg); });
  checks.emplace_back("A8", [&] { return check_a8(cfg); });
  checks.emplace_back("A9", [&] { return check_a9(cfg); });
  checks.emplace_back("A10", [&] { return check_a10(cfg, cfg.episodes); });
  checks.emplace_back("A11", [&] { return check_a11(); });
  checks.emplace_back("A12", [&] { return check_a12(cfg, out, jobs); });

  if (!only.empty()) {
    std::erase_if(checks, [&](const auto& c) { return std::find(only.begin(), only.end(), c.first) == only.end(); });
  }
  int failures = 0;
  for (auto& [id, fn] : checks) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%-4s %s  %s\n", id.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failures, checks.size());
  return failures == 0 ? 0 : 1;
}
