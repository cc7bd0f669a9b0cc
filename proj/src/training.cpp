#include "leverbid/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "leverbid/evaluation.hpp"
#include "leverbid/io.hpp"

namespace leverbid {

double LearningCurve::converged(double fraction) const {
  if (points.empty()) throw std::logic_error("LearningCurve::converged: empty curve");
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * points.size() - 1e-9)));
  double s = 0.0;
  for (std::size_t i = points.size() - n; i < points.size(); ++i) s += points[i].mean_return;
  return s / static_cast<double>(n);
}

std::vector<double> LearningCurve::values() const {
  std::vector<double> v;
  v.reserve(points.size());
  for (const auto& p : points) v.push_back(p.mean_return);
  return v;
}

std::string LearningCurve::to_csv() const {
  io::CsvWriter csv({"episode", "mean_return", "std_return"});
  for (const auto& p : points) {
    csv.row({std::to_string(p.episode), io::format_double(p.mean_return), io::format_double(p.std_return)});
  }
  return csv.str();
}

LearningCurve LearningCurve::from_csv(const std::string& text) {
  const io::CsvTable t = io::parse_csv(text);
  const auto ep = t.column("episode"), mean = t.column("mean_return"), sd = t.column("std_return");
  LearningCurve c;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    c.points.push_back({std::stoi(t.rows[i][ep]), std::stod(t.rows[i][mean]), std::stod(t.rows[i][sd])});
  }
  return c;
}

std::uint64_t train_episode_seed(std::uint64_t run_seed, int episode) {
  return derive_seed(derive_seed(run_seed, 0x7a1), static_cast<std::uint64_t>(episode));
}

double noise_multiplier(int episode, int episodes, double final_mult, double decay_fraction) {
  const double span = std::max(1.0, decay_fraction * episodes);
  const double frac = std::min(1.0, episode / span);
  return 1.0 - (1.0 - final_mult) * frac;
}

namespace {

void validate(const TrainSettings& s) {
  if (s.episodes < 1) throw std::invalid_argument("train: episodes must be >= 1");
  if (s.expansions < 0) throw std::invalid_argument("train: expansions must be >= 0");
  if (s.eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
  if (s.eval_seeds.empty()) throw std::invalid_argument("train: need at least one evaluation seed");
}

// Runs the evaluation schedule after episode e.
class Evaluator {
 public:
  Evaluator(const Environment& env, const TrainSettings& s) : env_(env), s_(s) {}

  void after_episode(int e, const Policy& policy, LearningCurve& curve) {
    if (e % s_.eval_every == 0 || e == s_.episodes - 1 || curve.points.empty()) {
      const EvalSummary r = evaluate_policy(env_, s_.eval_seeds, policy);
      last_ = {e, r.mean, r.stddev};
    }
    last_.episode = e;
    curve.points.push_back(last_);
    if (s_.on_episode) s_.on_episode(e, last_);
  }

 private:
  Environment env_;
  const TrainSettings& s_;
  CurvePoint last_;
};

}  // namespace

LearningCurve htlb_train(DdpgAgent& agent, Environment& env, const AdEmulator& emulator, ReplayMemory& memory,
                         const TrainSettings& settings, const DdpgHooks& hooks) {
  validate(settings);
  const auto& cfg = agent.config();
  const double range = agent.range();
  const std::size_t K = env.num_targets();
  const int M = settings.expansions;

  std::mt19937_64 batch_rng(derive_seed(settings.seed, 1));
  std::mt19937_64 noise_rng(derive_seed(settings.seed, 2));
  std::mt19937_64 expand_rng(derive_seed(settings.seed, 3));
  OUProcess ou(K, cfg.ou_theta, cfg.ou_sigma * range);
  std::vector<OUProcess> expansion_noise(static_cast<std::size_t>(M),
                                         OUProcess(K, cfg.ou_theta, cfg.expansion_sigma * range));

  Evaluator evaluator(env, settings);
  LearningCurve curve;
  for (int e = 0; e < settings.episodes; ++e) {
    env.reset(train_episode_seed(settings.seed, e));
    ou.reset();
    for (auto& n : expansion_noise) n.reset();
    const double mult = noise_multiplier(e, settings.episodes, cfg.noise_final, cfg.noise_decay_fraction);

    while (!env.done()) {
      Transition real;
      real.state = env.state();
      real.features = env.state_matrix();
      const std::vector<double> greedy = agent.act(real.features);
      const auto& noise = ou.sample(noise_rng);
      std::vector<double> action(K);
      for (std::size_t k = 0; k < K; ++k) action[k] = std::clamp(greedy[k] + mult * noise[k], -range, range);

      const StepResult r = env.step(action);
      real.actions = r.alphas;
      real.rewards = r.weighted;
      real.next_state = env.state();
      real.next_features = env.state_matrix();
      real.done = r.done;
      if (hooks.on_step) hooks.on_step(real);

      std::vector<Transition> hybrids;
      if (M > 0) {
        hybrids = expand_transition(emulator, real, M, [&](int m) {
          const auto& n = expansion_noise[static_cast<std::size_t>(m)].sample(expand_rng);
          std::vector<double> a(K);
          for (std::size_t k = 0; k < K; ++k) a[k] = std::clamp(action[k] + n[k], -range, range);
          return a;
        });
      }
      memory.push(std::move(real));
      for (auto& h : hybrids) memory.push(std::move(h));

      if (memory.size() >= cfg.batch_size) {
        for (int u = 0; u < cfg.updates_per_step; ++u) {
          const UpdateStats st = agent.update(memory.sample(cfg.batch_size, batch_rng));
          if (hooks.on_update) hooks.on_update(agent, st);
        }
      }
    }
    evaluator.after_episode(e, agent.greedy_policy(), curve);
  }
  return curve;
}

LearningCurve htlb_train(DdpgAgent& agent, Environment& env, const TrainSettings& settings) {
  const AdEmulator emulator(env);
  ReplayMemory memory(agent.config().memory_capacity);
  return htlb_train(agent, env, emulator, memory, settings);
}

LearningCurve htlb_a2c_train(A2cAgent& agent, Environment& env, const AdEmulator& emulator,
                             const TrainSettings& settings) {
  validate(settings);
  const std::size_t K = env.num_targets();
  const int M = settings.expansions;
  std::mt19937_64 act_rng(derive_seed(settings.seed, 2));
  std::mt19937_64 expand_rng(derive_seed(settings.seed, 3));

  Evaluator evaluator(env, settings);
  LearningCurve curve;
  std::vector<A2cSample> rows;
  for (int e = 0; e < settings.episodes; ++e) {
    env.reset(train_episode_seed(settings.seed, e));
    while (!env.done()) {
      Transition real;
      real.state = env.state();
      real.features = env.state_matrix();
      const std::vector<int> idx = agent.sample(real.features, act_rng);
      const StepResult r = env.step(agent.to_alphas(idx));
      real.actions = r.alphas;
      real.rewards = r.weighted;
      real.next_state = env.state();
      real.next_features = env.state_matrix();
      real.done = r.done;

      rows.clear();
      auto add_rows = [&](const Transition& t, const std::vector<int>& a) {
        for (std::size_t k = 0; k < K; ++k) {
          const auto c = static_cast<Eigen::Index>(k);
          rows.push_back({t.features.col(c), a[k], t.rewards[k], t.next_features.col(c), t.done});
        }
      };
      add_rows(real, idx);
      if (M > 0) {
        std::vector<std::vector<int>> sampled(static_cast<std::size_t>(M));
        const auto hybrids = expand_transition(emulator, real, M, [&](int m) {
          sampled[static_cast<std::size_t>(m)] = agent.sample(real.features, expand_rng);
          return agent.to_alphas(sampled[static_cast<std::size_t>(m)]);
        });
        for (int m = 0; m < M; ++m) add_rows(hybrids[static_cast<std::size_t>(m)], sampled[static_cast<std::size_t>(m)]);
      }
      if (settings.on_batch) settings.on_batch(rows.size());
      agent.update(rows);
    }
    evaluator.after_episode(e, agent.greedy_policy(), curve);
  }
  return curve;
}

LearningCurve htlb_a2c_train(A2cAgent& agent, Environment& env, const TrainSettings& settings) {
  const AdEmulator emulator(env);
  return htlb_a2c_train(agent, env, emulator, settings);
}

LearningCurve cem_train(CemAgent& agent, Environment& env, const TrainSettings& settings) {
  validate(settings);
  const auto& cfg = agent.config();
  Evaluator evaluator(env, settings);
  LearningCurve curve;
  int used = 0;
  int iteration = 0;
  while (used < settings.episodes) {
    const int pop = std::min(cfg.population, settings.episodes - used);
    const std::uint64_t seed = train_episode_seed(settings.seed, iteration);
    const double progress = static_cast<double>(used) / settings.episodes;
    const double extra = cfg.extra_std * std::max(0.0, 1.0 - progress);
    cem_iterate(
        agent.optimizer,
        [&](const Eigen::VectorXd& params) { return run_episode(env, seed, agent.policy_for(params)).episode_return; },
        pop, cfg.elite_fraction, extra);
    agent.actor.set_parameters(agent.optimizer.mean());
    const Policy greedy = agent.greedy_policy();
    for (int i = 0; i < pop; ++i) evaluator.after_episode(used + i, greedy, curve);
    used += pop;
    ++iteration;
  }
  return curve;
}

LearningCurve fixed_curve(double ratio, Environment& env, const TrainSettings& settings) {
  validate(settings);
  const EvalSummary r = evaluate_policy(env, settings.eval_seeds, fixed_policy(ratio));
  LearningCurve curve;
  for (int e = 0; e < settings.episodes; ++e) {
    curve.points.push_back({e, r.mean, r.stddev});
    if (settings.on_episode) settings.on_episode(e, curve.points.back());
  }
  return curve;
}

}  // namespace leverbid
