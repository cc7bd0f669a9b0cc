#include "leverbid/evaluation.hpp"

#include <cmath>
#include <numeric>

namespace leverbid {

Policy fixed_policy(double alpha_const) {
  return [alpha_const](const Environment& env) { return std::vector<double>(env.num_targets(), alpha_const); };
}

EpisodeOutcome run_episode(Environment& env, std::uint64_t seed, const Policy& policy) {
  env.reset(seed);
  const std::size_t K = env.num_targets();
  EpisodeOutcome out;
  out.organic_policy.assign(K, 0.0);
  out.organic_manual.assign(K, 0.0);
  out.business_policy.assign(K, 0.0);
  out.business_manual.assign(K, 0.0);
  double discount = 1.0;
  while (!env.done()) {
    const StepResult r = env.step(policy(env));
    out.episode_return += r.reward;
    out.discounted_return += discount * r.reward;
    discount *= env.config().gamma;
    for (std::size_t k = 0; k < K; ++k) {
      out.organic_policy[k] += r.organic[k];
      out.organic_manual[k] += r.organic_manual[k];
      out.business_policy[k] += r.business[k];
      out.business_manual[k] += r.business_manual[k];
      out.organic_increment += r.increments[k];
      out.business_increment += r.business[k] - r.business_manual[k];
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v, bool sample) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(sample ? v.size() - 1 : v.size()));
}

EvalSummary evaluate_policy(Environment& env, const std::vector<std::uint64_t>& seeds, const Policy& policy) {
  EvalSummary s;
  for (auto seed : seeds) s.returns.push_back(run_episode(env, seed, policy).episode_return);
  s.mean = mean_of(s.returns);
  s.stddev = stddev_of(s.returns);
  return s;
}

}  // namespace leverbid
