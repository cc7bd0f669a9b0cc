#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "leverbid/market.hpp"

namespace leverbid {

/// Maps the current environment state to one bid adjust ratio per target.
using Policy = std::function<std::vector<double>(const Environment&)>;

/// Emits alpha_const for every target at every step. alpha_const = 0 is
/// the manual (advertiser-set bid) baseline.
Policy fixed_policy(double alpha_const);

struct EpisodeOutcome {
  double episode_return = 0.0;     // undiscounted sum of rewards
  double discounted_return = 0.0;  // with the environment's gamma
  double organic_increment = 0.0;  // sum over steps and targets of organic(policy) - organic(manual)
  double business_increment = 0.0;
  std::vector<double> organic_policy;  // per target, summed over the episode
  std::vector<double> organic_manual;
  std::vector<double> business_policy;
  std::vector<double> business_manual;
};

EpisodeOutcome run_episode(Environment& env, std::uint64_t seed, const Policy& policy);

struct EvalSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population stddev over seeds
  std::vector<double> returns;
};

/// Mean undiscounted episode return over the given seeds.
EvalSummary evaluate_policy(Environment& env, const std::vector<std::uint64_t>& seeds, const Policy& policy);

double mean_of(const std::vector<double>& v);
double stddev_of(const std::vector<double>& v, bool sample = false);

}  // namespace leverbid
