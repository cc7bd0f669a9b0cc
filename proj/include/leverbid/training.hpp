#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "leverbid/agents.hpp"
#include "leverbid/emulator.hpp"
#include "leverbid/market.hpp"

namespace leverbid {

struct CurvePoint {
  int episode = 0;
  double mean_return = 0.0;  // greedy policy on the evaluation seeds
  double std_return = 0.0;
};

struct LearningCurve {
  std::vector<CurvePoint> points;

  /// Mean of the final `fraction` of points (at least one).
  double converged(double fraction = 0.1) const;
  std::vector<double> values() const;
  std::string to_csv() const;
  static LearningCurve from_csv(const std::string& text);
};

struct TrainSettings {
  int episodes = 300;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> eval_seeds{1000001, 1000002, 1000003};
  int eval_every = 1;  // evaluate after every k-th episode, carry the last value in between
  int expansions = 10; // M; 0 gives the plain algorithm

  std::function<void(int episode, const CurvePoint&)> on_episode;
  std::function<void(std::size_t samples)> on_batch;  // A2C: samples in each update
};

/// Training-episode seed, disjoint from evaluation seeds by construction.
std::uint64_t train_episode_seed(std::uint64_t run_seed, int episode);

/// Exploration-noise multiplier at `episode`: 1 at the start, decaying
/// linearly to `final_mult` at decay_fraction * episodes.
double noise_multiplier(int episode, int episodes, double final_mult, double decay_fraction);

struct DdpgHooks {
  std::function<void(const DdpgAgent&, const UpdateStats&)> on_update;
  std::function<void(const Transition&)> on_step;  // after each real step, before expansion
};

/// HTLB-DDPG. With settings.expansions == 0 this is DDPG.
LearningCurve htlb_train(DdpgAgent& agent, Environment& env, const AdEmulator& emulator, ReplayMemory& memory,
                         const TrainSettings& settings, const DdpgHooks& hooks = {});
LearningCurve htlb_train(DdpgAgent& agent, Environment& env, const TrainSettings& settings);

/// A2C trained on-policy one step at a time; expansions > 0 adds M hybrid
/// samples per step (HTLB-A2C).
LearningCurve htlb_a2c_train(A2cAgent& agent, Environment& env, const AdEmulator& emulator,
                             const TrainSettings& settings);
LearningCurve htlb_a2c_train(A2cAgent& agent, Environment& env, const TrainSettings& settings);

/// CEM over the actor parameters; every candidate costs one training episode.
LearningCurve cem_train(CemAgent& agent, Environment& env, const TrainSettings& settings);

/// Constant-ratio baseline; the curve is flat.
LearningCurve fixed_curve(double ratio, Environment& env, const TrainSettings& settings);

}  // namespace leverbid
