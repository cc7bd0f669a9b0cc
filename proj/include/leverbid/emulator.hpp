#pragma once

// Advertising emulator: replays the auction rule to predict the
// advertisement-related successor state for any candidate bid ratios, and
// turns logged transitions into hybrid ones (simulated o', logged x').

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "leverbid/market.hpp"

namespace leverbid {

/// One joint step: every target product's state, ratio and reward.
struct Transition {
  MarketState state;
  std::vector<double> actions;  // applied bid ratios, target order
  std::vector<double> rewards;  // eta_k * r_k per target
  MarketState next_state;
  bool done = false;
  bool hybrid = false;

  Eigen::MatrixXd features;       // kStateDim x K, normalized state
  Eigen::MatrixXd next_features;  // kStateDim x K, normalized next state
};

class AdEmulator {
 public:
  struct Options {
    bool expected_value = true;
    double fidelity_sigma = 0.0;  // relative Gaussian error on pctr, 0 = exact
    std::uint64_t seed = 0;
  };

  explicit AdEmulator(const Environment& env);
  AdEmulator(const Environment& env, Options options);

  const Options& options() const { return options_; }

  /// Successor o' for `alphas` applied in `state`. Expected-value mode is
  /// deterministic; sampling mode draws with (seed, state.t, draw).
  AdPlatformState simulate_o(const MarketState& state, std::span<const double> alphas,
                             std::uint64_t draw = 0) const;

  Eigen::MatrixXd features(const MarketState& s) const;

 private:
  std::vector<Product> products_;  // auction copy, possibly with perturbed pctr
  std::vector<Product> described_;  // original products for description features
  std::vector<int> target_index_;
  AuctionSettings auction_;
  double range_;
  FeatureNormalizer normalizer_;
  Options options_;
};

/// Draws the m-th joint action for an expansion.
using ActionSampler = std::function<std::vector<double>(int m)>;

/// M hybrid transitions: state, reward and next x copied from `t`, actions
/// from `sampler`, next o simulated.
std::vector<Transition> expand_transition(const AdEmulator& em, const Transition& t, int M,
                                          const ActionSampler& sampler);

}  // namespace leverbid
