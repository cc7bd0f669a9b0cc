#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "leverbid/emulator.hpp"
#include "leverbid/evaluation.hpp"
#include "leverbid/nn.hpp"

namespace leverbid {

// ---------------------------------------------------------------------------
// Replay memory and exploration noise

/// FIFO ring buffer of joint transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_pushed() const { return pushed_; }

  /// Uniform sample with replacement.
  std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const;

  /// Oldest to newest.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // index of the oldest item once full
  std::size_t pushed_ = 0;
};

/// Ornstein-Uhlenbeck process, one independent coordinate per dimension.
class OUProcess {
 public:
  OUProcess(std::size_t dim, double theta, double sigma, double mu = 0.0);

  void reset();
  const std::vector<double>& sample(std::mt19937_64& rng);
  const std::vector<double>& value() const { return x_; }

  double theta, sigma, mu;

 private:
  std::vector<double> x_;
};

// ---------------------------------------------------------------------------
// DDPG

struct DdpgConfig {
  std::vector<int> hidden{100, 50};
  double lr_actor = 1e-3;
  double lr_critic = 1e-4;
  double l2_critic = 0.01;
  double gamma = 0.9;
  double tau = 0.01;
  std::size_t batch_size = 32;
  std::size_t memory_capacity = 10000;
  int updates_per_step = 1;
  double reward_scale = 1.0;  // rewards are multiplied by this inside the critic target
  double ou_theta = 0.15;
  double ou_sigma = 0.2;      // fraction of the action range
  double noise_final = 0.1;   // noise multiplier reached after noise_decay_fraction of training
  double noise_decay_fraction = 0.5;
  double expansion_sigma = 0.2;  // fraction of the action range, per hybrid OU process
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static DdpgConfig from_json(const nlohmann::json& j);
};

struct UpdateStats {
  double critic_loss = 0.0;  // before the update
  double actor_objective = 0.0;  // mean Q(s, mu(s)) before the actor step
};

class DdpgAgent {
 public:
  DdpgAgent(DdpgConfig config, double action_range);

  /// Greedy actions for a kStateDim x K feature matrix.
  std::vector<double> act(const Eigen::MatrixXd& features) const;

  Policy greedy_policy() const;

  /// One critic step, one actor step, then soft target updates.
  UpdateStats update(const std::vector<const Transition*>& batch);

  /// Gradient of mean Q(s, mu(s)) with respect to the actor parameters
  /// (ascent direction), flattened in Network::parameters() order.
  Eigen::VectorXd actor_gradient(const Eigen::MatrixXd& features) const;

  /// Q(s, a) for a batch of states (columns) and ratios.
  Eigen::RowVectorXd q_values(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& alphas) const;

  const DdpgConfig& config() const { return config_; }
  double range() const { return range_; }

  nn::Network actor, critic, target_actor, target_critic;

 private:
  Eigen::MatrixXd critic_input(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& scaled_actions) const;

  DdpgConfig config_;
  double range_;
};

/// Ratio for one product state; with `explore` the next OU sample (first
/// coordinate) is added and the result clipped to the action range.
double ddpg_act(const DdpgAgent& agent, const Eigen::VectorXd& state, bool explore, OUProcess& ou,
                std::mt19937_64& rng);

/// Worst relative error between actor_gradient and central differences of
/// mean Q(s, mu(s)) over every actor parameter.
double dpg_gradient_check(const DdpgAgent& agent, const Eigen::MatrixXd& features, double eps = 1e-6);

// Free-function spelling of DdpgAgent::update.
UpdateStats ddpg_update(DdpgAgent& agent, const std::vector<const Transition*>& batch);

// ---------------------------------------------------------------------------
// A2C over a discrete ratio grid

struct A2cConfig {
  std::vector<int> hidden{100, 50};
  int n_actions = 10;
  double lr_policy = 1e-3;
  double lr_value = 1e-3;
  double gamma = 0.9;
  double entropy = 0.01;
  double reward_scale = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static A2cConfig from_json(const nlohmann::json& j);
};

struct A2cSample {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;
};

struct A2cStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

class A2cAgent {
 public:
  A2cAgent(A2cConfig config, double action_range);

  const std::vector<double>& action_grid() const { return grid_; }

  /// Column-wise action probabilities for a feature matrix.
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& features) const;
  std::vector<int> sample(const Eigen::MatrixXd& features, std::mt19937_64& rng) const;
  std::vector<int> greedy(const Eigen::MatrixXd& features) const;
  std::vector<double> to_alphas(const std::vector<int>& actions) const;

  Policy greedy_policy() const;

  A2cStats update(const std::vector<A2cSample>& rollout);

  const A2cConfig& config() const { return config_; }
  double range() const { return range_; }

  nn::Network policy, value;

 private:
  A2cConfig config_;
  double range_;
  std::vector<double> grid_;
};

A2cStats a2c_update(A2cAgent& agent, const std::vector<A2cSample>& rollout);

// ---------------------------------------------------------------------------
// Cross-entropy method over a flat parameter vector

struct CemConfig {
  int population = 10;
  double elite_fraction = 0.2;
  double init_std = 0.1;
  double std_floor = 1e-3;
  double extra_std = 0.0;  // added to the refit std, decays linearly to 0 over training
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static CemConfig from_json(const nlohmann::json& j);
};

class CemOptimizer {
 public:
  CemOptimizer(Eigen::VectorXd mean, Eigen::VectorXd stddev, double std_floor, std::uint64_t seed);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return std_; }
  double std_floor() const { return floor_; }
  std::mt19937_64& rng() { return rng_; }

  /// Population candidates of the current distribution.
  std::vector<Eigen::VectorXd> sample(int population);
  /// Refit to the top ceil(elite_fraction * n) candidates by score.
  void refit(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& scores,
             double elite_fraction, double extra_std = 0.0);

 private:
  Eigen::VectorXd mean_, std_;
  double floor_;
  std::mt19937_64 rng_;
};

/// Samples, scores and refits once. Returns the best score of the population.
double cem_iterate(CemOptimizer& cem, const std::function<double(const Eigen::VectorXd&)>& objective,
                   int population, double elite_fraction, double extra_std = 0.0);

/// Deterministic actor with the DDPG actor architecture, used by CEM.
class CemAgent {
 public:
  CemAgent(const DdpgConfig& arch, const CemConfig& config, double action_range);

  std::vector<double> act(const Eigen::MatrixXd& features) const;
  Policy greedy_policy() const;
  Policy policy_for(const Eigen::VectorXd& params) const;

  const CemConfig& config() const { return config_; }
  double range() const { return range_; }

  nn::Network actor;  // holds the current mean parameters
  CemOptimizer optimizer;

 private:
  CemConfig config_;
  double range_;
};

}  // namespace leverbid
