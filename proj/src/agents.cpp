#include "leverbid/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "leverbid/evaluation.hpp"

namespace leverbid {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ReplayMemory

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be > 0");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayMemory::push(Transition t) {
  ++pushed_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t n, std::mt19937_64& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayMemory: sample from empty memory");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &items_[pick(rng)];
  return out;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("ReplayMemory::at");
  return items_[(head_ + i) % items_.size()];
}

// ---------------------------------------------------------------------------
// OUProcess

OUProcess::OUProcess(std::size_t dim, double theta_, double sigma_, double mu_)
    : theta(theta_), sigma(sigma_), mu(mu_), x_(dim, mu_) {}

void OUProcess::reset() { std::fill(x_.begin(), x_.end(), mu); }

const std::vector<double>& OUProcess::sample(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& x : x_) x += theta * (mu - x) + sigma * n(rng);
  return x_;
}

// ---------------------------------------------------------------------------
// Config serialization

json DdpgConfig::to_json() const {
  return json{{"hidden", hidden},
              {"lr_actor", lr_actor},
              {"lr_critic", lr_critic},
              {"l2_critic", l2_critic},
              {"gamma", gamma},
              {"tau", tau},
              {"batch_size", batch_size},
              {"memory_capacity", memory_capacity},
              {"updates_per_step", updates_per_step},
              {"reward_scale", reward_scale},
              {"ou_theta", ou_theta},
              {"ou_sigma", ou_sigma},
              {"noise_final", noise_final},
              {"noise_decay_fraction", noise_decay_fraction},
              {"expansion_sigma", expansion_sigma},
              {"seed", seed}};
}

DdpgConfig DdpgConfig::from_json(const json& j) {
  DdpgConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.lr_actor = j.value("lr_actor", c.lr_actor);
  c.lr_critic = j.value("lr_critic", c.lr_critic);
  c.l2_critic = j.value("l2_critic", c.l2_critic);
  c.gamma = j.value("gamma", c.gamma);
  c.tau = j.value("tau", c.tau);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.memory_capacity = j.value("memory_capacity", c.memory_capacity);
  c.updates_per_step = j.value("updates_per_step", c.updates_per_step);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.ou_theta = j.value("ou_theta", c.ou_theta);
  c.ou_sigma = j.value("ou_sigma", c.ou_sigma);
  c.noise_final = j.value("noise_final", c.noise_final);
  c.noise_decay_fraction = j.value("noise_decay_fraction", c.noise_decay_fraction);
  c.expansion_sigma = j.value("expansion_sigma", c.expansion_sigma);
  c.seed = j.value("seed", c.seed);
  if (c.batch_size == 0) throw std::invalid_argument("ddpg: batch_size must be > 0");
  if (c.updates_per_step < 0) throw std::invalid_argument("ddpg: updates_per_step must be >= 0");
  return c;
}

json A2cConfig::to_json() const {
  return json{{"hidden", hidden},           {"n_actions", n_actions}, {"lr_policy", lr_policy},
              {"lr_value", lr_value},       {"gamma", gamma},         {"entropy", entropy},
              {"reward_scale", reward_scale}, {"seed", seed}};
}

A2cConfig A2cConfig::from_json(const json& j) {
  A2cConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.n_actions = j.value("n_actions", c.n_actions);
  c.lr_policy = j.value("lr_policy", c.lr_policy);
  c.lr_value = j.value("lr_value", c.lr_value);
  c.gamma = j.value("gamma", c.gamma);
  c.entropy = j.value("entropy", c.entropy);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.seed = j.value("seed", c.seed);
  if (c.n_actions < 2) throw std::invalid_argument("a2c: n_actions must be >= 2");
  return c;
}

json CemConfig::to_json() const {
  return json{{"population", population}, {"elite_fraction", elite_fraction}, {"init_std", init_std},
              {"std_floor", std_floor},   {"extra_std", extra_std},           {"seed", seed}};
}

CemConfig CemConfig::from_json(const json& j) {
  CemConfig c;
  c.population = j.value("population", c.population);
  c.elite_fraction = j.value("elite_fraction", c.elite_fraction);
  c.init_std = j.value("init_std", c.init_std);
  c.std_floor = j.value("std_floor", c.std_floor);
  c.extra_std = j.value("extra_std", c.extra_std);
  c.seed = j.value("seed", c.seed);
  if (c.population < 1) throw std::invalid_argument("cem: population must be >= 1");
  if (!(c.elite_fraction > 0.0 && c.elite_fraction <= 1.0)) {
    throw std::invalid_argument("cem: elite_fraction must be in (0, 1]");
  }
  return c;
}

// ---------------------------------------------------------------------------
// DDPG

namespace {

std::vector<int> with_ends(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Eigen::VectorXd flatten(const nn::GradientSet& g) {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < g.weight.size(); ++i) n += g.weight[i].size() + g.bias[i].size();
  Eigen::VectorXd flat(n);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    flat.segment(off, g.weight[i].size()) = Eigen::Map<const Eigen::VectorXd>(g.weight[i].data(), g.weight[i].size());
    off += g.weight[i].size();
    flat.segment(off, g.bias[i].size()) = g.bias[i];
    off += g.bias[i].size();
  }
  return flat;
}

// Stacks the per-product columns of a batch of joint transitions.
struct Rows {
  Eigen::MatrixXd s, s_next;
  Eigen::RowVectorXd a, r, not_done;
};

Rows stack(const std::vector<const Transition*>& batch, double range) {
  Eigen::Index n = 0;
  for (const auto* t : batch) n += t->features.cols();
  Rows rows;
  rows.s.resize(kStateDim, n);
  rows.s_next.resize(kStateDim, n);
  rows.a.resize(n);
  rows.r.resize(n);
  rows.not_done.resize(n);
  Eigen::Index c = 0;
  for (const auto* t : batch) {
    const Eigen::Index K = t->features.cols();
    if (t->next_features.cols() != K || static_cast<Eigen::Index>(t->actions.size()) != K ||
        static_cast<Eigen::Index>(t->rewards.size()) != K) {
      throw nn::ShapeError("transition has inconsistent product count");
    }
    rows.s.middleCols(c, K) = t->features;
    rows.s_next.middleCols(c, K) = t->next_features;
    for (Eigen::Index k = 0; k < K; ++k) {
      rows.a(c + k) = t->actions[static_cast<std::size_t>(k)] / range;
      rows.r(c + k) = t->rewards[static_cast<std::size_t>(k)];
      rows.not_done(c + k) = t->done ? 0.0 : 1.0;
    }
    c += K;
  }
  return rows;
}

}  // namespace

DdpgAgent::DdpgAgent(DdpgConfig config, double action_range) : config_(std::move(config)), range_(action_range) {
  if (!(range_ > 0.0)) throw std::invalid_argument("DdpgAgent: action range must be > 0");
  actor = nn::mlp_new(with_ends(kStateDim, config_.hidden, 1), nn::Activation::relu, nn::Activation::tanh,
                      derive_seed(config_.seed, 0xac7));
  critic = nn::mlp_new(with_ends(kStateDim + 1, config_.hidden, 1), nn::Activation::relu, nn::Activation::linear,
                       derive_seed(config_.seed, 0xc41));
  target_actor = actor;
  target_critic = critic;
}

Eigen::MatrixXd DdpgAgent::critic_input(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& scaled) const {
  Eigen::MatrixXd in(kStateDim + 1, features.cols());
  in.topRows(kStateDim) = features;
  in.row(kStateDim) = scaled;
  return in;
}

std::vector<double> DdpgAgent::act(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd out = nn::forward_batch(actor, features);
  std::vector<double> a(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index k = 0; k < out.cols(); ++k) a[static_cast<std::size_t>(k)] = range_ * out(0, k);
  return a;
}

Policy DdpgAgent::greedy_policy() const {
  return [this](const Environment& env) { return act(env.state_matrix()); };
}

Eigen::RowVectorXd DdpgAgent::q_values(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& alphas) const {
  return nn::forward_batch(critic, critic_input(features, alphas / range_)).row(0);
}

UpdateStats DdpgAgent::update(const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw std::invalid_argument("ddpg_update: empty batch");
  const Rows rows = stack(batch, range_);
  const double n = static_cast<double>(rows.a.size());
  UpdateStats stats;

  // Critic
  const Eigen::RowVectorXd a_next = nn::forward_batch(target_actor, rows.s_next).row(0);
  const Eigen::RowVectorXd q_next = nn::forward_batch(target_critic, critic_input(rows.s_next, a_next)).row(0);
  const Eigen::RowVectorXd y =
      config_.reward_scale * rows.r + config_.gamma * rows.not_done.cwiseProduct(q_next);
  nn::ForwardCache ccache;
  const Eigen::RowVectorXd q = nn::forward_batch(critic, critic_input(rows.s, rows.a), &ccache).row(0);
  const Eigen::RowVectorXd diff = q - y;
  stats.critic_loss = diff.squaredNorm() / n;
  if (!std::isfinite(stats.critic_loss)) throw nn::DivergenceError("critic loss is not finite");
  nn::adam_step(critic, nn::backward(critic, ccache, (2.0 / n) * diff), config_.lr_critic, config_.l2_critic);

  // Actor: ascend mean Q(s, mu(s))
  nn::ForwardCache acache;
  const Eigen::MatrixXd mu = nn::forward_batch(actor, rows.s, &acache);
  nn::ForwardCache qcache;
  const Eigen::RowVectorXd q_pi = nn::forward_batch(critic, critic_input(rows.s, mu.row(0)), &qcache).row(0);
  stats.actor_objective = q_pi.mean();
  const nn::GradientSet qg = nn::backward(critic, qcache, Eigen::MatrixXd::Constant(1, q_pi.size(), -1.0 / n));
  const nn::GradientSet ag = nn::backward(actor, acache, qg.input.bottomRows(1));
  nn::adam_step(actor, ag, config_.lr_actor, 0.0);

  nn::soft_update(target_critic, critic, config_.tau);
  nn::soft_update(target_actor, actor, config_.tau);
  return stats;
}

Eigen::VectorXd DdpgAgent::actor_gradient(const Eigen::MatrixXd& features) const {
  const double n = static_cast<double>(features.cols());
  nn::ForwardCache acache;
  const Eigen::MatrixXd mu = nn::forward_batch(actor, features, &acache);
  nn::ForwardCache qcache;
  nn::forward_batch(critic, critic_input(features, mu.row(0)), &qcache);
  const nn::GradientSet qg = nn::backward(critic, qcache, Eigen::MatrixXd::Constant(1, features.cols(), 1.0 / n));
  return flatten(nn::backward(actor, acache, qg.input.bottomRows(1)));
}

double ddpg_act(const DdpgAgent& agent, const Eigen::VectorXd& state, bool explore, OUProcess& ou,
                std::mt19937_64& rng) {
  const double a = agent.act(Eigen::MatrixXd(state)).front();
  if (!explore) return a;
  return std::clamp(a + ou.sample(rng).front(), -agent.range(), agent.range());
}

double dpg_gradient_check(const DdpgAgent& agent, const Eigen::MatrixXd& features, double eps) {
  const Eigen::VectorXd analytic = agent.actor_gradient(features);
  DdpgAgent probe = agent;
  const Eigen::VectorXd theta = agent.actor.parameters();
  auto objective = [&](const Eigen::VectorXd& p) {
    probe.actor.set_parameters(p);
    const std::vector<double> a = probe.act(features);
    return probe.q_values(features, Eigen::Map<const Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size())))
        .mean();
  };
  double worst = 0.0;
  Eigen::VectorXd p = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    p(i) = theta(i) + eps;
    const double fp = objective(p);
    p(i) = theta(i) - eps;
    const double fm = objective(p);
    p(i) = theta(i);
    worst = std::max(worst, nn::relative_error(analytic(i), (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

UpdateStats ddpg_update(DdpgAgent& agent, const std::vector<const Transition*>& batch) { return agent.update(batch); }

// ---------------------------------------------------------------------------
// A2C

A2cAgent::A2cAgent(A2cConfig config, double action_range) : config_(std::move(config)), range_(action_range) {
  if (!(range_ > 0.0)) throw std::invalid_argument("A2cAgent: action range must be > 0");
  policy = nn::mlp_new(with_ends(kStateDim, config_.hidden, config_.n_actions), nn::Activation::relu,
                       nn::Activation::softmax, derive_seed(config_.seed, 0xa2c1));
  value = nn::mlp_new(with_ends(kStateDim, config_.hidden, 1), nn::Activation::relu, nn::Activation::linear,
                      derive_seed(config_.seed, 0xa2c2));
  grid_.resize(static_cast<std::size_t>(config_.n_actions));
  for (int i = 0; i < config_.n_actions; ++i) {
    grid_[static_cast<std::size_t>(i)] = -range_ + 2.0 * range_ * i / (config_.n_actions - 1);
  }
}

Eigen::MatrixXd A2cAgent::probabilities(const Eigen::MatrixXd& features) const {
  return nn::forward_batch(policy, features);
}

std::vector<int> A2cAgent::sample(const Eigen::MatrixXd& features, std::mt19937_64& rng) const {
  const Eigen::MatrixXd p = probabilities(features);
  std::vector<int> out(static_cast<std::size_t>(p.cols()));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    const double draw = u(rng);
    double acc = 0.0;
    int pick = config_.n_actions - 1;
    for (int i = 0; i < config_.n_actions; ++i) {
      acc += p(i, k);
      if (draw < acc) {
        pick = i;
        break;
      }
    }
    out[static_cast<std::size_t>(k)] = pick;
  }
  return out;
}

std::vector<int> A2cAgent::greedy(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd p = probabilities(features);
  std::vector<int> out(static_cast<std::size_t>(p.cols()));
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    Eigen::Index best = 0;
    p.col(k).maxCoeff(&best);
    out[static_cast<std::size_t>(k)] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> A2cAgent::to_alphas(const std::vector<int>& actions) const {
  std::vector<double> a(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) a[i] = grid_.at(static_cast<std::size_t>(actions[i]));
  return a;
}

Policy A2cAgent::greedy_policy() const {
  return [this](const Environment& env) { return to_alphas(greedy(env.state_matrix())); };
}

A2cStats A2cAgent::update(const std::vector<A2cSample>& rollout) {
  if (rollout.empty()) throw std::invalid_argument("a2c_update: empty rollout");
  const auto n = static_cast<Eigen::Index>(rollout.size());
  const double dn = static_cast<double>(n);
  Eigen::MatrixXd s(kStateDim, n), s_next(kStateDim, n);
  Eigen::RowVectorXd r(n), not_done(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& x = rollout[static_cast<std::size_t>(i)];
    if (x.action < 0 || x.action >= config_.n_actions) throw std::out_of_range("a2c_update: action index");
    s.col(i) = x.state;
    s_next.col(i) = x.next_state;
    r(i) = x.reward;
    not_done(i) = x.done ? 0.0 : 1.0;
  }

  A2cStats stats;
  const Eigen::RowVectorXd v_next = nn::forward_batch(value, s_next).row(0);
  const Eigen::RowVectorXd target = config_.reward_scale * r + config_.gamma * not_done.cwiseProduct(v_next);
  nn::ForwardCache vcache;
  const Eigen::RowVectorXd v = nn::forward_batch(value, s, &vcache).row(0);
  const Eigen::RowVectorXd adv = target - v;
  stats.value_loss = adv.squaredNorm() / dn;
  if (!std::isfinite(stats.value_loss)) throw nn::DivergenceError("value loss is not finite");

  nn::ForwardCache pcache;
  const Eigen::MatrixXd probs = nn::forward_batch(policy, s, &pcache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(probs.rows(), n);
  double logp_adv = 0.0, entropy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = rollout[static_cast<std::size_t>(i)].action;
    const double pa = std::max(probs(a, i), 1e-12);
    logp_adv += std::log(pa) * adv(i);
    grad(a, i) -= adv(i) / pa / dn;
    for (Eigen::Index j = 0; j < probs.rows(); ++j) {
      const double pj = std::max(probs(j, i), 1e-12);
      entropy -= pj * std::log(pj);
      grad(j, i) += config_.entropy * (std::log(pj) + 1.0) / dn;
    }
  }
  stats.entropy = entropy / dn;
  stats.policy_loss = -logp_adv / dn - config_.entropy * stats.entropy;

  nn::adam_step(policy, nn::backward(policy, pcache, grad), config_.lr_policy, 0.0);
  nn::adam_step(value, nn::backward(value, vcache, (-2.0 / dn) * adv), config_.lr_value, 0.0);
  return stats;
}

A2cStats a2c_update(A2cAgent& agent, const std::vector<A2cSample>& rollout) { return agent.update(rollout); }

// ---------------------------------------------------------------------------
// CEM

CemOptimizer::CemOptimizer(Eigen::VectorXd mean, Eigen::VectorXd stddev, double std_floor, std::uint64_t seed)
    : mean_(std::move(mean)), std_(std::move(stddev)), floor_(std_floor), rng_(seed) {
  if (mean_.size() != std_.size()) throw nn::ShapeError("CemOptimizer: mean and stddev differ in size");
  std_ = std_.cwiseMax(floor_);
}

std::vector<Eigen::VectorXd> CemOptimizer::sample(int population) {
  if (population < 1) throw std::invalid_argument("CemOptimizer: population must be >= 1");
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(population));
  for (auto& c : out) {
    c.resize(mean_.size());
    for (Eigen::Index i = 0; i < mean_.size(); ++i) c(i) = mean_(i) + std_(i) * n(rng_);
  }
  return out;
}

void CemOptimizer::refit(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& scores,
                         double elite_fraction, double extra_std) {
  if (candidates.empty() || candidates.size() != scores.size()) {
    throw std::invalid_argument("CemOptimizer::refit: candidates and scores must be non-empty and equal length");
  }
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
    throw std::invalid_argument("CemOptimizer::refit: elite_fraction must be in (0, 1]");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_elite = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(elite_fraction * static_cast<double>(candidates.size()) - 1e-9)));
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mean_.size());
  for (std::size_t i = 0; i < n_elite; ++i) m += candidates[order[i]];
  m /= static_cast<double>(n_elite);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(mean_.size());
  for (std::size_t i = 0; i < n_elite; ++i) var += (candidates[order[i]] - m).array().square().matrix();
  var /= static_cast<double>(n_elite);
  mean_ = m;
  std_ = (var.array().sqrt() + extra_std).matrix().cwiseMax(floor_);
}

double cem_iterate(CemOptimizer& cem, const std::function<double(const Eigen::VectorXd&)>& objective,
                   int population, double elite_fraction, double extra_std) {
  const auto candidates = cem.sample(population);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(objective(c));
  cem.refit(candidates, scores, elite_fraction, extra_std);
  return *std::max_element(scores.begin(), scores.end());
}

CemAgent::CemAgent(const DdpgConfig& arch, const CemConfig& config, double action_range)
    : actor(nn::mlp_new(with_ends(kStateDim, arch.hidden, 1), nn::Activation::relu, nn::Activation::tanh,
                        derive_seed(config.seed, 0xce1))),
      optimizer(actor.parameters(), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(actor.parameter_count()),
                                                             config.init_std),
                config.std_floor, derive_seed(config.seed, 0xce2)),
      config_(config),
      range_(action_range) {}

std::vector<double> CemAgent::act(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd out = nn::forward_batch(actor, features);
  std::vector<double> a(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index k = 0; k < out.cols(); ++k) a[static_cast<std::size_t>(k)] = range_ * out(0, k);
  return a;
}

Policy CemAgent::greedy_policy() const {
  return [this](const Environment& env) { return act(env.state_matrix()); };
}

Policy CemAgent::policy_for(const Eigen::VectorXd& params) const {
  auto net = std::make_shared<nn::Network>(actor);
  net->set_parameters(params);
  const double range = range_;
  return [net, range](const Environment& env) {
    const Eigen::MatrixXd out = nn::forward_batch(*net, env.state_matrix());
    std::vector<double> a(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index k = 0; k < out.cols(); ++k) a[static_cast<std::size_t>(k)] = range * out(0, k);
    return a;
  };
}

}  // namespace leverbid
