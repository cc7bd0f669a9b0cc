#include "leverbid/emulator.hpp"

#include <random>
#include <stdexcept>

namespace leverbid {

AdEmulator::AdEmulator(const Environment& env) : AdEmulator(env, Options{}) {}

AdEmulator::AdEmulator(const Environment& env, Options options)
    : products_(env.config().products),
      described_(env.config().products),
      target_index_(env.target_index()),
      auction_(env.config().auction),
      range_(env.config().range),
      normalizer_(env.normalizer()),
      options_(options) {
  if (options_.fidelity_sigma > 0.0) {
    std::mt19937_64 rng(derive_seed(options_.seed, 0xf1de));
    std::normal_distribution<double> n(0.0, options_.fidelity_sigma);
    for (auto& p : products_) p.apctr_ad = std::clamp(p.apctr_ad * (1.0 + n(rng)), 1e-6, 1.0 - 1e-6);
  }
}

AdPlatformState AdEmulator::simulate_o(const MarketState& state, std::span<const double> alphas,
                                       std::uint64_t draw) const {
  if (alphas.size() != target_index_.size()) throw std::invalid_argument("simulate_o: action dimension mismatch");
  std::vector<double> bids(products_.size());
  for (std::size_t i = 0; i < products_.size(); ++i) bids[i] = products_[i].bid;
  for (std::size_t k = 0; k < target_index_.size(); ++k) {
    const auto idx = static_cast<std::size_t>(target_index_[k]);
    bids[idx] = adjust_bid(products_[idx].bid, alphas[k], range_);
  }
  AuctionOutcome outcome;
  if (options_.expected_value) {
    outcome = expected_auction(products_, bids, auction_);
  } else {
    const WindowStream stream(derive_seed(options_.seed, draw), static_cast<std::uint64_t>(state.t) + 1);
    outcome = run_auction(products_, bids, auction_, stream);
  }
  return make_ad_state(described_, target_index_, outcome, &state.o);
}

Eigen::MatrixXd AdEmulator::features(const MarketState& s) const {
  Eigen::MatrixXd m(kStateDim, static_cast<Eigen::Index>(s.o.entries.size()));
  for (std::size_t k = 0; k < s.o.entries.size(); ++k) {
    normalizer_.apply(raw_features(s.o.entries[k], s.x.entries[k]), m.col(static_cast<Eigen::Index>(k)).data());
  }
  return m;
}

std::vector<Transition> expand_transition(const AdEmulator& em, const Transition& t, int M,
                                          const ActionSampler& sampler) {
  if (M < 0) throw std::invalid_argument("expand_transition: M must be >= 0");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    Transition h;
    h.state = t.state;
    h.features = t.features;
    h.actions = sampler(m);
    h.rewards = t.rewards;
    h.done = t.done;
    h.hybrid = true;
    h.next_state.t = t.next_state.t;
    h.next_state.o = em.simulate_o(t.state, h.actions, static_cast<std::uint64_t>(m));
    h.next_state.x = t.next_state.x;
    h.next_features = em.features(h.next_state);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace leverbid
