#include <doctest.h>

#include "fixtures.hpp"
#include "leverbid/emulator.hpp"

using namespace leverbid;

namespace {

Transition logged_step(Environment& env, const std::vector<double>& action) {
  Transition t;
  t.state = env.state();
  t.features = env.state_matrix();
  const StepResult r = env.step(action);
  t.actions = r.alphas;
  t.rewards = r.weighted;
  t.next_state = env.state();
  t.next_features = env.state_matrix();
  t.done = r.done;
  return t;
}

}  // namespace

TEST_CASE("expected-value emulator reproduces the noise-free environment") {
  const auto cfg = fixtures::small_config(true);
  Environment env(cfg);
  const AdEmulator em(env);
  int states = 0;
  for (std::uint64_t seed = 0; states < 10; ++seed) {
    env.reset(seed);
    for (int t = 0; t < 2 && states < 10; ++t, ++states) {
      const MarketState s = env.state();
      for (int g = 0; g <= 20; ++g) {
        const double a = -1.0 + 0.1 * g;
        const std::vector<double> action{a, -a, 0.5 * a};
        Environment probe = env;
        probe.step(action);
        CHECK(em.simulate_o(s, action) == probe.state().o);
      }
      env.step(std::vector<double>{0.1 * t, 0.0, -0.2});
    }
  }
}

TEST_CASE("minimum ratio removes a product from the auction") {
  Environment env(fixtures::small_config(true));
  env.reset(2);
  const AdEmulator em(env);
  const AdPlatformState o = em.simulate_o(env.state(), std::vector<double>{-1.0, 0.0, 0.0});
  CHECK(o.entries[0].pv_ad == 0.0);
  CHECK(o.entries[0].click_ad == 0.0);
  CHECK(o.entries[1].pv_ad > 0.0);
}

TEST_CASE("replaying the logged action gives the logged successor") {
  Environment env(fixtures::small_config(true));
  env.reset(9);
  const AdEmulator em(env);
  env.step(std::vector<double>{0.3, 0.3, 0.3});
  const Transition t = logged_step(env, {0.7, -0.2, 0.0});
  CHECK(em.simulate_o(t.state, t.actions) == t.next_state.o);
  CHECK_THROWS_AS(em.simulate_o(t.state, std::vector<double>{0.0}), std::invalid_argument);
}

TEST_CASE("expand_transition") {
  Environment env(fixtures::small_config(false));
  env.reset(14);
  const AdEmulator em(env);
  const Transition real = logged_step(env, {0.5, 0.0, -0.5});

  SUBCASE("produces M hybrids that keep the logged x and reward") {
    int calls = 0;
    const auto hybrids = expand_transition(em, real, 10, [&](int m) {
      ++calls;
      return std::vector<double>{0.1 * m, -0.1 * m, 0.0};
    });
    CHECK(hybrids.size() == 10);
    CHECK(calls == 10);
    for (std::size_t m = 0; m < hybrids.size(); ++m) {
      const auto& h = hybrids[m];
      CHECK(h.hybrid);
      CHECK(h.next_state.x == real.next_state.x);
      CHECK(h.state.x == real.state.x);
      CHECK(h.state.o == real.state.o);
      CHECK(h.rewards == real.rewards);
      CHECK(h.done == real.done);
      CHECK(h.next_state.t == real.next_state.t);
      CHECK(h.actions == std::vector<double>{0.1 * m, -0.1 * m, 0.0});
      CHECK(h.next_state.o == em.simulate_o(real.state, h.actions));
      CHECK(h.features == real.features);
      CHECK(h.next_features.cols() == 3);
    }
  }
  SUBCASE("M = 0 gives nothing") {
    CHECK(expand_transition(em, real, 0, [](int) { return std::vector<double>(3, 0.0); }).empty());
    CHECK_THROWS(expand_transition(em, real, -1, [](int) { return std::vector<double>(3, 0.0); }));
  }
}

TEST_CASE("hybrids with the logged action duplicate the real successor") {
  Environment env(fixtures::small_config(true));
  env.reset(21);
  const AdEmulator em(env);
  const Transition real = logged_step(env, {0.4, 0.8, -0.6});
  const auto hybrids = expand_transition(em, real, 3, [&](int) { return real.actions; });
  for (const auto& h : hybrids) {
    CHECK(h.next_state.o == real.next_state.o);
    CHECK(h.next_state.x == real.next_state.x);
    CHECK(h.next_features == real.next_features);
  }
}

TEST_CASE("emulator fidelity knob and sampling mode") {
  Environment env(fixtures::small_config(true));
  env.reset(3);
  const std::vector<double> a{0.2, 0.2, 0.2};
  const AdEmulator exact(env);
  const AdEmulator noisy(env, {true, 0.3, 5});
  CHECK(!(noisy.simulate_o(env.state(), a) == exact.simulate_o(env.state(), a)));

  const AdEmulator sampled(env, {false, 0.0, 5});
  CHECK(sampled.simulate_o(env.state(), a, 1) == sampled.simulate_o(env.state(), a, 1));
  CHECK(!(sampled.simulate_o(env.state(), a, 1) == sampled.simulate_o(env.state(), a, 2)));
  // Description features always describe the real product.
  CHECK(noisy.simulate_o(env.state(), a).entries[0].apctr == env.config().products[0].apctr_ad);
}
