#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "leverbid/dynamics.hpp"
#include "leverbid/evaluation.hpp"
#include "leverbid/market.hpp"

using namespace leverbid;

namespace {

std::vector<double> bids_of(const std::vector<Product>& ps) {
  std::vector<double> b;
  for (const auto& p : ps) b.push_back(p.bid);
  return b;
}

// Enumerates every eligibility subset and awards the top `slots` by eCPM.
std::vector<double> brute_force_win(const std::vector<Product>& ps, const std::vector<double>& bids, int slots,
                                    double m) {
  const std::size_t n = ps.size();
  std::vector<double> win(n, 0.0);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double prob = 1.0;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in = (mask >> i) & 1u;
      prob *= in ? m : 1.0 - m;
      if (in && ps[i].apctr_ad * bids[i] > 0.0) eligible.push_back(i);
    }
    std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
      const double ea = ps[a].apctr_ad * bids[a], eb = ps[b].apctr_ad * bids[b];
      return ea != eb ? ea > eb : ps[a].id < ps[b].id;
    });
    for (std::size_t r = 0; r < eligible.size() && r < static_cast<std::size_t>(slots); ++r) win[eligible[r]] += prob;
  }
  return win;
}

}  // namespace

TEST_CASE("adjust_bid") {
  CHECK(adjust_bid(1.0, 0.5, 1.0) == doctest::Approx(1.5));
  CHECK(adjust_bid(2.0, 0.0, 1.0) == 2.0);
  CHECK(adjust_bid(1.0, -1.5, 1.0) == 0.0);
  CHECK(adjust_bid(1.0, 3.0, 1.0) == doctest::Approx(2.0));
  CHECK(adjust_bid(1.0, -1.5, 2.0) == 0.0);
}

TEST_CASE("run_auction ranks by pctr times bid") {
  const std::vector<Product> ps{fixtures::competitor(0, 0.2, 1.0), fixtures::competitor(1, 0.1, 3.0)};
  const AuctionSettings s{1, 1, 1.0};
  const auto out = run_auction(ps, bids_of(ps), s, WindowStream(1, 0), true);
  CHECK(out.winners.at(0) == std::vector<int>{1});
  CHECK(out.stats[1].pv == 1.0);
  CHECK(out.stats[0].pv == 0.0);
}

TEST_CASE("run_auction with enough slots awards everyone") {
  std::vector<Product> ps;
  for (int i = 0; i < 4; ++i) ps.push_back(fixtures::competitor(i, 0.01 * (i + 1), 1.0));
  const auto out = run_auction(ps, bids_of(ps), {25, 4, 1.0}, WindowStream(3, 2));
  for (const auto& st : out.stats) CHECK(st.pv == 25.0);
}

TEST_CASE("run_auction breaks ties by lower id") {
  const std::vector<Product> ps{fixtures::competitor(7, 0.1, 2.0), fixtures::competitor(3, 0.2, 1.0)};
  const auto out = run_auction(ps, bids_of(ps), {10, 1, 1.0}, WindowStream(5, 1), true);
  for (const auto& w : out.winners) CHECK(w == std::vector<int>{3});
}

TEST_CASE("run_auction never exceeds the slot count") {
  std::vector<Product> ps;
  for (int i = 0; i < 9; ++i) ps.push_back(fixtures::competitor(i, 0.01 + 0.003 * i, 0.5 + 0.1 * i));
  const auto out = run_auction(ps, bids_of(ps), {300, 3, 0.6}, WindowStream(11, 4), true);
  CHECK(out.winners.size() == 300);
  for (const auto& w : out.winners) CHECK(w.size() <= 3);
  double total = 0.0;
  for (const auto& st : out.stats) total += st.pv;
  CHECK(total <= 900.0);
}

TEST_CASE("zero adjusted bids never win") {
  const std::vector<Product> ps{fixtures::competitor(0, 0.05, 1.0), fixtures::competitor(1, 0.01, 1.0)};
  const std::vector<double> bids{0.0, 1.0};
  const auto out = run_auction(ps, bids, {100, 2, 1.0}, WindowStream(2, 2));
  CHECK(out.stats[0].pv == 0.0);
  CHECK(out.stats[1].pv == 100.0);
}

TEST_CASE("raising one ratio never lowers its business impressions") {
  auto cfg = fixtures::small_config(false);
  cfg.auction.match_rate = 1.0;
  std::vector<double> base = bids_of(cfg.products);
  double last = -1.0;
  for (double a = -1.0; a <= 1.0 + 1e-12; a += 0.1) {
    auto bids = base;
    bids[0] = adjust_bid(cfg.products[0].bid, a, 1.0);
    const auto out = run_auction(cfg.products, bids, cfg.auction, WindowStream(9, 3));
    CHECK(out.stats[0].pv >= last);
    last = out.stats[0].pv;
  }
}

TEST_CASE("win_probabilities equal the brute-force enumeration") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Product> ps;
    const int n = 3 + trial % 6;
    for (int i = 0; i < n; ++i) ps.push_back(fixtures::competitor(i, 0.01 + 0.04 * u(rng), 0.5 + u(rng)));
    auto bids = bids_of(ps);
    if (trial % 5 == 0) bids[0] = 0.0;
    if (trial % 7 == 0) bids[1] = bids[2] * ps[2].apctr_ad / ps[1].apctr_ad;  // an eCPM tie
    const int slots = 1 + trial % 3;
    const double m = 0.1 + 0.8 * u(rng);
    const auto dp = win_probabilities(ps, bids, slots, m);
    const auto bf = brute_force_win(ps, bids, slots, m);
    for (int i = 0; i < n; ++i) CHECK(dp[i] == doctest::Approx(bf[i]).epsilon(1e-12));
  }
}

TEST_CASE("sampled auction averages to the expected auction") {
  const auto cfg = fixtures::small_config(false);
  const AuctionSettings s{40000, 2, 0.5};
  const auto bids = bids_of(cfg.products);
  const auto sampled = run_auction(cfg.products, bids, s, WindowStream(77, 1));
  const auto expected = expected_auction(cfg.products, bids, s);
  for (std::size_t i = 0; i < cfg.products.size(); ++i) {
    const double pwin = expected.stats[i].pv / s.requests;
    const double sd = std::sqrt(s.requests * pwin * (1 - pwin));
    CHECK(std::abs(sampled.stats[i].pv - expected.stats[i].pv) <= 5.0 * sd + 1e-9);
  }
}

TEST_CASE("traffic-win curve") {
  const TrafficWinFn T{0.3, 1500.0, 6.0};
  const std::vector<Product> ps{fixtures::target(0, 0.03, 1.0)};
  CHECK(recommend_step(ps, std::vector<double>{0.25}, 0.0, WindowStream(1, 1))[0] == 0.0);
  CHECK(recommend_step(ps, std::vector<double>{0.3}, 0.0, WindowStream(1, 1))[0] == 0.0);
  CHECK(T(0.8) > T(0.5));
  CHECK(T(0.5) > T(0.31));
  CHECK(T(50.0) == doctest::Approx(1500.0));
  CHECK(T.derivative(0.2) == 0.0);
  CHECK(T.derivative(0.5) == doctest::Approx(1500.0 * 6.0 * std::exp(-6.0 * 0.2)));
}

TEST_CASE("organic noise is mean one") {
  const std::vector<Product> ps{fixtures::target(0, 0.03, 1.0)};
  const double base = ps[0].traffic_win(0.6);
  double sum = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) sum += recommend_step(ps, std::vector<double>{0.6}, 0.2, WindowStream(5, i))[0];
  CHECK(sum / n == doctest::Approx(base).epsilon(0.02));
}

TEST_CASE("exposure_update") {
  const Product p = fixtures::target(0, 0.03, 1.0);
  SUBCASE("no business traffic reduces to the curve") {
    for (double pv : {0.0, 100.0, 900.0, 4000.0}) CHECK(exposure_update(p, pv, 0.0) == p.exposure_effect(pv));
  }
  SUBCASE("advertising below the peak lifts the score") {
    for (double b : {10.0, 100.0, 300.0}) CHECK(exposure_update(p, 400.0, b, 1.0) >= exposure_update(p, 400.0, 0.0, 1.0));
  }
  SUBCASE("dilution far beyond the peak") {
    CHECK(exposure_update(p, 9000.0, 0.0) < p.exposure_effect.peak_score);
    CHECK(p.exposure_effect(900.0) == doctest::Approx(0.65));
  }
  SUBCASE("negative quality pushes the score down") {
    CHECK(exposure_update(p, 400.0, 50.0, -1.0) < exposure_update(p, 450.0, 0.0, -1.0));
  }
  SUBCASE("scores stay in [0,1]") {
    Product q = p;
    q.exposure_effect.peak_score = 0.99;
    CHECK(exposure_update(q, 900.0, 1.0, 5.0) == 1.0);
  }
}

TEST_CASE("compute_reward") {
  const std::vector<double> r{5.0, -2.0, 3.0};
  CHECK(compute_reward(r, std::vector<double>{1, 1, 1}) == 6.0);
  CHECK(compute_reward(r, inverse_abs_etas(r)) == doctest::Approx(1.0));
  CHECK(compute_reward(r, RewardWeighting::inverse_abs) == 1.0);
  const std::vector<double> zero{0.0, 0.0};
  CHECK(compute_reward(zero, RewardWeighting::unit) == 0.0);
  CHECK(compute_reward(zero, RewardWeighting::inverse_abs) == 0.0);
  CHECK(inverse_abs_etas(zero) == std::vector<double>{0.0, 0.0});
  CHECK_THROWS(compute_reward(r, std::vector<double>{1, 1}));
  CHECK(compute_reward(r, RewardWeighting::explicit_weights, std::vector<double>{2, 0, 1}) == 13.0);
}

TEST_CASE("inverse_abs weighting counts increased minus decreased products") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(0, 12), kind(0, 4);
  std::normal_distribution<double> mag(0.0, 500.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(static_cast<std::size_t>(len(rng)));
    int expected = 0;
    for (auto& v : r) {
      v = kind(rng) == 0 ? 0.0 : mag(rng);
      expected += v > 0 ? 1 : v < 0 ? -1 : 0;
    }
    CHECK(compute_reward(r, RewardWeighting::inverse_abs) == static_cast<double>(expected));
  }
}

TEST_CASE("state features") {
  Environment env(fixtures::small_config(false));
  env.reset(4);
  SUBCASE("deltas vanish at t=0") {
    for (int id : env.target_ids()) {
      const auto raw = env.raw_state(id);
      const auto v = env.assemble_state(id);
      for (int i = 0; i < kStateDim; ++i) {
        if (is_delta_feature(i)) {
          CHECK(raw[i] == 0.0);
          CHECK(v[i] == 0.0);
        }
      }
    }
  }
  SUBCASE("description features distinguish products") {
    AdEntry a, b;
    a.apctr = 0.03;
    b.apctr = 0.04;
    a.bid = b.bid = 1.0;
    const RecEntry x;
    CHECK(raw_features(a, x) != raw_features(b, x));
    CHECK(env.assemble_state(0) != env.assemble_state(1));
  }
  SUBCASE("ctr with no impressions is zero") {
    CHECK(safe_ctr(0.0, 0.0) == 0.0);
    AdEntry o;
    o.pv_ad = 0.0;
    o.ctr_ad = safe_ctr(o.click_ad, o.pv_ad);
    CHECK(raw_features(o, RecEntry{})[6] == 0.0);
  }
  SUBCASE("unknown product") { CHECK_THROWS(env.assemble_state(42)); }
}

TEST_CASE("reset") {
  Environment env(fixtures::small_config(false));
  const MarketState a = env.reset(123);
  const MarketState b = env.reset(123);
  CHECK(a.o == b.o);
  CHECK(a.x == b.x);
  CHECK(a.t == 0);
  const MarketState c = env.reset(124);
  CHECK(!(c.x == a.x));
}

TEST_CASE("warm-up without noise matches the deterministic chain") {
  auto cfg = fixtures::small_config(true);
  cfg.auction.match_rate = 0.0;  // no advertising at all
  Environment env(cfg);
  env.reset(31);
  const Product& p = cfg.products[0];
  const double z0 = env.state().x.entries[0].z;
  CHECK(env.state().x.entries[0].pv_rec == p.traffic_win(z0));
  const auto chain = simulate_chain(p.traffic_win, p.exposure_effect, p.traffic_win(z0), cfg.horizon);
  for (int t = 0; t < cfg.horizon; ++t) {
    const StepResult r = env.step(std::vector<double>(env.num_targets(), 0.0));
    CHECK(r.organic[0] == chain[static_cast<std::size_t>(t)].p);
    CHECK(env.state().x.entries[0].z == chain[static_cast<std::size_t>(t)].z);
  }
}

TEST_CASE("an environment without targets is valid") {
  auto cfg = fixtures::small_config(true);
  cfg.products.erase(cfg.products.begin(), cfg.products.begin() + 3);
  Environment env(cfg);
  env.reset(1);
  CHECK(env.num_targets() == 0);
  const StepResult r = env.step(std::vector<double>{});
  CHECK(r.reward == 0.0);
  CHECK(env.state_matrix().cols() == 0);
}

TEST_CASE("episodes last exactly the horizon") {
  Environment env(fixtures::small_config(false));
  env.reset(5);
  int steps = 0;
  while (!env.done()) {
    env.step(std::vector<double>(3, 0.3));
    ++steps;
  }
  CHECK(steps == 7);
  CHECK_THROWS_AS(env.step(std::vector<double>(3, 0.0)), std::logic_error);
  env.reset(6);
  CHECK_THROWS_AS(env.step(std::vector<double>(2, 0.0)), std::invalid_argument);
}

TEST_CASE("the manual policy earns exactly zero") {
  for (bool noise_free : {true, false}) {
    Environment env(fixtures::small_config(noise_free));
    const EpisodeOutcome out = run_episode(env, 17, fixed_policy(0.0));
    CHECK(out.episode_return == 0.0);
    CHECK(out.business_increment == 0.0);
  }
}

TEST_CASE("first-step reward is zero for any action") {
  Environment env(fixtures::small_config(false));
  env.reset(8);
  const StepResult r = env.step(std::vector<double>{1.0, -1.0, 0.5});
  CHECK(r.reward == 0.0);
}

TEST_CASE("next recommendation state does not depend on the current action") {
  const auto cfg = fixtures::small_config(false);
  Environment a(cfg), b(cfg);
  a.reset(41);
  b.reset(41);
  const std::vector<double> common{0.2, -0.4, 0.1};
  a.step(common);
  b.step(common);
  a.step(std::vector<double>{1.0, 1.0, 1.0});
  b.step(std::vector<double>{-1.0, -1.0, -1.0});
  CHECK(a.state().x == b.state().x);
  CHECK(!(a.state().o == b.state().o));
  a.step(common);
  b.step(common);
  CHECK(!(a.state().x == b.state().x));
}

TEST_CASE("episode return telescopes to the organic difference") {
  Environment env(fixtures::small_config(false));
  auto cfg = env.config();
  const EpisodeOutcome out = run_episode(env, 29, [](const Environment& e) {
    return std::vector<double>{std::sin(e.t() + 1.0), 0.5, -0.5};
  });
  double diff = 0.0;
  for (std::size_t k = 0; k < out.organic_policy.size(); ++k) diff += out.organic_policy[k] - out.organic_manual[k];
  CHECK(out.episode_return == doctest::Approx(diff).epsilon(1e-12));
}

TEST_CASE("episode log") {
  Environment env(fixtures::small_config(false));
  env.set_logging(true);
  run_episode(env, 3, fixed_policy(0.5));
  CHECK(env.log().size() == 7 * 3);
  const std::string csv = env.log_csv();
  CHECK(csv.rfind("t,product", 0) == 0);
}

TEST_CASE("feature normalizer") {
  FeatureNormalizer n;
  RawFeatures a{}, b{};
  a.fill(1.0);
  b.fill(3.0);
  n.observe(a);
  n.observe(b);
  n.freeze();
  CHECK_THROWS(n.observe(a));
  double out[kStateDim];
  RawFeatures zero{};
  n.apply(zero, out);
  for (int i = 0; i < kStateDim; ++i) {
    if (is_delta_feature(i)) {
      CHECK(out[i] == 0.0);
    } else {
      CHECK(out[i] < 0.0);
    }
  }
  const auto back = FeatureNormalizer::from_json(n.to_json());
  CHECK(back.mean() == n.mean());
  CHECK(back.scale() == n.scale());
}

TEST_CASE("environment config round trip and validation") {
  const EnvConfig cfg = EnvConfig::load(fixtures::config_path("reference_env.json"));
  CHECK(cfg.num_targets() == 8);
  CHECK(cfg.products.size() == 32);
  CHECK(cfg.horizon == 7);
  const EnvConfig back = EnvConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  nlohmann::json j = cfg.to_json();
  j["match_rate"] = 1.5;
  CHECK_THROWS_AS(EnvConfig::from_json(j), ConfigError);
  j = cfg.to_json();
  j["gamma"] = -0.1;
  CHECK_THROWS_AS(EnvConfig::from_json(j), ConfigError);
  j = cfg.to_json();
  j["products"][0].erase("traffic_win");
  CHECK_THROWS_AS(EnvConfig::from_json(j), ConfigError);
  j = cfg.to_json();
  j["reward_weighting"] = "explicit";
  CHECK_THROWS_AS(EnvConfig::from_json(j), ConfigError);
  j = cfg.to_json();
  j["products"][1]["id"] = 0;
  CHECK_THROWS_AS(EnvConfig::from_json(j), ConfigError);
}
