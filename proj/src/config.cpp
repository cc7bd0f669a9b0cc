#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "leverbid/exposure_fit.hpp"
#include "leverbid/io.hpp"
#include "leverbid/market.hpp"

namespace leverbid {

using nlohmann::json;

namespace {

std::string weighting_name(RewardWeighting w) {
  switch (w) {
    case RewardWeighting::unit: return "unit";
    case RewardWeighting::inverse_abs: return "inverse_abs";
    case RewardWeighting::explicit_weights: return "explicit";
  }
  return "unit";
}

RewardWeighting weighting_from(const std::string& s) {
  if (s == "unit") return RewardWeighting::unit;
  if (s == "inverse_abs") return RewardWeighting::inverse_abs;
  if (s == "explicit") return RewardWeighting::explicit_weights;
  throw ConfigError("unknown reward_weighting '" + s + "'");
}

json product_to_json(const Product& p) {
  json j{{"id", p.id}, {"target", p.target}, {"apctr_ad", p.apctr_ad}, {"apcvr_ad", p.apcvr_ad},
         {"bid", p.bid}, {"ppb", p.ppb}};
  if (p.target) {
    j["traffic_win"] = {{"threshold", p.traffic_win.threshold},
                        {"saturation", p.traffic_win.saturation},
                        {"steepness", p.traffic_win.steepness}};
    if (p.exposure_effect.fitted) {
      j["exposure_effect"] = {{"fitted", fit_to_json(*p.exposure_effect.fitted)}};
    } else {
      j["exposure_effect"] = {{"peak_exposure", p.exposure_effect.peak_exposure},
                              {"peak_score", p.exposure_effect.peak_score},
                              {"floor_score", p.exposure_effect.floor_score},
                              {"decay", p.exposure_effect.decay}};
    }
    j["business_quality"] = p.business_quality;
    j["lambda"] = p.shift.lambda;
    j["mu"] = p.shift.mu;
    j["z0"] = {p.z0_min, p.z0_max};
  }
  return j;
}

Product product_from_json(const json& j) {
  Product p;
  p.id = j.at("id").get<int>();
  p.target = j.value("target", false);
  p.apctr_ad = j.at("apctr_ad").get<double>();
  p.apcvr_ad = j.value("apcvr_ad", 0.01);
  p.bid = j.at("bid").get<double>();
  p.ppb = j.value("ppb", 1.0);
  if (j.contains("traffic_win")) {
    const auto& t = j["traffic_win"];
    p.traffic_win.threshold = t.at("threshold").get<double>();
    p.traffic_win.saturation = t.at("saturation").get<double>();
    p.traffic_win.steepness = t.at("steepness").get<double>();
  } else if (p.target) {
    throw ConfigError("target product " + std::to_string(p.id) + " needs traffic_win");
  }
  if (j.contains("exposure_effect")) {
    const auto& u = j["exposure_effect"];
    if (u.contains("fitted")) {
      p.exposure_effect.fitted = std::make_shared<FittedExposureFn>(fit_from_json(u["fitted"]));
    } else {
      p.exposure_effect.peak_exposure = u.at("peak_exposure").get<double>();
      p.exposure_effect.peak_score = u.at("peak_score").get<double>();
      p.exposure_effect.floor_score = u.value("floor_score", 0.0);
      p.exposure_effect.decay = u.value("decay", 1.0);
    }
  } else if (p.target) {
    throw ConfigError("target product " + std::to_string(p.id) + " needs exposure_effect");
  }
  p.business_quality = j.value("business_quality", 1.0);
  p.shift.lambda = j.value("lambda", 1.0);
  p.shift.mu = j.value("mu", 0.05);
  if (j.contains("z0")) {
    const auto z0 = j["z0"].get<std::vector<double>>();
    if (z0.size() != 2) throw ConfigError("z0 must be [min, max]");
    p.z0_min = z0[0];
    p.z0_max = z0[1];
  }
  return p;
}

// {"count": n, "seed": s, "apctr": [lo, hi], "apcvr": [lo, hi], "bid": [lo, hi], "ppb": [lo, hi]}
std::vector<Product> generate_competitors(const json& spec, int first_id) {
  const int count = spec.at("count").get<int>();
  if (count < 0) throw ConfigError("competitors.count must be >= 0");
  std::mt19937_64 rng(spec.value("seed", std::uint64_t{7}));
  auto range = [&](const char* key, double lo, double hi) {
    const auto r = spec.value(key, std::vector<double>{lo, hi});
    if (r.size() != 2 || r[0] > r[1]) throw ConfigError(std::string("competitors.") + key + " must be [lo, hi]");
    return std::uniform_real_distribution<double>(r[0], r[1]);
  };
  auto pctr = range("apctr", 0.01, 0.05);
  auto pcvr = range("apcvr", 0.005, 0.03);
  auto bid = range("bid", 0.5, 1.5);
  auto ppb = range("ppb", 10.0, 200.0);
  std::vector<Product> out;
  for (int i = 0; i < count; ++i) {
    Product p;
    p.id = first_id + i;
    p.apctr_ad = pctr(rng);
    p.apcvr_ad = pcvr(rng);
    p.bid = bid(rng);
    p.ppb = ppb(rng);
    out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<int> EnvConfig::target_ids() const {
  std::vector<int> ids;
  for (const auto& p : products)
    if (p.target) ids.push_back(p.id);
  return ids;
}

std::size_t EnvConfig::num_targets() const {
  return static_cast<std::size_t>(std::count_if(products.begin(), products.end(), [](const Product& p) { return p.target; }));
}

void EnvConfig::validate() const {
  std::set<int> ids;
  for (const auto& p : products) {
    p.validate();
    if (!ids.insert(p.id).second) throw ConfigError("duplicate product id " + std::to_string(p.id));
  }
  if (auction.requests < 0) throw ConfigError("requests must be >= 0");
  if (auction.slots < 1) throw ConfigError("slots must be >= 1");
  if (!(auction.match_rate >= 0.0 && auction.match_rate <= 1.0)) throw ConfigError("match_rate must lie in [0,1]");
  if (!(range > 0.0)) throw ConfigError("range must be > 0");
  if (horizon < 0) throw ConfigError("horizon must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (!(rec_ctr_scale >= 0.0)) throw ConfigError("rec_ctr_scale must be >= 0");
  if (!(noise.organic_sigma >= 0.0)) throw ConfigError("noise.organic_sigma must be >= 0");
  if (weighting == RewardWeighting::explicit_weights && etas.size() != num_targets()) {
    throw ConfigError("explicit reward weighting needs one eta per target product");
  }
  if (calibration_episodes < 0) throw ConfigError("calibration.episodes must be >= 0");
}

json EnvConfig::to_json() const {
  json j;
  j["slots"] = auction.slots;
  j["requests"] = auction.requests;
  j["match_rate"] = auction.match_rate;
  j["range"] = range;
  j["horizon"] = horizon;
  j["gamma"] = gamma;
  j["rec_ctr_scale"] = rec_ctr_scale;
  j["noise"] = {{"sample_auction", noise.sample_auction},
                {"organic_sigma", noise.organic_sigma},
                {"sample_rec_clicks", noise.sample_rec_clicks}};
  j["reward_weighting"] = weighting_name(weighting);
  if (!etas.empty()) j["etas"] = etas;
  j["calibration"] = {{"episodes", calibration_episodes}, {"seed", calibration_seed}};
  json ps = json::array();
  for (const auto& p : products) ps.push_back(product_to_json(p));
  j["products"] = ps;
  return j;
}

EnvConfig EnvConfig::from_json(const json& j) {
  EnvConfig c;
  try {
    c.auction.slots = j.value("slots", 3);
    c.auction.requests = j.value("requests", 2000);
    c.auction.match_rate = j.value("match_rate", 0.8);
    c.range = j.value("range", 1.0);
    c.horizon = j.value("horizon", 7);
    c.gamma = j.value("gamma", 0.9);
    c.rec_ctr_scale = j.value("rec_ctr_scale", 0.05);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      c.noise.sample_auction = n.value("sample_auction", true);
      c.noise.organic_sigma = n.value("organic_sigma", 0.0);
      c.noise.sample_rec_clicks = n.value("sample_rec_clicks", true);
    }
    c.weighting = weighting_from(j.value("reward_weighting", std::string("unit")));
    c.etas = j.value("etas", std::vector<double>{});
    if (j.contains("calibration")) {
      c.calibration_episodes = j["calibration"].value("episodes", 8);
      c.calibration_seed = j["calibration"].value("seed", std::uint64_t{0x5eed});
    }
    int next_id = 0;
    for (const auto& pj : j.value("products", json::array())) {
      c.products.push_back(product_from_json(pj));
      next_id = std::max(next_id, c.products.back().id + 1);
    }
    if (j.contains("competitors")) {
      for (auto& p : generate_competitors(j["competitors"], next_id)) c.products.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("environment config: ") + e.what());
  }
  c.validate();
  return c;
}

EnvConfig EnvConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j.contains("environment") ? j["environment"] : j);
}

}  // namespace leverbid
