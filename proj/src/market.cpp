#include "leverbid/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "leverbid/io.hpp"

namespace leverbid {

void Product::validate() const {
  const std::string who = "product " + std::to_string(id) + ": ";
  if (!(apctr_ad > 0.0 && apctr_ad < 1.0)) throw ConfigError(who + "apctr_ad must lie in (0,1)");
  if (!(apcvr_ad > 0.0 && apcvr_ad < 1.0)) throw ConfigError(who + "apcvr_ad must lie in (0,1)");
  if (!(bid > 0.0)) throw ConfigError(who + "bid must be > 0");
  if (!(ppb > 0.0)) throw ConfigError(who + "ppb must be > 0");
  if (target) {
    try {
      traffic_win.validate();
      exposure_effect.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(who + e.what());
    }
    if (!(z0_min >= 0.0 && z0_min <= z0_max && z0_max <= 1.0)) throw ConfigError(who + "z0 range must satisfy 0 <= min <= max <= 1");
  }
}

std::vector<double> recommend_step(const std::vector<Product>& products, std::span<const double> scores,
                                   double sigma, const WindowStream& stream) {
  if (scores.size() != products.size()) throw std::invalid_argument("recommend_step: one score per product required");
  std::vector<double> p(products.size());
  for (std::size_t i = 0; i < products.size(); ++i) {
    p[i] = products[i].traffic_win(scores[i]);
    if (sigma > 0.0 && p[i] > 0.0) {
      const double xi = stream.normal(Channel::organic_noise, static_cast<std::uint64_t>(products[i].id));
      p[i] *= std::exp(sigma * xi - 0.5 * sigma * sigma);
    }
  }
  return p;
}

double exposure_update(const Product& product, double organic_pv, double business_pv, double business_quality) {
  if (!(organic_pv >= 0.0) || !(business_pv >= 0.0)) throw std::invalid_argument("exposure_update: traffic must be >= 0");
  return shifted_exposure(product.exposure_effect, business_pv, business_quality, product.shift)(organic_pv);
}

double exposure_update(const Product& product, double organic_pv, double business_pv) {
  return exposure_update(product, organic_pv, business_pv, product.business_quality);
}

bool AdPlatformState::operator==(const AdPlatformState& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.product_id != b.product_id || a.apctr != b.apctr || a.apcvr != b.apcvr || a.bid != b.bid ||
        a.ppb != b.ppb || a.pv_ad != b.pv_ad || a.click_ad != b.click_ad || a.ctr_ad != b.ctr_ad ||
        a.d_pv_ad != b.d_pv_ad || a.d_click_ad != b.d_click_ad || a.d_ctr_ad != b.d_ctr_ad) {
      return false;
    }
  }
  return true;
}

bool RecPlatformState::operator==(const RecPlatformState& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.product_id != b.product_id || a.pv_rec != b.pv_rec || a.click_rec != b.click_rec ||
        a.ctr_rec != b.ctr_rec || a.z != b.z || a.d_pv_rec != b.d_pv_rec || a.d_click_rec != b.d_click_rec ||
        a.d_ctr_rec != b.d_ctr_rec) {
      return false;
    }
  }
  return true;
}

AdPlatformState make_ad_state(const std::vector<Product>& products, const std::vector<int>& target_index,
                              const AuctionOutcome& outcome, const AdPlatformState* previous) {
  AdPlatformState s;
  s.entries.reserve(target_index.size());
  for (std::size_t k = 0; k < target_index.size(); ++k) {
    const auto idx = static_cast<std::size_t>(target_index[k]);
    const Product& p = products[idx];
    const AdStats& st = outcome.stats[idx];
    AdEntry e;
    e.product_id = p.id;
    e.apctr = p.apctr_ad;
    e.apcvr = p.apcvr_ad;
    e.bid = p.bid;
    e.ppb = p.ppb;
    e.pv_ad = st.pv;
    e.click_ad = st.click;
    e.ctr_ad = safe_ctr(st.click, st.pv);
    if (previous) {
      const AdEntry& prev = previous->entries.at(k);
      e.d_pv_ad = e.pv_ad - prev.pv_ad;
      e.d_click_ad = e.click_ad - prev.click_ad;
      e.d_ctr_ad = e.ctr_ad - prev.ctr_ad;
    }
    s.entries.push_back(e);
  }
  return s;
}

// ---------------------------------------------------------------------------

RawFeatures raw_features(const AdEntry& o, const RecEntry& x) {
  auto lg = [](double v) { return std::log1p(std::max(v, 0.0)); };
  auto dlg = [&](double now, double delta) { return lg(now) - lg(now - delta); };
  return RawFeatures{
      o.apctr, o.apcvr, o.bid, o.ppb,
      lg(o.pv_ad), lg(o.click_ad), o.ctr_ad,
      dlg(o.pv_ad, o.d_pv_ad), dlg(o.click_ad, o.d_click_ad), o.d_ctr_ad,
      lg(x.pv_rec), lg(x.click_rec), x.ctr_rec,
      dlg(x.pv_rec, x.d_pv_rec), dlg(x.click_rec, x.d_click_rec), x.d_ctr_rec,
  };
}

bool is_delta_feature(int index) { return (index >= 7 && index <= 9) || index >= 13; }

FeatureNormalizer::FeatureNormalizer() { scale_.fill(1.0); }

void FeatureNormalizer::observe(const RawFeatures& f) {
  if (frozen_) throw std::logic_error("FeatureNormalizer: observe after freeze");
  ++count_;
  for (int i = 0; i < kStateDim; ++i) {
    const double d = f[i] - mean_[i];
    mean_[i] += d / static_cast<double>(count_);
    m2_[i] += d * (f[i] - mean_[i]);
  }
}

void FeatureNormalizer::freeze() {
  for (int i = 0; i < kStateDim; ++i) {
    if (count_ < 2) {
      scale_[i] = 1.0;
      continue;
    }
    double var = m2_[i] / static_cast<double>(count_ - 1);
    if (is_delta_feature(i)) var += mean_[i] * mean_[i];  // deltas are scaled by RMS
    const double sd = std::sqrt(var);
    scale_[i] = sd > 1e-9 ? sd : 1.0;
  }
  frozen_ = true;
}

void FeatureNormalizer::apply(const RawFeatures& raw, double* out) const {
  for (int i = 0; i < kStateDim; ++i) {
    const double centered = is_delta_feature(i) ? raw[i] : raw[i] - mean_[i];
    out[i] = centered / scale_[i];
  }
}

nlohmann::json FeatureNormalizer::to_json() const {
  return {{"count", count_}, {"mean", mean_}, {"scale", scale_}, {"frozen", frozen_}};
}

FeatureNormalizer FeatureNormalizer::from_json(const nlohmann::json& j) {
  FeatureNormalizer n;
  n.count_ = j.at("count").get<std::size_t>();
  n.mean_ = j.at("mean").get<RawFeatures>();
  n.scale_ = j.at("scale").get<RawFeatures>();
  n.frozen_ = j.value("frozen", true);
  return n;
}

// ---------------------------------------------------------------------------

double compute_reward(std::span<const double> increments, std::span<const double> etas) {
  if (increments.size() != etas.size()) throw std::invalid_argument("compute_reward: length mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < increments.size(); ++k) total += etas[k] * increments[k];
  return total;
}

std::vector<double> inverse_abs_etas(std::span<const double> increments) {
  std::vector<double> etas(increments.size(), 0.0);
  for (std::size_t k = 0; k < increments.size(); ++k) {
    if (increments[k] != 0.0) etas[k] = 1.0 / std::abs(increments[k]);
  }
  return etas;
}

std::vector<double> weighted_increments(std::span<const double> increments, RewardWeighting weighting,
                                        std::span<const double> explicit_etas) {
  std::vector<double> w(increments.size());
  for (std::size_t k = 0; k < increments.size(); ++k) {
    const double r = increments[k];
    switch (weighting) {
      case RewardWeighting::unit:
        w[k] = r;
        break;
      case RewardWeighting::inverse_abs:
        w[k] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        break;
      case RewardWeighting::explicit_weights:
        if (explicit_etas.size() != increments.size()) throw std::invalid_argument("compute_reward: length mismatch");
        w[k] = explicit_etas[k] * r;
        break;
    }
  }
  return w;
}

double compute_reward(std::span<const double> increments, RewardWeighting weighting,
                      std::span<const double> explicit_etas) {
  double total = 0.0;
  for (double v : weighted_increments(increments, weighting, explicit_etas)) total += v;
  return total;
}

// ---------------------------------------------------------------------------

Environment::Environment(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  target_ids_ = config_.target_ids();
  for (std::size_t i = 0; i < config_.products.size(); ++i) {
    if (config_.products[i].target) target_index_.push_back(static_cast<int>(i));
  }
  calibrate();
}

Environment::Environment(EnvConfig config, FeatureNormalizer normalizer)
    : config_(std::move(config)), normalizer_(std::move(normalizer)) {
  config_.validate();
  target_ids_ = config_.target_ids();
  for (std::size_t i = 0; i < config_.products.size(); ++i) {
    if (config_.products[i].target) target_index_.push_back(static_cast<int>(i));
  }
}

void Environment::calibrate() {
  normalizer_ = FeatureNormalizer();
  FeatureNormalizer fitted;
  std::mt19937_64 rng(derive_seed(config_.calibration_seed, 0xca11));
  std::uniform_real_distribution<double> alpha(-config_.range, config_.range);
  std::vector<double> alphas(num_targets());
  auto observe_all = [&] {
    for (std::size_t k = 0; k < num_targets(); ++k) fitted.observe(raw_features(state_.o.entries[k], state_.x.entries[k]));
  };
  for (int ep = 0; ep < config_.calibration_episodes; ++ep) {
    reset(derive_seed(config_.calibration_seed, static_cast<std::uint64_t>(ep)));
    observe_all();
    while (!done_) {
      for (auto& a : alphas) a = alpha(rng);
      step(alphas);
      observe_all();
    }
  }
  fitted.freeze();
  normalizer_ = fitted;
  started_ = false;
  done_ = true;
  log_.clear();
}

std::vector<double> Environment::manual_bids() const {
  std::vector<double> bids(config_.products.size());
  for (std::size_t i = 0; i < bids.size(); ++i) bids[i] = config_.products[i].bid;
  return bids;
}

std::size_t Environment::target_slot(int product_id) const {
  for (std::size_t k = 0; k < target_ids_.size(); ++k)
    if (target_ids_[k] == product_id) return k;
  throw std::out_of_range("product " + std::to_string(product_id) + " is not a target product");
}

const MarketState& Environment::reset(std::uint64_t seed) {
  seed_ = seed;
  started_ = true;
  done_ = config_.horizon == 0;
  log_.clear();
  const auto& products = config_.products;
  const std::size_t K = num_targets();

  const WindowStream warm(seed, 0);
  std::vector<double> z_warm(products.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const Product& p = products[static_cast<std::size_t>(target_index_[k])];
    const double u = warm.uniform(Channel::initial_score, static_cast<std::uint64_t>(p.id));
    z_warm[static_cast<std::size_t>(target_index_[k])] = p.z0_min + (p.z0_max - p.z0_min) * u;
  }

  const auto bids = manual_bids();
  const AuctionOutcome ads = config_.noise.sample_auction ? run_auction(products, bids, config_.auction, warm)
                                                          : expected_auction(products, bids, config_.auction);
  const auto organic = recommend_step(products, z_warm, config_.noise.organic_sigma, warm);

  state_ = MarketState{};
  state_.o = make_ad_state(products, target_index_, ads, nullptr);
  z_policy_.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto idx = static_cast<std::size_t>(target_index_[k]);
    const Product& p = products[idx];
    RecEntry x;
    x.product_id = p.id;
    x.pv_rec = organic[idx];
    x.z = z_warm[idx];
    const double rate = std::min(1.0, config_.rec_ctr_scale * x.z);
    if (config_.noise.sample_rec_clicks) {
      auto eng = warm.engine(Channel::rec_click, static_cast<std::uint64_t>(p.id));
      std::binomial_distribution<long long> clicks(std::llround(x.pv_rec), rate);
      x.click_rec = static_cast<double>(clicks(eng));
    } else {
      x.click_rec = x.pv_rec * rate;
    }
    x.ctr_rec = safe_ctr(x.click_rec, x.pv_rec);
    state_.x.entries.push_back(x);
    z_policy_[k] = exposure_update(p, organic[idx], ads.stats[idx].pv);
  }
  z_manual_ = z_policy_;
  state_.t = 0;
  return state_;
}

StepResult Environment::step(std::span<const double> alphas) {
  if (!started_ || done_) throw std::logic_error("Environment::step: episode is finished; call reset()");
  const std::size_t K = num_targets();
  if (alphas.size() != K) {
    throw std::invalid_argument("Environment::step: expected " + std::to_string(K) + " bid ratios, got " +
                                std::to_string(alphas.size()));
  }
  const auto& products = config_.products;
  const WindowStream stream(seed_, static_cast<std::uint64_t>(state_.t) + 1);

  StepResult res;
  res.alphas.resize(K);
  auto bids = manual_bids();
  const auto manual = bids;
  for (std::size_t k = 0; k < K; ++k) {
    const auto idx = static_cast<std::size_t>(target_index_[k]);
    res.alphas[k] = std::clamp(alphas[k], -config_.range, config_.range);
    bids[idx] = adjust_bid(products[idx].bid, res.alphas[k], config_.range);
  }

  const bool sample = config_.noise.sample_auction;
  const AuctionOutcome ads = sample ? run_auction(products, bids, config_.auction, stream)
                                    : expected_auction(products, bids, config_.auction);
  const AuctionOutcome ads_manual = sample ? run_auction(products, manual, config_.auction, stream)
                                           : expected_auction(products, manual, config_.auction);

  std::vector<double> z_all(products.size(), 0.0), z_all_manual(products.size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    z_all[static_cast<std::size_t>(target_index_[k])] = z_policy_[k];
    z_all_manual[static_cast<std::size_t>(target_index_[k])] = z_manual_[k];
  }
  const auto organic = recommend_step(products, z_all, config_.noise.organic_sigma, stream);
  const auto organic_manual = recommend_step(products, z_all_manual, config_.noise.organic_sigma, stream);

  MarketState next;
  next.t = state_.t + 1;
  next.o = make_ad_state(products, target_index_, ads, &state_.o);
  res.increments.resize(K);
  res.organic.resize(K);
  res.organic_manual.resize(K);
  res.business.resize(K);
  res.business_manual.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto idx = static_cast<std::size_t>(target_index_[k]);
    const Product& p = products[idx];
    const RecEntry& prev = state_.x.entries[k];
    RecEntry x;
    x.product_id = p.id;
    x.pv_rec = organic[idx];
    x.z = z_policy_[k];
    const double rate = std::min(1.0, config_.rec_ctr_scale * x.z);
    if (config_.noise.sample_rec_clicks) {
      auto eng = stream.engine(Channel::rec_click, static_cast<std::uint64_t>(p.id));
      std::binomial_distribution<long long> clicks(std::llround(x.pv_rec), rate);
      x.click_rec = static_cast<double>(clicks(eng));
    } else {
      x.click_rec = x.pv_rec * rate;
    }
    x.ctr_rec = safe_ctr(x.click_rec, x.pv_rec);
    x.d_pv_rec = x.pv_rec - prev.pv_rec;
    x.d_click_rec = x.click_rec - prev.click_rec;
    x.d_ctr_rec = x.ctr_rec - prev.ctr_rec;
    next.x.entries.push_back(x);

    res.organic[k] = organic[idx];
    res.organic_manual[k] = organic_manual[idx];
    res.business[k] = ads.stats[idx].pv;
    res.business_manual[k] = ads_manual.stats[idx].pv;
    res.increments[k] = organic[idx] - organic_manual[idx];

    z_policy_[k] = exposure_update(p, organic[idx], ads.stats[idx].pv);
    z_manual_[k] = exposure_update(p, organic_manual[idx], ads_manual.stats[idx].pv);
  }
  res.weighted = weighted_increments(res.increments, config_.weighting, config_.etas);
  for (double v : res.weighted) res.reward += v;

  if (logging_) {
    for (std::size_t k = 0; k < K; ++k) {
      log_.push_back({state_.t, target_ids_[k], next.o.entries[k].pv_ad, next.o.entries[k].click_ad,
                      next.x.entries[k].pv_rec, next.x.entries[k].z, res.alphas[k], res.weighted[k]});
    }
  }

  state_ = std::move(next);
  done_ = state_.t >= config_.horizon;
  res.done = done_;
  return res;
}

RawFeatures Environment::raw_state(int product_id) const {
  const std::size_t k = target_slot(product_id);
  return raw_features(state_.o.entries[k], state_.x.entries[k]);
}

std::vector<double> Environment::assemble_state(int product_id) const {
  const std::size_t k = target_slot(product_id);
  std::vector<double> v(kStateDim);
  normalizer_.apply(raw_features(state_.o.entries[k], state_.x.entries[k]), v.data());
  return v;
}

Eigen::MatrixXd Environment::state_matrix(const MarketState& s) const {
  Eigen::MatrixXd m(kStateDim, static_cast<Eigen::Index>(s.o.entries.size()));
  for (std::size_t k = 0; k < s.o.entries.size(); ++k) {
    normalizer_.apply(raw_features(s.o.entries[k], s.x.entries[k]), m.col(static_cast<Eigen::Index>(k)).data());
  }
  return m;
}

Eigen::MatrixXd Environment::state_matrix() const { return state_matrix(state_); }

std::string Environment::log_csv() const {
  io::CsvWriter csv({"t", "product", "pv_ad", "click_ad", "pv_rec", "z", "alpha", "reward"});
  for (const auto& r : log_) {
    csv.row({std::to_string(r.t), std::to_string(r.product), io::format_double(r.pv_ad),
             io::format_double(r.click_ad), io::format_double(r.pv_rec), io::format_double(r.z),
             io::format_double(r.alpha), io::format_double(r.reward)});
  }
  return csv.str();
}

}  // namespace leverbid
