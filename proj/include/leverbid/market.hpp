#pragma once

// Blended-feed market simulator: an eCPM-ranked advertising auction next to
// a recommendation platform whose scores respond to each product's exposure.
//
// One step is one time window. The bid adjust ratios chosen for window t
// change business traffic in window t, which feeds the exposure update that
// sets the score for window t+1. Organic traffic in window t depends only on
// the score already fixed before the action, so the recommendation half of
// the next state is independent of the current action.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "leverbid/curves.hpp"
#include "leverbid/rng.hpp"

namespace leverbid {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Product {
  int id = 0;
  double apctr_ad = 0.01;
  double apcvr_ad = 0.01;
  double bid = 1.0;
  double ppb = 1.0;
  TrafficWinFn traffic_win;
  ExposureEffectFn exposure_effect;
  bool target = false;
  double business_quality = 1.0;
  AdShift shift;
  // Range of the score before the warm-up window of an episode.
  double z0_min = 0.0;
  double z0_max = 1.0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Auction

/// bid * (1 + clamp(alpha, -range, range)), floored at 0.
double adjust_bid(double bid, double alpha, double range);

struct AdStats {
  double pv = 0.0;
  double click = 0.0;
  double cost = 0.0;
};

struct AuctionOutcome {
  std::vector<AdStats> stats;             // aligned with the product list
  std::vector<std::vector<int>> winners;  // per request, slot order; only when recorded
};

struct AuctionSettings {
  int requests = 2000;
  int slots = 3;
  double match_rate = 0.8;
};

/// Samples `requests` auctions. Each product is eligible for a request with
/// probability match_rate (and only with a positive adjusted bid); eligible
/// products are ranked by pctr * adjusted_bid, ties to the lower id, and the
/// top `slots` win an impression. Clicks are Bernoulli(pctr) per impression
/// and cost one adjusted bid each.
AuctionOutcome run_auction(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                           const AuctionSettings& settings, const WindowStream& stream,
                           bool record_winners = false);

/// Expected value of run_auction: impressions = requests * P(win),
/// clicks = impressions * pctr. Deterministic.
AuctionOutcome expected_auction(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                                const AuctionSettings& settings);

/// Per-product win probability for one request under the eligibility model.
std::vector<double> win_probabilities(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                                      int slots, double match_rate);

// ---------------------------------------------------------------------------
// Recommendation side

/// Organic impressions p = T(z) for each product, times an optional
/// mean-one lognormal factor when sigma > 0.
std::vector<double> recommend_step(const std::vector<Product>& products, std::span<const double> scores,
                                   double sigma, const WindowStream& stream);

/// z_next = clamp(U(organic + lambda*business) + mu*quality*[business > 0], 0, 1).
double exposure_update(const Product& product, double organic_pv, double business_pv, double business_quality);
double exposure_update(const Product& product, double organic_pv, double business_pv);

// ---------------------------------------------------------------------------
// State

struct AdEntry {
  int product_id = 0;
  double apctr = 0, apcvr = 0, bid = 0, ppb = 0;
  double pv_ad = 0, click_ad = 0, ctr_ad = 0;
  double d_pv_ad = 0, d_click_ad = 0, d_ctr_ad = 0;
};

struct AdPlatformState {
  std::vector<AdEntry> entries;  // one per target product, target order
  bool operator==(const AdPlatformState&) const;
};

struct RecEntry {
  int product_id = 0;
  double pv_rec = 0, click_rec = 0, ctr_rec = 0;
  double z = 0;  // score in effect during the window these statistics describe
  double d_pv_rec = 0, d_click_rec = 0, d_ctr_rec = 0;
};

struct RecPlatformState {
  std::vector<RecEntry> entries;
  bool operator==(const RecPlatformState&) const;
};

struct MarketState {
  AdPlatformState o;
  RecPlatformState x;
  int t = 0;
};

/// ctr with the 0/0 convention.
inline double safe_ctr(double clicks, double pv) { return clicks / std::max(pv, 1.0); }

/// Builds o' from auction statistics, with deltas against the previous o.
AdPlatformState make_ad_state(const std::vector<Product>& products, const std::vector<int>& target_index,
                              const AuctionOutcome& outcome, const AdPlatformState* previous);

// ---------------------------------------------------------------------------
// Features

inline constexpr int kStateDim = 16;
using RawFeatures = std::array<double, kStateDim>;

/// o-part (apctr, apcvr, bid, ppb, pv_ad, click_ad, ctr_ad, dpv_ad, dclick_ad,
/// dctr_ad) followed by x-part (pv_rec, click_rec, ctr_rec, dpv_rec,
/// dclick_rec, dctr_rec). Counts are log1p-scaled; count deltas are
/// differences of the scaled values.
RawFeatures raw_features(const AdEntry& o, const RecEntry& x);

/// True for the six delta features; those are scaled but not centered so a
/// zero delta stays zero.
bool is_delta_feature(int index);

class FeatureNormalizer {
 public:
  FeatureNormalizer();  // identity

  void observe(const RawFeatures& f);
  void freeze();
  bool frozen() const { return frozen_; }
  std::size_t count() const { return count_; }

  void apply(const RawFeatures& raw, double* out) const;
  const RawFeatures& mean() const { return mean_; }
  const RawFeatures& scale() const { return scale_; }

  nlohmann::json to_json() const;
  static FeatureNormalizer from_json(const nlohmann::json& j);

 private:
  std::size_t count_ = 0;
  RawFeatures mean_{};
  RawFeatures m2_{};
  RawFeatures scale_{};
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Reward

enum class RewardWeighting { unit, inverse_abs, explicit_weights };

/// Sum of eta_k * r_k.
double compute_reward(std::span<const double> increments, std::span<const double> etas);

/// Per-product contributions eta_k * r_k. For inverse_abs this is sign(r_k),
/// so zero increments contribute 0.
std::vector<double> weighted_increments(std::span<const double> increments, RewardWeighting weighting,
                                        std::span<const double> explicit_etas = {});
double compute_reward(std::span<const double> increments, RewardWeighting weighting,
                      std::span<const double> explicit_etas = {});

/// eta_k = 1/|r_k|, with eta_k = 0 when r_k = 0.
std::vector<double> inverse_abs_etas(std::span<const double> increments);

// ---------------------------------------------------------------------------
// Environment

struct NoiseConfig {
  bool sample_auction = true;
  double organic_sigma = 0.0;
  bool sample_rec_clicks = true;

  static NoiseConfig none() { return NoiseConfig{false, 0.0, false}; }
  bool is_noise_free() const { return !sample_auction && organic_sigma == 0.0 && !sample_rec_clicks; }
};

struct EnvConfig {
  std::vector<Product> products;
  AuctionSettings auction{2000, 3, 0.8};
  double range = 1.0;
  int horizon = 7;
  double gamma = 0.9;
  double rec_ctr_scale = 0.05;  // recommendation click rate = scale * z
  NoiseConfig noise;
  RewardWeighting weighting = RewardWeighting::unit;
  std::vector<double> etas;  // for explicit_weights, one per target
  int calibration_episodes = 8;
  std::uint64_t calibration_seed = 0x5eed;

  std::vector<int> target_ids() const;
  std::size_t num_targets() const;
  void validate() const;

  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& j);
  static EnvConfig load(const std::string& path);
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  std::vector<double> alphas;                // clipped actions applied
  std::vector<double> increments;            // organic(policy) - organic(manual), per target
  std::vector<double> weighted;              // eta_k * increments_k
  std::vector<double> organic;               // policy rollout organic impressions
  std::vector<double> organic_manual;        // paired manual rollout
  std::vector<double> business;              // policy rollout business impressions
  std::vector<double> business_manual;
};

struct EpisodeLogRow {
  int t;
  int product;
  double pv_ad, click_ad, pv_rec, z, alpha, reward;
};

class Environment {
 public:
  /// Builds the environment and fits the feature normalizer on calibration
  /// rollouts (random constant bid ratios, calibration seeds).
  explicit Environment(EnvConfig config);
  Environment(EnvConfig config, FeatureNormalizer normalizer);

  const MarketState& reset(std::uint64_t seed);
  StepResult step(std::span<const double> alphas);

  const MarketState& state() const { return state_; }
  bool done() const { return done_; }
  int t() const { return state_.t; }
  std::uint64_t seed() const { return seed_; }

  const EnvConfig& config() const { return config_; }
  const std::vector<int>& target_ids() const { return target_ids_; }
  const std::vector<int>& target_index() const { return target_index_; }
  std::size_t num_targets() const { return target_ids_.size(); }
  const FeatureNormalizer& normalizer() const { return normalizer_; }

  /// Normalized 16-dim state of one target product.
  std::vector<double> assemble_state(int product_id) const;
  /// Normalized states of all targets, one column each.
  Eigen::MatrixXd state_matrix() const;
  Eigen::MatrixXd state_matrix(const MarketState& s) const;
  RawFeatures raw_state(int product_id) const;

  /// Current scores of the policy rollout, in target order.
  const std::vector<double>& scores() const { return z_policy_; }
  const std::vector<double>& manual_scores() const { return z_manual_; }

  void set_logging(bool on) { logging_ = on; }
  const std::vector<EpisodeLogRow>& log() const { return log_; }
  std::string log_csv() const;

 private:
  void calibrate();
  std::vector<double> manual_bids() const;
  std::size_t target_slot(int product_id) const;

  EnvConfig config_;
  std::vector<int> target_ids_;
  std::vector<int> target_index_;  // index into config_.products per target
  FeatureNormalizer normalizer_;

  std::uint64_t seed_ = 0;
  MarketState state_;
  bool done_ = true;
  bool started_ = false;
  std::vector<double> z_policy_, z_manual_;
  bool logging_ = false;
  std::vector<EpisodeLogRow> log_;
};

}  // namespace leverbid
