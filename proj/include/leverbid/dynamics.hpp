#pragma once

// Analysis of the organic-traffic map p -> T(U(p)): chain simulation, fixed
// points and their stability, advertising shifts of U, stage-wise phenomenon
// classification and fixed bid-ratio sweeps.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "leverbid/curves.hpp"

namespace leverbid {

struct EnvConfig;

struct ChainPoint {
  double z;  // z_t = U(p_{t-1})
  double p;  // p_t = T(z_t)
};

/// Iterates z_t = U(p_{t-1}), p_t = T(z_t) from p_0 for `steps` steps.
std::vector<ChainPoint> simulate_chain(const TrafficWinFn& T, const ExposureEffectFn& U, double p0, int steps);

enum class Stability { stable, unstable };

struct FixedPoint {
  double p;
  Stability stability;
  double slope;  // d(T o U)/dp at p
};

struct FixedPointReport {
  std::vector<FixedPoint> points;       // ascending
  std::optional<double> cold_start_point;  // smallest positive unstable root (A)
  std::optional<double> stable_point;      // largest positive stable root (B)
};

/// Roots of T(U(p)) - p on [0, search_max]: sign scan over 10^4 intervals,
/// bisection to 1e-10, stability from |slope| < 1.
FixedPointReport fixed_points(const TrafficWinFn& T, const ExposureEffectFn& U, double search_max);

nlohmann::json to_json(const FixedPointReport& r);

/// (p, z = U(p), T(z)) samples on [0, p_max] for plotting.
std::string curve_samples_csv(const TrafficWinFn& T, const ExposureEffectFn& U, double p_max, int points);

// ---------------------------------------------------------------------------

enum class Bucket { below_m50, m50_m10, m10_0, p0_10, p10_50, above_50 };
inline constexpr std::array<const char*, 6> kBucketLabels = {"<-50%", "(-50%,-10%]", "(-10%,0]",
                                                             "(0,10%]", "(10%,50%]", ">50%"};

/// Interval of a relative change; intervals are closed on the right.
Bucket bucket_of(double relative_change);
const char* label(Bucket b);

struct PhenomenonReport {
  double wh_vs_be, af_vs_wh, af_vs_be;
  Bucket wh_vs_be_bucket, af_vs_wh_bucket, af_vs_be_bucket;
};

/// Compares mean organic traffic before, during and after advertising.
/// Relative changes use max(reference mean, 1) as the denominator.
PhenomenonReport classify_phenomenon(const std::vector<double>& before, const std::vector<double>& during,
                                     const std::vector<double>& after);

// ---------------------------------------------------------------------------

struct SweepRow {
  double ratio;
  double business_increment;  // mean over seeds of episode business impressions vs manual
  double organic_increment;   // mean over seeds of episode organic impressions vs manual
  std::vector<double> business_per_seed;
  std::vector<double> organic_per_seed;
};

/// Fixed bid-ratio policies against the paired manual baseline.
std::vector<SweepRow> bid_ratio_sweep(const EnvConfig& config, const std::vector<double>& ratios,
                                      const std::vector<std::uint64_t>& seeds);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace leverbid
