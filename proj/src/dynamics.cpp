#include "leverbid/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "leverbid/evaluation.hpp"
#include "leverbid/io.hpp"
#include "leverbid/market.hpp"

namespace leverbid {

std::vector<ChainPoint> simulate_chain(const TrafficWinFn& T, const ExposureEffectFn& U, double p0, int steps) {
  if (!(p0 >= 0.0)) throw std::invalid_argument("simulate_chain: p0 must be >= 0");
  if (steps < 1) throw std::invalid_argument("simulate_chain: steps must be >= 1");
  std::vector<ChainPoint> out;
  out.reserve(static_cast<std::size_t>(steps));
  double p = p0;
  for (int t = 0; t < steps; ++t) {
    const double z = U(p);
    p = T(z);
    out.push_back({z, p});
  }
  return out;
}

namespace {

double composed(const TrafficWinFn& T, const ExposureEffectFn& U, double p) { return T(U(p)); }

double gap(const TrafficWinFn& T, const ExposureEffectFn& U, double p) { return composed(T, U, p) - p; }

double slope_at(const TrafficWinFn& T, const ExposureEffectFn& U, double p) {
  const double h = 1e-6 * std::max(1.0, p);
  const double lo = std::max(0.0, p - h);
  return (composed(T, U, p + h) - composed(T, U, lo)) / (p + h - lo);
}

}  // namespace

FixedPointReport fixed_points(const TrafficWinFn& T, const ExposureEffectFn& U, double search_max) {
  if (!(search_max > 0.0)) throw std::invalid_argument("fixed_points: search_max must be > 0");
  constexpr int kGrid = 10000;
  constexpr double kTol = 1e-10;
  std::vector<double> roots;
  double prev_p = 0.0;
  double prev_g = gap(T, U, 0.0);
  if (prev_g == 0.0) roots.push_back(0.0);
  for (int i = 1; i <= kGrid; ++i) {
    const double p = search_max * static_cast<double>(i) / kGrid;
    const double g = gap(T, U, p);
    if (g == 0.0) {
      roots.push_back(p);
    } else if (prev_g != 0.0 && std::signbit(g) != std::signbit(prev_g)) {
      double lo = prev_p, hi = p, glo = prev_g;
      while (hi - lo > kTol) {
        const double mid = 0.5 * (lo + hi);
        const double gm = gap(T, U, mid);
        if (gm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (std::signbit(gm) == std::signbit(glo)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(std::abs(gap(T, U, lo)) <= std::abs(gap(T, U, hi)) ? lo : hi);
    }
    prev_p = p;
    prev_g = g;
  }

  FixedPointReport r;
  for (double p : roots) {
    const double s = slope_at(T, U, p);
    r.points.push_back({p, std::abs(s) < 1.0 ? Stability::stable : Stability::unstable, s});
  }
  for (const auto& fp : r.points) {
    if (fp.p > 0.0 && fp.stability == Stability::unstable && !r.cold_start_point) r.cold_start_point = fp.p;
    if (fp.p > 0.0 && fp.stability == Stability::stable) r.stable_point = fp.p;
  }
  return r;
}

nlohmann::json to_json(const FixedPointReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& fp : r.points) {
    pts.push_back({{"p", fp.p}, {"stability", fp.stability == Stability::stable ? "stable" : "unstable"},
                   {"slope", fp.slope}});
  }
  nlohmann::json j{{"points", pts}};
  j["cold_start_point"] = r.cold_start_point ? nlohmann::json(*r.cold_start_point) : nlohmann::json(nullptr);
  j["stable_point"] = r.stable_point ? nlohmann::json(*r.stable_point) : nlohmann::json(nullptr);
  return j;
}

std::string curve_samples_csv(const TrafficWinFn& T, const ExposureEffectFn& U, double p_max, int points) {
  io::CsvWriter csv({"p", "z", "traffic"});
  for (int i = 0; i < points; ++i) {
    const double p = points > 1 ? p_max * i / (points - 1) : 0.0;
    const double z = U(p);
    csv.row({io::format_double(p), io::format_double(z), io::format_double(T(z))});
  }
  return csv.str();
}

// ---------------------------------------------------------------------------

Bucket bucket_of(double x) {
  if (x <= -0.5) return Bucket::below_m50;
  if (x <= -0.1) return Bucket::m50_m10;
  if (x <= 0.0) return Bucket::m10_0;
  if (x <= 0.1) return Bucket::p0_10;
  if (x <= 0.5) return Bucket::p10_50;
  return Bucket::above_50;
}

const char* label(Bucket b) { return kBucketLabels[static_cast<std::size_t>(b)]; }

PhenomenonReport classify_phenomenon(const std::vector<double>& before, const std::vector<double>& during,
                                     const std::vector<double>& after) {
  if (before.empty() || during.empty() || after.empty()) {
    throw std::invalid_argument("classify_phenomenon: every stage needs at least one window");
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double be = mean(before), wh = mean(during), af = mean(after);
  auto rel = [](double now, double ref) { return (now - ref) / std::max(ref, 1.0); };
  PhenomenonReport r;
  r.wh_vs_be = rel(wh, be);
  r.af_vs_wh = rel(af, wh);
  r.af_vs_be = rel(af, be);
  r.wh_vs_be_bucket = bucket_of(r.wh_vs_be);
  r.af_vs_wh_bucket = bucket_of(r.af_vs_wh);
  r.af_vs_be_bucket = bucket_of(r.af_vs_be);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> bid_ratio_sweep(const EnvConfig& config, const std::vector<double>& ratios,
                                      const std::vector<std::uint64_t>& seeds) {
  Environment env(config);
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    if (std::abs(ratio) > config.range) throw std::invalid_argument("bid_ratio_sweep: ratio outside [-range, range]");
    SweepRow row{ratio, 0.0, 0.0, {}, {}};
    const Policy policy = fixed_policy(ratio);
    for (auto seed : seeds) {
      const EpisodeOutcome out = run_episode(env, seed, policy);
      row.business_per_seed.push_back(out.business_increment);
      row.organic_per_seed.push_back(out.organic_increment);
    }
    if (!seeds.empty()) {
      row.business_increment = std::accumulate(row.business_per_seed.begin(), row.business_per_seed.end(), 0.0) / seeds.size();
      row.organic_increment = std::accumulate(row.organic_per_seed.begin(), row.organic_per_seed.end(), 0.0) / seeds.size();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  io::CsvWriter csv({"ratio", "business_increment", "organic_increment"});
  for (const auto& r : rows) {
    csv.row({io::format_double(r.ratio), io::format_double(r.business_increment), io::format_double(r.organic_increment)});
  }
  return csv.str();
}

}  // namespace leverbid
