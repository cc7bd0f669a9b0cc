#include "leverbid/exposure_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>

#include <nlohmann/json.hpp>

#include "leverbid/io.hpp"
#include "leverbid/market.hpp"

namespace leverbid {

FittedExposureFn::FittedExposureFn(std::vector<ExposureSample> samples, double bandwidth) : bandwidth_(bandwidth) {
  if (samples.empty()) throw InsufficientDataError("fitted exposure curve needs samples");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.p < b.p; });
  p_.reserve(samples.size());
  z_.reserve(samples.size());
  for (const auto& s : samples) {
    if (!std::isfinite(s.p) || !std::isfinite(s.z_next) || s.p < 0.0 || s.z_next < 0.0 || s.z_next > 1.0) {
      throw std::invalid_argument("exposure samples need finite p >= 0 and z_next in [0,1]");
    }
    p_.push_back(s.p);
    z_.push_back(s.z_next);
  }
  p_min_ = p_.front();
  p_max_ = p_.back();
}

double silverman_bandwidth(const std::vector<double>& x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 1.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(n, -0.2);
  return h > 0.0 ? h : 1.0;
}

double cv_bandwidth(const std::vector<ExposureSample>& samples) {
  const std::size_t n = samples.size();
  if (n < 3) throw InsufficientDataError("cv_bandwidth needs at least 3 samples");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = samples[i].p;

  double best_h = silverman_bandwidth(p);
  double best_err = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 12; ++j) {
    const double h = silverman_bandwidth(p) * std::pow(0.5, 0.5 * j);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double num = 0.0, den = 0.0, nearest = std::numeric_limits<double>::infinity(), z_near = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        const double u = (p[k] - p[i]) / h;
        const double w = std::exp(-0.5 * u * u);
        num += w * samples[k].z_next;
        den += w;
        if (std::abs(u) < nearest) {
          nearest = std::abs(u);
          z_near = samples[k].z_next;
        }
      }
      const double fit = den > 1e-300 ? num / den : z_near;
      err += (fit - samples[i].z_next) * (fit - samples[i].z_next);
    }
    if (err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  return best_h;
}

FittedExposureFn fit_exposure(const std::vector<ExposureSample>& samples, std::optional<double> bandwidth) {
  if (samples.size() < 5) {
    throw InsufficientDataError("fit_exposure needs at least 5 samples, got " + std::to_string(samples.size()));
  }
  std::vector<double> p;
  p.reserve(samples.size());
  for (const auto& s : samples) p.push_back(s.p);
  return FittedExposureFn(samples, bandwidth.value_or(silverman_bandwidth(p)));
}

double eval_fit(const FittedExposureFn& f, double p) {
  const double q = std::clamp(p, f.p_min_, f.p_max_);
  const double inv2h2 = 1.0 / (2.0 * f.bandwidth_ * f.bandwidth_);
  // Only samples within 8 bandwidths carry non-negligible weight.
  const double reach = 8.0 * f.bandwidth_;
  const auto lo = std::lower_bound(f.p_.begin(), f.p_.end(), q - reach) - f.p_.begin();
  const auto hi = std::upper_bound(f.p_.begin(), f.p_.end(), q + reach) - f.p_.begin();
  double wsum = 0.0, acc = 0.0;
  for (auto i = lo; i < hi; ++i) {
    const double d = f.p_[static_cast<std::size_t>(i)] - q;
    const double w = std::exp(-d * d * inv2h2);
    wsum += w;
    acc += w * f.z_[static_cast<std::size_t>(i)];
  }
  double z;
  if (wsum > 0.0) {
    z = acc / wsum;
  } else {
    // Every sample is far away: fall back to the nearest one.
    const auto it = std::lower_bound(f.p_.begin(), f.p_.end(), q);
    std::size_t idx = static_cast<std::size_t>(it - f.p_.begin());
    if (idx == f.p_.size() || (idx > 0 && q - f.p_[idx - 1] < f.p_[idx] - q)) --idx;
    z = f.z_[idx];
  }
  return std::clamp(z, 0.0, 1.0);
}

nlohmann::json fit_to_json(const FittedExposureFn& f) {
  return {{"bandwidth", f.bandwidth()}, {"p", f.exposures()}, {"z_next", f.scores()}};
}

FittedExposureFn fit_from_json(const nlohmann::json& j) {
  const auto p = j.at("p").get<std::vector<double>>();
  const auto z = j.at("z_next").get<std::vector<double>>();
  if (p.size() != z.size()) throw std::invalid_argument("fit json: p and z_next lengths differ");
  std::vector<ExposureSample> s;
  for (std::size_t i = 0; i < p.size(); ++i) s.push_back({p[i], z[i]});
  return FittedExposureFn(std::move(s), j.at("bandwidth").get<double>());
}

SampleLog collect_exposure_samples(const EnvConfig& config, int episodes, std::uint64_t seed) {
  Environment env(config);
  SampleLog log;
  std::mt19937_64 rng(derive_seed(seed, 0x106));
  std::uniform_real_distribution<double> alpha(-config.range, config.range);
  const auto& targets = env.target_index();
  std::vector<double> alphas(env.num_targets());
  auto record = [&](std::span<const double> organic, std::span<const double> business) {
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const Product& p = config.products[static_cast<std::size_t>(targets[k])];
      const double b = business[k];
      const double lift = b > 0.0 ? p.shift.mu * p.business_quality : 0.0;
      const double z_next = env.scores()[k];
      // Scores clamped at 0 or 1 hide the underlying curve value.
      if (z_next <= 0.0 || z_next >= 1.0) continue;
      log[p.id].push_back({organic[k] + p.shift.lambda * b, std::clamp(z_next - lift, 0.0, 1.0)});
    }
  };
  std::vector<double> organic(targets.size()), business(targets.size());
  for (int ep = 0; ep < episodes; ++ep) {
    const MarketState& warm = env.reset(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    for (std::size_t k = 0; k < targets.size(); ++k) {
      organic[k] = warm.x.entries[k].pv_rec;
      business[k] = warm.o.entries[k].pv_ad;
    }
    record(organic, business);
    while (!env.done()) {
      for (auto& a : alphas) a = alpha(rng);
      const StepResult r = env.step(alphas);
      record(r.organic, r.business);
    }
  }
  return log;
}

void write_sample_log(const SampleLog& log, const std::filesystem::path& path) {
  io::CsvWriter csv({"product_id", "window", "p", "z_next"});
  for (const auto& [id, samples] : log) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      csv.row({std::to_string(id), std::to_string(i), io::format_double(samples[i].p),
               io::format_double(samples[i].z_next)});
    }
  }
  io::write_file_atomic(path, csv.str());
}

SampleLog read_sample_log(const std::filesystem::path& path) {
  const auto t = io::read_csv(path);
  const auto c_id = t.column("product_id");
  const auto c_p = t.column("p");
  const auto c_z = t.column("z_next");
  SampleLog log;
  for (const auto& row : t.rows) log[std::stoi(row[c_id])].push_back({std::stod(row[c_p]), std::stod(row[c_z])});
  return log;
}

std::map<int, FittedExposureFn> fit_all(const SampleLog& log, BandwidthRule rule) {
  std::map<int, FittedExposureFn> fits;
  for (const auto& [id, samples] : log) {
    std::optional<double> h;
    if (rule == BandwidthRule::cross_validated && samples.size() >= 5) h = cv_bandwidth(samples);
    fits.emplace(id, fit_exposure(samples, h));
  }
  return fits;
}

EnvConfig replay_config_from_fit(const std::map<int, FittedExposureFn>& fits, const EnvConfig& config) {
  EnvConfig out = config;
  for (auto& p : out.products) {
    if (!p.target) continue;
    const auto it = fits.find(p.id);
    if (it == fits.end()) throw std::invalid_argument("no exposure fit for target product " + std::to_string(p.id));
    p.exposure_effect.fitted = std::make_shared<FittedExposureFn>(it->second);
  }
  return out;
}

Environment replay_env_from_fit(const std::map<int, FittedExposureFn>& fits, const EnvConfig& config) {
  return Environment(replay_config_from_fit(fits, config));
}

}  // namespace leverbid
