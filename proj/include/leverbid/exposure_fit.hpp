#pragma once

// Nonparametric estimate of a product's exposure-effect curve from logged
// (exposure, next-window score) pairs, and a replay environment that uses
// the estimates in place of the parametric curves.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace leverbid {

struct EnvConfig;
class Environment;

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExposureSample {
  double p = 0.0;       // exposure in window t
  double z_next = 0.0;  // average recommended score in window t+1
};

/// Nadaraya-Watson regression with a Gaussian kernel.
class FittedExposureFn {
 public:
  FittedExposureFn(std::vector<ExposureSample> samples, double bandwidth);

  double bandwidth() const { return bandwidth_; }
  const std::vector<double>& exposures() const { return p_; }
  const std::vector<double>& scores() const { return z_; }
  double min_exposure() const { return p_min_; }
  double max_exposure() const { return p_max_; }

  friend double eval_fit(const FittedExposureFn& f, double p);

 private:
  std::vector<double> p_, z_;
  double bandwidth_;
  double p_min_, p_max_;
};

/// Silverman's rule of thumb, 0.9 * min(sd, IQR/1.34) * n^(-1/5).
double silverman_bandwidth(const std::vector<double>& x);

/// Bandwidth minimizing the leave-one-out squared error over a halving grid
/// that starts at the Silverman value.
double cv_bandwidth(const std::vector<ExposureSample>& samples);

enum class BandwidthRule { silverman, cross_validated };

FittedExposureFn fit_exposure(const std::vector<ExposureSample>& samples, std::optional<double> bandwidth = {});

/// Kernel-weighted prediction clamped to [0,1]. Queries outside the sampled
/// exposure range are evaluated at the nearest boundary.
double eval_fit(const FittedExposureFn& f, double p);

nlohmann::json fit_to_json(const FittedExposureFn& f);
FittedExposureFn fit_from_json(const nlohmann::json& j);

using SampleLog = std::map<int, std::vector<ExposureSample>>;

/// Logs (p, z_next) pairs from the parametric environment under random bid
/// ratios. p counts business impressions at their lambda weight and z_next
/// has the known advertising lift removed, so the pairs sample U itself.
SampleLog collect_exposure_samples(const EnvConfig& config, int episodes, std::uint64_t seed);

/// CSV with columns product_id, window, p, z_next.
void write_sample_log(const SampleLog& log, const std::filesystem::path& path);
SampleLog read_sample_log(const std::filesystem::path& path);

std::map<int, FittedExposureFn> fit_all(const SampleLog& log, BandwidthRule rule = BandwidthRule::silverman);

/// Copy of `config` whose target products use the fitted curves.
EnvConfig replay_config_from_fit(const std::map<int, FittedExposureFn>& fits, const EnvConfig& config);
Environment replay_env_from_fit(const std::map<int, FittedExposureFn>& fits, const EnvConfig& config);

}  // namespace leverbid
