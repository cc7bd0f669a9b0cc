#pragma once

#include <memory>

namespace leverbid {

class FittedExposureFn;

/// Expected organic impressions per window as a function of the average
/// recommended score: zero up to `threshold`, then a saturating rise.
struct TrafficWinFn {
  double threshold = 0.0;
  double saturation = 1.0;
  double steepness = 1.0;

  double operator()(double z) const;
  double derivative(double z) const;
  void validate() const;
};

/// Next-window recommended score as a function of this window's exposure.
///
/// The parametric form rises to `peak_score` at `peak_exposure` and decays
/// toward `floor_score` afterwards:
///
///   U(p) = floor + (peak - floor) * (r * exp(1 - r))^decay,  r = p / peak_exposure
///
/// When `fitted` is set the kernel estimate replaces the parametric form.
/// `offset` and `lift` describe an advertising shift: the curve is evaluated
/// as clamp(U(p + offset) + lift, 0, 1).
struct ExposureEffectFn {
  double peak_exposure = 1.0;
  double peak_score = 0.5;
  double floor_score = 0.0;
  double decay = 1.0;
  std::shared_ptr<const FittedExposureFn> fitted;
  double offset = 0.0;
  double lift = 0.0;

  double operator()(double p) const;
  double base(double p) const;  // unshifted, unclamped curve
  void validate() const;
};

/// Magnitude of the advertising shift of U: business impressions count as
/// `lambda` organic impressions (leftward shift) and any advertising adds
/// `mu * quality` to the score (upward shift; negative quality shifts down).
struct AdShift {
  double lambda = 1.0;
  double mu = 0.05;
};

/// The curve U shifted by a window's business traffic:
/// p -> clamp(U(p + lambda*business) + mu*quality*[business > 0], 0, 1).
ExposureEffectFn shifted_exposure(const ExposureEffectFn& u, double business_pv, double quality,
                                  AdShift shift = {});

}  // namespace leverbid
