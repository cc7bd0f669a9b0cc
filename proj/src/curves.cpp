#include "leverbid/curves.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "leverbid/exposure_fit.hpp"

namespace leverbid {

double TrafficWinFn::operator()(double z) const {
  if (z <= threshold) return 0.0;
  return saturation * (1.0 - std::exp(-steepness * (z - threshold)));
}

double TrafficWinFn::derivative(double z) const {
  if (z <= threshold) return 0.0;
  return saturation * steepness * std::exp(-steepness * (z - threshold));
}

void TrafficWinFn::validate() const {
  if (!(threshold >= 0.0)) throw std::invalid_argument("traffic_win.threshold must be >= 0");
  if (!(saturation > 0.0)) throw std::invalid_argument("traffic_win.saturation must be > 0");
  if (!(steepness > 0.0)) throw std::invalid_argument("traffic_win.steepness must be > 0");
}

double ExposureEffectFn::base(double p) const {
  if (fitted) return eval_fit(*fitted, std::max(p, 0.0));
  const double r = std::max(p, 0.0) / peak_exposure;
  const double shape = r * std::exp(1.0 - r);
  return floor_score + (peak_score - floor_score) * (decay == 1.0 ? shape : std::pow(shape, decay));
}

double ExposureEffectFn::operator()(double p) const {
  return std::clamp(base(p + offset) + lift, 0.0, 1.0);
}

void ExposureEffectFn::validate() const {
  if (fitted) return;
  if (!(peak_exposure > 0.0)) throw std::invalid_argument("exposure_effect.peak_exposure must be > 0");
  if (!(peak_score > 0.0 && peak_score < 1.0)) throw std::invalid_argument("exposure_effect.peak_score must lie in (0,1)");
  if (!(floor_score >= 0.0 && floor_score < peak_score)) {
    throw std::invalid_argument("exposure_effect.floor_score must lie in [0, peak_score)");
  }
  if (!(decay > 0.0)) throw std::invalid_argument("exposure_effect.decay must be > 0");
}

ExposureEffectFn shifted_exposure(const ExposureEffectFn& u, double business_pv, double quality, AdShift shift) {
  if (!(business_pv >= 0.0)) throw std::invalid_argument("shifted_exposure: business_pv must be >= 0");
  ExposureEffectFn out = u;
  out.offset += shift.lambda * business_pv;
  if (business_pv > 0.0) out.lift += shift.mu * quality;
  return out;
}

}  // namespace leverbid
