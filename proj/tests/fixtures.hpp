#pragma once

#include <string>
#include <vector>

#include "leverbid/market.hpp"

namespace fixtures {

inline std::string config_path(const std::string& name) { return std::string(LEVERBID_CONFIG_DIR) + "/" + name; }

inline leverbid::Product target(int id, double pctr, double bid) {
  leverbid::Product p;
  p.id = id;
  p.target = true;
  p.apctr_ad = pctr;
  p.apcvr_ad = 0.02;
  p.bid = bid;
  p.ppb = 50.0 + id;
  p.traffic_win = {0.3, 1500.0, 6.0};
  p.exposure_effect.peak_exposure = 900.0;
  p.exposure_effect.peak_score = 0.65;
  p.exposure_effect.floor_score = 0.2;
  p.z0_min = 0.2;
  p.z0_max = 0.6;
  return p;
}

inline leverbid::Product competitor(int id, double pctr, double bid) {
  leverbid::Product p;
  p.id = id;
  p.apctr_ad = pctr;
  p.bid = bid;
  return p;
}

/// Small market: three targets, four competitors.
inline leverbid::EnvConfig small_config(bool noise_free) {
  leverbid::EnvConfig c;
  c.products = {target(0, 0.03, 1.0), target(1, 0.025, 1.2), target(2, 0.04, 0.8)};
  c.products[1].exposure_effect.peak_exposure = 1500.0;
  c.products[1].business_quality = 0.3;
  c.products[2].traffic_win = {0.1, 2000.0, 4.0};
  for (int i = 0; i < 4; ++i) c.products.push_back(competitor(10 + i, 0.015 + 0.008 * i, 0.7 + 0.2 * i));
  c.auction = {500, 2, 0.5};
  c.horizon = 7;
  c.noise = noise_free ? leverbid::NoiseConfig::none() : leverbid::NoiseConfig{true, 0.05, true};
  c.calibration_episodes = 3;
  return c;
}

}  // namespace fixtures
