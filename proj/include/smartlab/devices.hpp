#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "smartlab/error.hpp"

namespace smartlab::devices {

/// Curtailable PV inverter. Capability is `nominal_kw * scale_factor`; the
/// output follows the lower of availability and the active setpoint limit.
struct PvInverter {
  std::string device_id;
  double nominal_kw = 5.0;
  double scale_factor = 1.0;
  double available_kw = 0.0;
  double setpoint_limit_kw = 0.0;
  double output_kw = 0.0;

  double capability_kw() const noexcept { return nominal_kw * scale_factor; }

  bool operator==(const PvInverter&) const = default;
};

inline double pv_step(PvInverter& pv, double irradiance_fraction, double setpoint_limit_kw) {
  if (setpoint_limit_kw < 0) {
    throw Error(Errc::negative_setpoint, "setpoint " + std::to_string(setpoint_limit_kw) + " kW");
  }
  const double irr = std::clamp(irradiance_fraction, 0.0, 1.0);
  pv.available_kw = irr * pv.capability_kw();
  pv.setpoint_limit_kw = setpoint_limit_kw;
  pv.output_kw = std::min(pv.available_kw, pv.setpoint_limit_kw);
  return pv.output_kw;
}

/// Rescales the capability envelope (and current operating point) to
/// `factor` times the nominal rating.
inline PvInverter scale_device(PvInverter pv, double factor) {
  if (!(factor >= 1.0)) throw Error(Errc::invalid_scale, "scale factor must be >= 1");
  const double ratio = factor / pv.scale_factor;
  pv.scale_factor = factor;
  pv.available_kw *= ratio;
  pv.setpoint_limit_kw *= ratio;
  pv.output_kw *= ratio;
  return pv;
}

// ---------------------------------------------------------------------------
// Pool heater
// ---------------------------------------------------------------------------

struct PoolHouse {
  std::string device_id;
  double temp_c = 26.0;
  double ambient_c = 20.0;
  double heater_kw = 3.0;
  double thermal_capacity_kwh_per_c = 60.0;
  double loss_coeff_kw_per_c = 0.3;
  double efficiency = 0.9;
  double comfort_min_c = 24.0;
  double comfort_max_c = 28.0;
  double price_threshold = 40.0;  // EUR/MWh
  bool heater_on = false;

  double consumption_kw() const noexcept { return heater_on ? heater_kw : 0.0; }

  bool operator==(const PoolHouse&) const = default;
};

inline void validate(const PoolHouse& h) {
  if (!(h.heater_kw > 0) || !(h.thermal_capacity_kwh_per_c > 0) || !(h.loss_coeff_kw_per_c > 0) ||
      !(h.efficiency > 0 && h.efficiency <= 1) || !(h.comfort_min_c < h.comfort_max_c)) {
    throw Error(Errc::invalid_device, "pool house '" + h.device_id + "' has invalid parameters");
  }
}

inline double pool_steady_state_c(const PoolHouse& h) {
  const double p_on = h.heater_on ? h.heater_kw : 0.0;
  return h.ambient_c + h.efficiency * p_on / h.loss_coeff_kw_per_c;
}

/// Exact exponential update of the lumped first-order pool model over `dt`
/// seconds. Stores and returns the new temperature.
inline double pool_thermal_step(PoolHouse& h, double dt) {
  if (!(dt > 0)) throw Error(Errc::non_positive_dt, "dt must be positive");
  const double c_kws = h.thermal_capacity_kwh_per_c * 3600.0;
  const double t_ss = pool_steady_state_c(h);
  h.temp_c = t_ss + (h.temp_c - t_ss) * std::exp(-h.loss_coeff_kw_per_c * dt / c_kws);
  return h.temp_c;
}

/// Local heater rules: comfort override below the band, saturation at or
/// above its top, and price-following inside it.
inline bool heater_decision(PoolHouse& h, double broadcast_price) {
  if (h.temp_c < h.comfort_min_c) {
    h.heater_on = true;
  } else if (h.temp_c >= h.comfort_max_c) {
    h.heater_on = false;
  } else {
    h.heater_on = broadcast_price <= h.price_threshold;
  }
  return h.heater_on;
}

}  // namespace smartlab::devices
