#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smartlab/devices.hpp"
#include "smartlab/error.hpp"
#include "smartlab/market.hpp"

namespace smartlab::aggregation {

struct CapabilityEnvelope {
  std::string aggregator_id;
  std::string bus_id;
  std::string device_id;
  double p_min_kw = 0.0;
  double p_max_kw = 0.0;
  double p_current_kw = 0.0;
  double timestamp = 0.0;

  double headroom_kw() const noexcept { return p_max_kw - p_current_kw; }
  double footroom_kw() const noexcept { return p_current_kw - p_min_kw; }
};

inline void validate(const CapabilityEnvelope& env) {
  if (!(env.p_min_kw <= env.p_current_kw && env.p_current_kw <= env.p_max_kw)) {
    throw Error(Errc::invalid_device, "envelope of '" + env.device_id + "' violates p_min <= p_current <= p_max");
  }
}

struct LadderRung {
  double fraction = 1.0;
  double price_eur_mwh = 0.0;

  bool operator==(const LadderRung&) const = default;
};

using PriceLadder = std::vector<LadderRung>;

inline void validate(const PriceLadder& ladder) {
  double sum = 0.0;
  for (const auto& r : ladder) {
    if (!(r.fraction > 0) || !std::isfinite(r.price_eur_mwh)) {
      throw Error(Errc::invalid_ladder, "ladder fractions must be positive and prices finite");
    }
    sum += r.fraction;
  }
  if (ladder.empty() || std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::invalid_ladder, "ladder fractions must sum to 1");
  }
}

namespace detail {

inline void partition(std::vector<market::Bid>& out, const CapabilityEnvelope& env, const PriceLadder& ladder,
                      market::Direction dir, double room) {
  if (room <= 0) return;
  double assigned = 0.0;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    // The last rung takes the remainder so the rungs sum to `room` exactly.
    const double qty = k + 1 == ladder.size() ? room - assigned : room * ladder[k].fraction;
    assigned += qty;
    if (qty <= 0) continue;
    std::string id = env.aggregator_id + "/" + (env.device_id.empty() ? env.bus_id : env.device_id) + "/" +
                     market::to_string(dir) + "/" + std::to_string(k);
    out.push_back({std::move(id), env.aggregator_id, env.bus_id, dir, qty, ladder[k].price_eur_mwh});
  }
}

}  // namespace detail

/// Splits headroom into up-bids and footroom into down-bids along the ladder
/// rungs. An empty ladder disables that direction.
inline std::vector<market::Bid> build_bids_from_capability(const CapabilityEnvelope& env, const PriceLadder& up_ladder,
                                                           const PriceLadder& down_ladder) {
  validate(env);
  if (!up_ladder.empty()) validate(up_ladder);
  if (!down_ladder.empty()) validate(down_ladder);
  std::vector<market::Bid> out;
  if (!up_ladder.empty()) detail::partition(out, env, up_ladder, market::Direction::up, env.headroom_kw());
  if (!down_ladder.empty()) detail::partition(out, env, down_ladder, market::Direction::down, env.footroom_kw());
  return out;
}

inline std::vector<market::Bid> build_bids_from_capability(const CapabilityEnvelope& env, const PriceLadder& ladder) {
  validate(ladder);
  return build_bids_from_capability(env, ladder, ladder);
}

// ---------------------------------------------------------------------------
// Disaggregation and the DMS / PPC chain
// ---------------------------------------------------------------------------

struct Disaggregation {
  std::vector<double> setpoints_kw;  // aligned with the envelope list
  double target_kw = 0.0;            // after clamping
  bool clamped = false;
};

/// Distributes `target_kw` over the devices in proportion to their headroom
/// (moves up) or footroom (moves down) relative to the current operating point.
inline Disaggregation disaggregate(double target_kw, const std::vector<CapabilityEnvelope>& envelopes) {
  if (envelopes.empty()) throw Error(Errc::empty_device_list, "nothing to disaggregate onto");
  double sum_min = 0, sum_max = 0, sum_cur = 0, sum_head = 0, sum_foot = 0;
  for (const auto& e : envelopes) {
    validate(e);
    sum_min += e.p_min_kw;
    sum_max += e.p_max_kw;
    sum_cur += e.p_current_kw;
    sum_head += e.headroom_kw();
    sum_foot += e.footroom_kw();
  }
  Disaggregation out;
  out.target_kw = std::clamp(target_kw, sum_min, sum_max);
  out.clamped = out.target_kw != target_kw;
  const double delta = out.target_kw - sum_cur;
  out.setpoints_kw.reserve(envelopes.size());
  for (const auto& e : envelopes) {
    double sp = e.p_current_kw;
    if (delta > 0 && sum_head > 0) sp += delta * e.headroom_kw() / sum_head;
    if (delta < 0 && sum_foot > 0) sp += delta * e.footroom_kw() / sum_foot;
    out.setpoints_kw.push_back(std::clamp(sp, e.p_min_kw, e.p_max_kw));
  }
  return out;
}

struct DmsState {
  double target_kw = 0.0;
  std::map<std::string, double> last_setpoints;  // by device id
  double ramp_kw_per_cycle = 100.0;
  double cycle_s = 10.0;
};

/// One DMS control cycle: computes the ideal split of `target_kw` and moves
/// each device's setpoint toward it by at most the ramp limit.
inline std::vector<double> dms_step(DmsState& state, double target_kw, const std::vector<CapabilityEnvelope>& envelopes) {
  if (!(state.ramp_kw_per_cycle > 0)) throw Error(Errc::invalid_device, "ramp must be positive");
  const auto ideal = disaggregate(target_kw, envelopes);
  state.target_kw = ideal.target_kw;
  std::vector<double> emitted;
  emitted.reserve(envelopes.size());
  for (std::size_t i = 0; i < envelopes.size(); ++i) {
    const auto& id = envelopes[i].device_id;
    auto it = state.last_setpoints.find(id);
    const double last = it == state.last_setpoints.end() ? envelopes[i].p_current_kw : it->second;
    const double step = std::clamp(ideal.setpoints_kw[i] - last, -state.ramp_kw_per_cycle, state.ramp_kw_per_cycle);
    const double next = last + step;
    state.last_setpoints[id] = next;
    emitted.push_back(next);
  }
  return emitted;
}

/// Applies a DMS setpoint to the inverter and returns the measured output.
inline double ppc_execute(double setpoint_kw, devices::PvInverter& pv, double irradiance) {
  return devices::pv_step(pv, irradiance, setpoint_kw);
}

// ---------------------------------------------------------------------------
// Price-based aggregation
// ---------------------------------------------------------------------------

/// Two-level price switch: the activation price while a signal is valid,
/// otherwise the base price.
inline double price_signal_from_activation(const std::optional<market::ActivationSignal>& signal, double now,
                                           double base_price, double activation_price) {
  if (!(activation_price < base_price)) {
    throw Error(Errc::invalid_prices, "activation price must be below the base price");
  }
  return signal && signal->valid_at(now) ? activation_price : base_price;
}

struct ResponseRecord {
  int round_index = 0;
  double activation_kw = 0.0;
  double measured_delta_kw = 0.0;  // signed, positive in the activated direction
  std::vector<bool> heater_states;
};

struct ResponseLog {
  std::vector<ResponseRecord> records;
};

inline constexpr double kResponseDeadBand = 0.10;

inline bool activation_issued(const ResponseRecord& r) { return r.activation_kw > 0; }

inline bool response_observed(const ResponseRecord& r) {
  return r.measured_delta_kw > kResponseDeadBand * r.activation_kw && r.measured_delta_kw > 1e-9;
}

/// Share of rounds where an activation was issued but not followed, or a
/// response appeared without an activation.
inline double response_mismatch(const ResponseLog& log) {
  if (log.records.empty()) throw Error(Errc::empty_log, "response log has no records");
  std::size_t mismatched = 0;
  for (const auto& r : log.records) {
    if (activation_issued(r) != response_observed(r)) ++mismatched;
  }
  return static_cast<double>(mismatched) / static_cast<double>(log.records.size());
}

inline ResponseLog activated_rounds(const ResponseLog& log) {
  ResponseLog out;
  for (const auto& r : log.records) {
    if (activation_issued(r)) out.records.push_back(r);
  }
  return out;
}

/// Mean of |activation - measured| / activation over activated rounds; 0 when
/// nothing was activated.
inline double response_tracking_error(const ResponseLog& log) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log.records) {
    if (!activation_issued(r)) continue;
    sum += std::abs(r.activation_kw - r.measured_delta_kw) / r.activation_kw;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Picks which houses receive the activation price so that their rated power
/// best matches `activation_kw`. Candidates are idle heaters, coldest first;
/// the chosen set is the prefix whose rated sum is closest to the request.
inline std::vector<std::size_t> select_houses(const std::vector<devices::PoolHouse>& houses, double activation_kw) {
  std::vector<std::size_t> idle;
  for (std::size_t i = 0; i < houses.size(); ++i) {
    if (!houses[i].heater_on) idle.push_back(i);
  }
  std::stable_sort(idle.begin(), idle.end(),
                   [&](std::size_t a, std::size_t b) { return houses[a].temp_c < houses[b].temp_c; });
  std::size_t best_k = 0;
  double best_err = activation_kw;
  double sum = 0.0;
  for (std::size_t k = 0; k < idle.size(); ++k) {
    sum += houses[idle[k]].heater_kw;
    const double err = std::abs(sum - activation_kw);
    if (err < best_err) {
      best_err = err;
      best_k = k + 1;
    }
  }
  idle.resize(best_k);
  return idle;
}

}  // namespace smartlab::aggregation
