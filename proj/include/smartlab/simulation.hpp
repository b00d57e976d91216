#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smartlab/aggregation.hpp"
#include "smartlab/devices.hpp"
#include "smartlab/error.hpp"
#include "smartlab/gateway.hpp"
#include "smartlab/grid.hpp"
#include "smartlab/market.hpp"
#include "smartlab/netem.hpp"
#include "smartlab/scenario.hpp"
#include "smartlab/simcore.hpp"

namespace smartlab {

/// State at the end of one control cycle.
struct CycleRecord {
  int cycle = 0;
  double time_s = 0.0;
  double imbalance_kw = 0.0;
  int accepted_bids = 0;
  double accepted_kw = 0.0;
  double uncovered_kw = 0.0;
  double curtailed_kw = 0.0;
  std::optional<double> price_up;
  std::optional<double> price_down;
  double target_kw = 0.0;    // DMS-controlled PV: aggregate target after clamping
  double setpoint_kw = 0.0;  // ... emitted setpoints
  double output_kw = 0.0;    // ... measured output
  double scheduled_kw = 0.0;
  double device_output_kw = 0.0;
  double slack_residual_kw = 0.0;
  double delta_f_pu = 0.0;
  double agc_kw = 0.0;
  double activation_kw = 0.0;  // pool aggregator
  double measured_delta_kw = 0.0;
  double pool_consumption_kw = 0.0;
  int heaters_on = 0;
  int line_violations = 0;
  double max_line_loading = 0.0;
  std::vector<double> device_outputs_kw;
  std::size_t datagram_begin = 0;
  std::size_t datagram_end = 0;
};

struct RunResult {
  std::string scenario_name;
  std::uint64_t seed = 0;
  std::vector<std::string> device_ids;
  std::vector<CycleRecord> cycles;
  std::vector<netem::DeliveryOutcome> datagrams;
  aggregation::ResponseLog response;
  bool has_dms = false;
  bool has_pool = false;
};

/// Imbalance seen by the market: the scenario's base profile plus uniform
/// noise of half-width `noise_kw * amplitude`, redrawn every `hold_s`.
class ImbalanceProcess {
 public:
  ImbalanceProcess(ImbalanceConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed, "scenario.imbalance") {}

  double at(double t) {
    const auto period = static_cast<std::int64_t>(std::floor(t / cfg_.hold_s));
    while (period_ < period) {
      noise_ = 2.0 * rng_.uniform() - 1.0;
      ++period_;
    }
    return cfg_.base_kw.at(t) + cfg_.amplitude * cfg_.noise_kw * noise_;
  }

 private:
  ImbalanceConfig cfg_;
  RngStream rng_;
  std::int64_t period_ = -1;
  double noise_ = 0.0;
};

/// Draws a heterogeneous house population from the "house" stream. House i
/// consumes the same four draws whatever the population size.
inline std::vector<devices::PoolHouse> synthesize_houses(const HousesConfig& cfg, std::uint64_t seed) {
  RngStream rng(seed, "house");
  std::vector<devices::PoolHouse> out;
  for (int i = 0; i < cfg.count; ++i) {
    devices::PoolHouse h;
    h.device_id = "house" + std::to_string(i + 1);
    h.heater_kw = cfg.heater_kw * rng.uniform(1.0 - cfg.heater_spread, 1.0 + cfg.heater_spread);
    h.thermal_capacity_kwh_per_c =
        cfg.capacity_kwh_per_c * rng.uniform(1.0 - cfg.capacity_spread, 1.0 + cfg.capacity_spread);
    h.price_threshold = rng.uniform(cfg.threshold_min, cfg.threshold_max);
    h.temp_c = rng.uniform(cfg.init_temp_min_c, cfg.init_temp_max_c);
    h.ambient_c = cfg.ambient_c;
    h.loss_coeff_kw_per_c = cfg.loss_coeff_kw_per_c;
    h.efficiency = cfg.efficiency;
    h.comfort_min_c = cfg.comfort_min_c;
    h.comfort_max_c = cfg.comfort_max_c;
    devices::validate(h);
    out.push_back(h);
  }
  return out;
}

/// One self-contained closed-loop run of a scenario. Every 10 s cycle:
/// capability -> bids -> clearing -> activation through the emulated network
/// -> DMS/PPC and heater control; the frequency loop runs between cycles.
class Simulation {
 public:
  explicit Simulation(Scenario scenario)
      : s_(std::move(scenario)),
        emulator_(s_.netem, s_.seed),
        imbalance_(s_.imbalance, s_.seed),
        freq_(s_.frequency) {
    validate(s_);
    n_cycles_ = static_cast<int>(std::floor(s_.duration_s / s_.cycle_s + 1e-9));
    ticks_per_cycle_ = static_cast<int>(std::lround(s_.cycle_s / s_.physics_dt_s));
    base_inj_.assign(s_.network.bus_count(), 0.0);
    for (const auto& [bus, mw] : s_.base_injections_mw) base_inj_[s_.network.bus_index(bus)] = mw;

    for (const auto& a : s_.aggregators) {
      if (a.kind == AggregatorKind::dms) {
        DmsAgg d;
        d.cfg = a;
        d.state.ramp_kw_per_cycle = a.ramp_kw_per_cycle;
        d.state.cycle_s = s_.cycle_s;
        dms_.push_back(std::move(d));
      } else if (s_.houses.count > 0 && s_.houses.aggregator == a.id) {
        pool_cfg_ = a;
      }
    }
    for (const auto& p : s_.pv) {
      PvUnit u;
      u.cfg = p;
      u.dev.device_id = p.id;
      u.dev.nominal_kw = p.nominal_kw;
      u.dev = devices::scale_device(u.dev, p.scale_factor);
      u.bus = s_.network.bus_index(p.bus);
      const double irr = p.irradiance.at(0.0);
      u.emitted_kw = std::min(p.baseline_kw, irr * u.dev.capability_kw());
      aggregation::ppc_execute(u.emitted_kw, u.dev, irr);
      u.baseline_output_kw = u.dev.output_kw;
      for (auto& d : dms_) {
        if (d.cfg.id == p.aggregator) {
          d.pv.push_back(pv_.size());
          d.state.last_setpoints[p.id] = u.emitted_kw;
        }
      }
      pv_.push_back(std::move(u));
    }
    houses_ = synthesize_houses(s_.houses, s_.seed);
    house_signal_.assign(houses_.size(), std::nullopt);
    if (!houses_.empty()) {
      houses_bus_ = s_.network.bus_index(s_.houses.bus);
      for (auto& h : houses_) devices::heater_decision(h, pool_cfg_.base_price);
      pool_c0_ = pool_consumption();
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  RunResult run() {
    result_ = RunResult{};
    result_.scenario_name = s_.name;
    result_.seed = s_.seed;
    result_.has_dms = !dms_.empty() && !pv_.empty();
    result_.has_pool = !houses_.empty();
    for (const auto& u : pv_) result_.device_ids.push_back(u.cfg.id);
    for (const auto& h : houses_) result_.device_ids.push_back(h.device_id);

    engine_.schedule(0.0, [this](Engine& e) { on_cycle(e, 0); });
    engine_.run_until(cycle_time(n_cycles_));
    result_.datagrams = emulator_.log();
    return std::move(result_);
  }

  const Engine& engine() const noexcept { return engine_; }

 private:
  struct PvUnit {
    PvConfig cfg;
    devices::PvInverter dev;
    std::size_t bus = 0;
    double emitted_kw = 0.0;
    double baseline_output_kw = 0.0;
  };
  struct DmsAgg {
    AggregatorConfig cfg;
    aggregation::DmsState state;
    std::vector<std::size_t> pv;
    double target_kw = 0.0;
  };

  double cycle_time(int k) const { return static_cast<double>(k) * s_.cycle_s; }

  double pool_consumption() const {
    double c = 0.0;
    for (const auto& h : houses_) c += h.consumption_kw();
    return c;
  }

  template <class Fn>
  void guarded(int k, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw Error(e.code(), "cycle " + std::to_string(k) + ": " + e.detail());
    }
  }

  std::vector<aggregation::CapabilityEnvelope> pv_envelopes(const DmsAgg& d, double t) const {
    std::vector<aggregation::CapabilityEnvelope> envs;
    for (std::size_t i : d.pv) {
      const auto& u = pv_[i];
      const double avail = std::clamp(u.cfg.irradiance.at(t), 0.0, 1.0) * u.dev.capability_kw();
      envs.push_back({d.cfg.id, u.cfg.bus, u.cfg.id, 0.0, avail, std::min(u.cfg.baseline_kw, avail), t});
    }
    return envs;
  }

  double dms_baseline(const DmsAgg& d, double t) const {
    double s = 0.0;
    for (const auto& e : pv_envelopes(d, t)) s += e.p_current_kw;
    return s;
  }

  void reprice_houses(double now) {
    for (std::size_t i = 0; i < houses_.size(); ++i) {
      const double price = aggregation::price_signal_from_activation(house_signal_[i], now, pool_cfg_.base_price,
                                                                     pool_cfg_.activation_price);
      devices::heater_decision(houses_[i], price);
    }
  }

  void on_cycle(Engine& eng, int k) {
    if (k > 0) guarded(k - 1, [&] { close_out(); });
    if (k >= n_cycles_) return;
    guarded(k, [&] { start_cycle(eng, k); });
    eng.schedule(cycle_time(k + 1), [this, k](Engine& e) { on_cycle(e, k + 1); });
  }

  void start_cycle(Engine& eng, int k) {
    const double t = eng.now();
    cur_ = CycleRecord{};
    cur_.cycle = k;
    cur_.time_s = t;
    cur_.datagram_begin = emulator_.log().size();
    imbalance_kw_ = imbalance_.at(t);
    cur_.imbalance_kw = imbalance_kw_;

    // (1) capability and (2) bids
    std::vector<market::Bid> bids;
    for (auto& d : dms_) {
      for (const auto& env : pv_envelopes(d, t)) {
        auto b = aggregation::build_bids_from_capability(env, d.cfg.up_ladder, d.cfg.down_ladder);
        bids.insert(bids.end(), b.begin(), b.end());
      }
    }
    if (!houses_.empty()) {
      reprice_houses(t);
      pool_c_bid_ = pool_consumption();
      double rated = 0.0;
      for (const auto& h : houses_) rated += h.heater_kw;
      aggregation::CapabilityEnvelope env{pool_cfg_.id, s_.houses.bus, pool_cfg_.id, -rated, 0.0, -pool_c_bid_, t};
      auto b = aggregation::build_bids_from_capability(env, {}, pool_cfg_.down_ladder);
      bids.insert(bids.end(), b.begin(), b.end());
    }
    gateway_records_.clear();
    if (!s_.gateway.dir.empty()) {
      gateway_records_ = gateway::wait_for_input(s_.gateway.dir, k, s_.gateway.timeout_s);
      for (const auto& r : gateway_records_) {
        const double up = std::min(r.bid_qty_kw, r.p_max_kw - r.p_avail_kw);
        const double down = std::min(r.bid_qty_kw, r.p_avail_kw - r.p_min_kw);
        if (up > 0) {
          bids.push_back({s_.gateway.aggregator + "/" + r.device_id + "/up", s_.gateway.aggregator, s_.gateway.bus,
                          market::Direction::up, up, r.bid_price_eur_mwh});
        }
        if (down > 0) {
          bids.push_back({s_.gateway.aggregator + "/" + r.device_id + "/down", s_.gateway.aggregator, s_.gateway.bus,
                          market::Direction::down, down, r.bid_price_eur_mwh});
        }
      }
    }
    bids.insert(bids.end(), s_.market.virtual_bids.begin(), s_.market.virtual_bids.end());
    const auto book = market::collect_bids(std::move(bids), k, s_.network);

    // (3) clearing
    std::vector<double> pre = base_inj_;
    pre[s_.network.bus_index(s_.imbalance.bus)] -= imbalance_kw_ / 1000.0;
    const auto cleared = market::clear_coordinated(book, imbalance_kw_, s_.market.config, s_.network, pre);
    cur_.uncovered_kw = cleared.central.uncovered_kw;
    cur_.price_up = cleared.central.clearing_price_up;
    cur_.price_down = cleared.central.clearing_price_down;
    virtual_kw_by_bus_.assign(s_.network.bus_count(), 0.0);
    std::map<std::string, double> gateway_up, gateway_down;
    for (const auto* stage : cleared.stages()) {
      cur_.accepted_bids += static_cast<int>(stage->accepted_count());
      cur_.accepted_kw += stage->total_accepted_kw();
      cur_.curtailed_kw += stage->total_curtailed_kw();
      for (const auto& a : stage->accepted) {
        if (a.accepted_kw <= 0) continue;
        const market::Bid* b = book.find(a.bid_id);
        if (is_virtual(b->aggregator_id)) {
          virtual_kw_by_bus_[s_.network.bus_index(a.bus_id)] += market::injection_sign(a.direction) * a.accepted_kw;
        }
        if (b->aggregator_id == s_.gateway.aggregator && !s_.gateway.dir.empty()) {
          const std::string dev = a.bid_id.substr(s_.gateway.aggregator.size() + 1,
                                                  a.bid_id.rfind('/') - s_.gateway.aggregator.size() - 1);
          (a.direction == market::Direction::up ? gateway_up : gateway_down)[dev] += a.accepted_kw;
        }
      }
    }

    // Gateway results go straight back to the external process.
    gateway_dev_kw_ = 0.0;
    gateway_setpoint_kw_ = 0.0;
    if (!s_.gateway.dir.empty()) {
      std::vector<gateway::ResultRecord> out;
      for (const auto& r : gateway_records_) {
        const double up = gateway_up[r.device_id];
        const double down = gateway_down[r.device_id];
        double price = 0.0;
        if (up > 0 && cleared.central.clearing_price_up) price = *cleared.central.clearing_price_up;
        if (down > 0 && cleared.central.clearing_price_down) price = *cleared.central.clearing_price_down;
        const double setpoint = r.p_avail_kw + up - down;
        out.push_back({r.device_id, setpoint, up + down, price, k});
        gateway_dev_kw_ += setpoint - r.p_avail_kw;
        gateway_setpoint_kw_ += setpoint;
      }
      gateway::write_results_file(s_.gateway.dir, k, out);
    }

    // (4) activation signals through the network emulator
    for (auto& d : dms_) d.target_kw = dms_baseline(d, t);
    pool_activation_kw_ = 0.0;
    const auto signals = market::build_activation_signals(cleared.stages(), book, t, s_.market.activation_valid_s);
    for (const auto& sig : signals) {
      std::string addr;
      int port = 0;
      if (auto* d = find_dms(sig.aggregator_id)) {
        addr = d->cfg.address;
        port = d->cfg.port;
      } else if (!houses_.empty() && sig.aggregator_id == pool_cfg_.id) {
        addr = pool_cfg_.address;
        port = pool_cfg_.port;
        pool_activation_kw_ += sig.direction == market::Direction::down ? sig.quantity_kw : -sig.quantity_kw;
      } else {
        continue;
      }
      netem::Datagram dg{"act/" + std::to_string(k) + "/" + sig.aggregator_id + "/" + market::to_string(sig.direction),
                         s_.market.address, s_.market.port, addr, port, s_.messages.activation_bytes, t, std::nullopt};
      const auto outcome = emulator_.send(dg);
      if (!outcome.dropped) {
        eng.schedule(outcome.deliver_at, [this, sig, k](Engine& e) { guarded(k, [&] { on_activation(e, sig); }); });
      }
    }
    cur_.activation_kw = pool_activation_kw_;

    // (5) DMS cycle, after same-instant deliveries
    eng.schedule(t, [this, k](Engine& e) { guarded(k, [&] { on_dms_cycle(e, k); }); });

    // (6) physics between cycles
    for (int j = 1; j <= ticks_per_cycle_; ++j) {
      eng.schedule(t + j * s_.physics_dt_s, [this, k](Engine& e) { guarded(k, [&] { on_physics(e); }); });
    }
  }

  bool is_virtual(const std::string& aggregator) const {
    if (find_dms_const(aggregator)) return false;
    if (!houses_.empty() && aggregator == pool_cfg_.id) return false;
    if (!s_.gateway.dir.empty() && aggregator == s_.gateway.aggregator) return false;
    return true;
  }

  DmsAgg* find_dms(const std::string& id) {
    for (auto& d : dms_) {
      if (d.cfg.id == id) return &d;
    }
    return nullptr;
  }
  const DmsAgg* find_dms_const(const std::string& id) const {
    for (const auto& d : dms_) {
      if (d.cfg.id == id) return &d;
    }
    return nullptr;
  }

  void on_activation(Engine& eng, const market::ActivationSignal& sig) {
    if (auto* d = find_dms(sig.aggregator_id)) {
      d->target_kw += market::injection_sign(sig.direction) * sig.quantity_kw;
      return;
    }
    if (sig.direction != market::Direction::down) return;
    for (std::size_t i : aggregation::select_houses(houses_, sig.quantity_kw)) house_signal_[i] = sig;
    reprice_houses(eng.now());
  }

  void on_dms_cycle(Engine& eng, int k) {
    const double t = eng.now();
    for (auto& d : dms_) {
      if (d.pv.empty()) continue;
      const auto envs = pv_envelopes(d, t);
      const auto emitted = aggregation::dms_step(d.state, d.target_kw, envs);
      cur_.target_kw += d.state.target_kw;
      for (std::size_t n = 0; n < d.pv.size(); ++n) {
        const std::size_t i = d.pv[n];
        cur_.setpoint_kw += emitted[n];
        pv_[i].emitted_kw = emitted[n];
        netem::Datagram dg{"sp/" + std::to_string(k) + "/" + pv_[i].cfg.id, s_.messages.dms_address,
                           s_.messages.dms_port, pv_[i].cfg.address, pv_[i].cfg.port, s_.messages.setpoint_bytes, t,
                           t + s_.cycle_s};
        const auto outcome = emulator_.send(dg);
        if (!outcome.dropped) {
          const double sp = emitted[n];
          eng.schedule(outcome.deliver_at, [this, i, sp, k](Engine& e) {
            guarded(k, [&] {
              aggregation::ppc_execute(sp, pv_[i].dev, pv_[i].cfg.irradiance.at(e.now()));
            });
          });
        }
      }
    }
  }

  double balancing_surplus_kw() const {
    double s = -imbalance_kw_ + gateway_dev_kw_;
    for (const auto& u : pv_) s += u.dev.output_kw - u.baseline_output_kw;
    for (double v : virtual_kw_by_bus_) s += v;
    if (!houses_.empty()) s -= pool_consumption() - pool_c0_;
    return s;
  }

  void on_physics(Engine& eng) {
    const double dt = s_.physics_dt_s;
    for (auto& u : pv_) devices::pv_step(u.dev, u.cfg.irradiance.at(eng.now()), u.dev.setpoint_limit_kw);
    for (auto& h : houses_) devices::pool_thermal_step(h, dt);
    const double base_kw = s_.network.base_mva() * 1000.0;
    const double u = grid::agc_step(freq_, dt);
    agc_kw_ = u * base_kw;
    freq_ = grid::step_frequency(freq_, balancing_surplus_kw() / base_kw + u, dt);
  }

  void close_out() {
    for (const auto& u : pv_) {
      cur_.output_kw += u.dev.output_kw;
      cur_.device_outputs_kw.push_back(u.dev.output_kw);
      cur_.scheduled_kw += u.emitted_kw;
      cur_.device_output_kw += u.dev.output_kw;
    }
    const double c_end = pool_consumption();
    for (const auto& h : houses_) {
      cur_.device_outputs_kw.push_back(-h.consumption_kw());
      cur_.heaters_on += h.heater_on ? 1 : 0;
    }
    if (!houses_.empty()) {
      cur_.pool_consumption_kw = c_end;
      cur_.measured_delta_kw = c_end - pool_c_bid_;
      cur_.scheduled_kw += -(pool_c_bid_ + pool_activation_kw_);
      cur_.device_output_kw += -c_end;
      aggregation::ResponseRecord rec;
      rec.round_index = cur_.cycle;
      rec.activation_kw = std::max(0.0, pool_activation_kw_);
      rec.measured_delta_kw = cur_.measured_delta_kw;
      for (const auto& h : houses_) rec.heater_states.push_back(h.heater_on);
      result_.response.records.push_back(std::move(rec));
    }
    cur_.scheduled_kw += gateway_setpoint_kw_;
    cur_.device_output_kw += gateway_setpoint_kw_;
    cur_.slack_residual_kw = cur_.scheduled_kw - cur_.device_output_kw;
    cur_.delta_f_pu = freq_.delta_f;
    cur_.agc_kw = agc_kw_;

    std::vector<double> inj = base_inj_;
    inj[s_.network.bus_index(s_.imbalance.bus)] -= imbalance_kw_ / 1000.0;
    for (std::size_t b = 0; b < inj.size(); ++b) inj[b] += virtual_kw_by_bus_[b] / 1000.0;
    for (const auto& u : pv_) inj[u.bus] += (u.dev.output_kw - u.baseline_output_kw) / 1000.0;
    if (!houses_.empty()) inj[houses_bus_] -= (c_end - pool_c0_) / 1000.0;
    if (!s_.gateway.dir.empty()) inj[s_.network.bus_index(s_.gateway.bus)] += gateway_dev_kw_ / 1000.0;
    const auto flows = grid::dc_power_flow(s_.network, inj);
    cur_.line_violations = static_cast<int>(grid::check_line_limits(s_.network, flows).size());
    for (std::size_t l = 0; l < flows.size(); ++l) {
      cur_.max_line_loading = std::max(cur_.max_line_loading, std::abs(flows[l]) / s_.network.lines()[l].flow_limit);
    }
    cur_.datagram_end = emulator_.log().size();
    result_.cycles.push_back(std::move(cur_));
  }

  Scenario s_;
  Engine engine_;
  netem::Emulator emulator_;
  ImbalanceProcess imbalance_;
  grid::FrequencyState freq_;
  int n_cycles_ = 0;
  int ticks_per_cycle_ = 20;
  std::vector<double> base_inj_;

  std::vector<PvUnit> pv_;
  std::vector<DmsAgg> dms_;
  AggregatorConfig pool_cfg_;
  std::vector<devices::PoolHouse> houses_;
  std::vector<std::optional<market::ActivationSignal>> house_signal_;
  std::size_t houses_bus_ = 0;
  double pool_c0_ = 0.0;
  double pool_c_bid_ = 0.0;
  double pool_activation_kw_ = 0.0;

  std::vector<gateway::InputRecord> gateway_records_;
  double gateway_dev_kw_ = 0.0;
  double gateway_setpoint_kw_ = 0.0;

  double imbalance_kw_ = 0.0;
  double agc_kw_ = 0.0;
  std::vector<double> virtual_kw_by_bus_;
  CycleRecord cur_;
  RunResult result_;
};

inline RunResult run_scenario(const Scenario& s) {
  Simulation sim(s);
  return sim.run();
}

inline RunResult run_preset(const std::string& name, const std::vector<std::string>& overrides = {},
                            const std::filesystem::path& dir = default_preset_dir()) {
  return run_scenario(load_preset(name, overrides, dir));
}

}  // namespace smartlab
