#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "smartlab/aggregation.hpp"
#include "smartlab/error.hpp"
#include "smartlab/gateway.hpp"
#include "smartlab/grid.hpp"
#include "smartlab/market.hpp"
#include "smartlab/netem.hpp"

#ifndef SMARTLAB_PRESET_DIR
#define SMARTLAB_PRESET_DIR "presets"
#endif

namespace smartlab {

using json = nlohmann::ordered_json;

/// Piecewise-constant time series given as (start time, value) breakpoints.
/// Before the first breakpoint the first value applies.
struct StepProfile {
  std::vector<std::pair<double, double>> points;

  double at(double t) const {
    if (points.empty()) return 0.0;
    double v = points.front().second;
    for (const auto& [start, value] : points) {
      if (t >= start) v = value;
      else break;
    }
    return v;
  }

  bool operator==(const StepProfile&) const = default;
};

struct ImbalanceConfig {
  std::string bus;
  StepProfile base_kw{{{0.0, 0.0}}};
  double noise_kw = 0.0;  // half-width of the uniform noise term
  double hold_s = 300.0;  // noise is redrawn at this period
  double amplitude = 1.0;

  bool operator==(const ImbalanceConfig&) const = default;
};

enum class AggregatorKind { dms, pool };

struct AggregatorConfig {
  std::string id;
  AggregatorKind kind = AggregatorKind::dms;
  std::string address;
  int port = 102;
  aggregation::PriceLadder up_ladder;
  aggregation::PriceLadder down_ladder;
  double ramp_kw_per_cycle = 250.0;  // dms
  double base_price = 50.0;          // pool
  double activation_price = 20.0;    // pool

  bool operator==(const AggregatorConfig&) const = default;
};

struct PvConfig {
  std::string id;
  std::string bus;
  std::string aggregator;
  std::string address;
  int port = 102;
  double nominal_kw = 5.0;
  double scale_factor = 1.0;
  double baseline_kw = 0.0;
  StepProfile irradiance{{{0.0, 1.0}}};

  bool operator==(const PvConfig&) const = default;
};

/// Synthesized population of pool houses; per-house values are drawn from
/// the "house" stream within the given spreads.
struct HousesConfig {
  int count = 0;
  std::string bus;
  std::string aggregator;
  double ambient_c = 30.0;
  double heater_kw = 3.0;
  double heater_spread = 0.2;
  double capacity_kwh_per_c = 60.0;
  double capacity_spread = 0.2;
  double loss_coeff_kw_per_c = 0.3;
  double efficiency = 0.9;
  double comfort_min_c = 24.0;
  double comfort_max_c = 28.0;
  double init_temp_min_c = 28.0;
  double init_temp_max_c = 29.0;
  double threshold_min = 20.0;
  double threshold_max = 50.0;

  bool operator==(const HousesConfig&) const = default;
};

struct MarketSection {
  market::MarketConfig config;
  std::vector<market::Bid> virtual_bids;
  std::string address = "10.0.0.10";
  int port = 20000;
  double activation_valid_s = 10.0;

  bool operator==(const MarketSection&) const = default;
};

struct MessageConfig {
  int setpoint_bytes = 250;
  int activation_bytes = 200;
  std::string dms_address = "10.0.1.1";
  int dms_port = 102;

  bool operator==(const MessageConfig&) const = default;
};

struct GatewayConfig {
  std::string dir;  // empty disables the external coupling
  std::string bus;
  std::string aggregator = "lab";
  double timeout_s = 30.0;

  bool operator==(const GatewayConfig&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 42;
  double duration_s = 3600.0;
  double cycle_s = 10.0;
  double physics_dt_s = 0.5;
  grid::NetworkModel network;
  std::map<std::string, double> base_injections_mw;
  grid::FrequencyState frequency;
  ImbalanceConfig imbalance;
  MarketSection market;
  std::vector<AggregatorConfig> aggregators;
  std::vector<PvConfig> pv;
  HousesConfig houses;
  std::vector<netem::FlowConfig> netem;
  MessageConfig messages;
  GatewayConfig gateway;

  bool operator==(const Scenario&) const = default;
};

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

namespace detail {

inline const char* level_name(grid::Level l) { return l == grid::Level::transmission ? "transmission" : "distribution"; }

inline grid::Level parse_level(const std::string& s) {
  if (s == "transmission") return grid::Level::transmission;
  if (s == "distribution") return grid::Level::distribution;
  throw ParseError(0, "unknown bus level '" + s + "'");
}

inline market::Direction parse_direction(const std::string& s) {
  if (s == "up") return market::Direction::up;
  if (s == "down") return market::Direction::down;
  throw ParseError(0, "unknown bid direction '" + s + "'");
}

inline json profile_to_json(const StepProfile& p) {
  json out = json::array();
  for (const auto& [t, v] : p.points) out.push_back(json::array({t, v}));
  return out;
}

inline StepProfile profile_from_json(const json& j) {
  StepProfile p;
  if (j.is_number()) {
    p.points.push_back({0.0, j.get<double>()});
    return p;
  }
  for (const auto& pt : j) {
    if (!pt.is_array() || pt.size() != 2) throw ParseError(0, "profile points must be [time, value] pairs");
    p.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  for (std::size_t i = 1; i < p.points.size(); ++i) {
    if (!(p.points[i].first > p.points[i - 1].first)) throw ParseError(0, "profile times must increase");
  }
  if (p.points.empty()) throw ParseError(0, "profile needs at least one point");
  return p;
}

inline json ladder_to_json(const aggregation::PriceLadder& l) {
  json out = json::array();
  for (const auto& r : l) out.push_back(json::array({r.fraction, r.price_eur_mwh}));
  return out;
}

inline aggregation::PriceLadder ladder_from_json(const json& j) {
  aggregation::PriceLadder l;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2) throw ParseError(0, "ladder rungs must be [fraction, price] pairs");
    l.push_back({r[0].get<double>(), r[1].get<double>()});
  }
  return l;
}

inline json segment_to_json(const netem::ProfileSegment& s) {
  json out;
  if (std::isinf(s.duration_s)) out["duration_s"] = nullptr;
  else out["duration_s"] = s.duration_s;
  out["bandwidth_kbps"] = s.bandwidth_kbps;
  out["delay_ms"] = s.delay_ms;
  out["jitter_ms"] = s.jitter_ms;
  out["loss_prob"] = s.loss_prob;
  return out;
}

inline netem::ProfileSegment segment_from_json(const json& j) {
  netem::ProfileSegment s;
  if (j.contains("duration_s") && !j["duration_s"].is_null()) s.duration_s = j["duration_s"].get<double>();
  s.bandwidth_kbps = j.value("bandwidth_kbps", s.bandwidth_kbps);
  s.delay_ms = j.value("delay_ms", s.delay_ms);
  s.jitter_ms = j.value("jitter_ms", s.jitter_ms);
  s.loss_prob = j.value("loss_prob", s.loss_prob);
  return s;
}

inline json port_to_json(int port) { return port == netem::kAnyPort ? json("*") : json(port); }

inline int port_from_json(const json& j, const char* key) {
  if (!j.contains(key)) return netem::kAnyPort;
  const auto& v = j[key];
  if (v.is_string() && v.get<std::string>() == "*") return netem::kAnyPort;
  return v.get<int>();
}

inline json bid_to_json(const market::Bid& b) {
  return json{{"id", b.bid_id},           {"aggregator", b.aggregator_id}, {"bus", b.bus_id},
              {"direction", market::to_string(b.direction)}, {"quantity_kw", b.quantity_kw},
              {"price_eur_mwh", b.price_eur_mwh}};
}

inline market::Bid bid_from_json(const json& j) {
  market::Bid b;
  b.bid_id = j.at("id").get<std::string>();
  b.aggregator_id = j.value("aggregator", std::string("virtual"));
  b.bus_id = j.at("bus").get<std::string>();
  b.direction = parse_direction(j.at("direction").get<std::string>());
  b.quantity_kw = j.at("quantity_kw").get<double>();
  b.price_eur_mwh = j.at("price_eur_mwh").get<double>();
  return b;
}

}  // namespace detail

inline json network_to_json(const grid::NetworkModel& net) {
  json buses = json::array();
  for (const auto& b : net.buses()) {
    json jb{{"id", b.bus_id}, {"level", detail::level_name(b.level)}};
    if (b.is_slack) jb["slack"] = true;
    buses.push_back(jb);
  }
  json lines = json::array();
  for (const auto& l : net.lines()) {
    lines.push_back({{"id", l.line_id}, {"from", l.from_bus}, {"to", l.to_bus}, {"reactance", l.reactance},
                     {"flow_limit_mw", l.flow_limit}});
  }
  return json{{"base_mva", net.base_mva()}, {"buses", buses}, {"lines", lines}};
}

inline grid::NetworkModel network_from_json(const json& j) {
  std::vector<grid::Bus> buses;
  for (const auto& b : j.at("buses")) {
    buses.push_back({b.at("id").get<std::string>(), detail::parse_level(b.value("level", std::string("transmission"))),
                     b.value("slack", false)});
  }
  std::vector<grid::Line> lines;
  for (const auto& l : j.at("lines")) {
    lines.push_back({l.value("id", std::string()), l.at("from").get<std::string>(), l.at("to").get<std::string>(),
                     l.at("reactance").get<double>(), l.at("flow_limit_mw").get<double>()});
  }
  return grid::NetworkModel(std::move(buses), std::move(lines), j.value("base_mva", 100.0));
}

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["duration_s"] = s.duration_s;
  j["cycle_s"] = s.cycle_s;
  j["physics_dt_s"] = s.physics_dt_s;
  j["network"] = network_to_json(s.network);
  j["network"]["base_injections_mw"] = s.base_injections_mw;
  const auto& f = s.frequency;
  j["frequency"] = {{"inertia_2h", f.inertia_2h}, {"damping_d", f.damping_d}, {"bias_b", f.bias_b},
                    {"agc_kp", f.agc_kp},         {"agc_ki", f.agc_ki},       {"delta_f0", f.delta_f}};
  j["imbalance"] = {{"bus", s.imbalance.bus},
                    {"base_kw", detail::profile_to_json(s.imbalance.base_kw)},
                    {"noise_kw", s.imbalance.noise_kw},
                    {"hold_s", s.imbalance.hold_s},
                    {"amplitude", s.imbalance.amplitude}};
  json vb = json::array();
  for (const auto& b : s.market.virtual_bids) vb.push_back(detail::bid_to_json(b));
  j["market"] = {{"dso_prefilter", s.market.config.dso_prefilter},
                 {"dso_imbalance_kw", s.market.config.dso_imbalance_kw},
                 {"address", s.market.address},
                 {"port", s.market.port},
                 {"activation_valid_s", s.market.activation_valid_s},
                 {"virtual_bids", vb}};
  json aggs = json::array();
  for (const auto& a : s.aggregators) {
    json ja{{"id", a.id}, {"kind", a.kind == AggregatorKind::dms ? "dms" : "pool"}, {"address", a.address},
            {"port", a.port}, {"up_ladder", detail::ladder_to_json(a.up_ladder)},
            {"down_ladder", detail::ladder_to_json(a.down_ladder)}};
    if (a.kind == AggregatorKind::dms) {
      ja["ramp_kw_per_cycle"] = a.ramp_kw_per_cycle;
    } else {
      ja["base_price"] = a.base_price;
      ja["activation_price"] = a.activation_price;
    }
    aggs.push_back(ja);
  }
  j["aggregators"] = aggs;
  json pvs = json::array();
  for (const auto& p : s.pv) {
    pvs.push_back({{"id", p.id},
                   {"bus", p.bus},
                   {"aggregator", p.aggregator},
                   {"address", p.address},
                   {"port", p.port},
                   {"nominal_kw", p.nominal_kw},
                   {"scale_factor", p.scale_factor},
                   {"baseline_kw", p.baseline_kw},
                   {"irradiance", detail::profile_to_json(p.irradiance)}});
  }
  j["pv"] = pvs;
  const auto& h = s.houses;
  j["houses"] = {{"count", h.count},
                 {"bus", h.bus},
                 {"aggregator", h.aggregator},
                 {"ambient_c", h.ambient_c},
                 {"heater_kw", h.heater_kw},
                 {"heater_spread", h.heater_spread},
                 {"capacity_kwh_per_c", h.capacity_kwh_per_c},
                 {"capacity_spread", h.capacity_spread},
                 {"loss_coeff_kw_per_c", h.loss_coeff_kw_per_c},
                 {"efficiency", h.efficiency},
                 {"comfort_min_c", h.comfort_min_c},
                 {"comfort_max_c", h.comfort_max_c},
                 {"init_temp_min_c", h.init_temp_min_c},
                 {"init_temp_max_c", h.init_temp_max_c},
                 {"threshold_min", h.threshold_min},
                 {"threshold_max", h.threshold_max}};
  json flows = json::object();
  for (const auto& f : s.netem) {
    json segs = json::array();
    for (const auto& seg : f.profile.segments) segs.push_back(detail::segment_to_json(seg));
    flows[f.name] = {{"selector",
                      {{"src_addr", f.selector.src_addr},
                       {"dst_addr", f.selector.dst_addr},
                       {"src_port", detail::port_to_json(f.selector.src_port)},
                       {"dst_port", detail::port_to_json(f.selector.dst_port)}}},
                     {"attached_at", f.attached_at},
                     {"segments", segs}};
  }
  j["netem"] = flows;
  j["messages"] = {{"setpoint_bytes", s.messages.setpoint_bytes},
                   {"activation_bytes", s.messages.activation_bytes},
                   {"dms_address", s.messages.dms_address},
                   {"dms_port", s.messages.dms_port}};
  j["gateway"] = {{"dir", s.gateway.dir},
                  {"bus", s.gateway.bus},
                  {"aggregator", s.gateway.aggregator},
                  {"timeout_s", s.gateway.timeout_s}};
  return j;
}

/// Cross-checks every id reference in the scenario.
inline void validate(const Scenario& s) {
  auto need_bus = [&](const std::string& bus, const std::string& who) {
    if (!s.network.has_bus(bus)) throw Error(Errc::dangling_reference, who + " references unknown bus '" + bus + "'");
  };
  if (!(s.duration_s >= 0) || !(s.cycle_s > 0) || !(s.physics_dt_s > 0) || s.physics_dt_s > 0.5 ||
      std::abs(std::round(s.cycle_s / s.physics_dt_s) * s.physics_dt_s - s.cycle_s) > 1e-9) {
    throw Error(Errc::parse_error, "timing: need duration >= 0, cycle > 0, 0 < physics_dt <= 0.5 dividing the cycle");
  }
  for (const auto& [bus, mw] : s.base_injections_mw) need_bus(bus, "base_injections_mw");
  need_bus(s.imbalance.bus, "imbalance");
  if (!(s.imbalance.hold_s > 0)) throw Error(Errc::parse_error, "imbalance.hold_s must be positive");

  std::map<std::string, AggregatorKind> aggs;
  for (const auto& a : s.aggregators) {
    if (!aggs.emplace(a.id, a.kind).second) throw Error(Errc::parse_error, "duplicate aggregator '" + a.id + "'");
    if (!a.up_ladder.empty()) aggregation::validate(a.up_ladder);
    if (!a.down_ladder.empty()) aggregation::validate(a.down_ladder);
    if (a.kind == AggregatorKind::pool && !(a.activation_price < a.base_price)) {
      throw Error(Errc::invalid_prices, "aggregator '" + a.id + "' needs activation_price < base_price");
    }
    if (a.kind == AggregatorKind::dms && !(a.ramp_kw_per_cycle > 0)) {
      throw Error(Errc::parse_error, "aggregator '" + a.id + "' needs a positive ramp");
    }
  }
  auto need_agg = [&](const std::string& id, AggregatorKind kind, const std::string& who) {
    auto it = aggs.find(id);
    if (it == aggs.end() || it->second != kind) {
      throw Error(Errc::dangling_reference, who + " references unknown aggregator '" + id + "'");
    }
  };
  std::set<std::string> device_ids;
  for (const auto& p : s.pv) {
    if (!device_ids.insert(p.id).second) throw Error(Errc::parse_error, "duplicate device '" + p.id + "'");
    need_bus(p.bus, "pv " + p.id);
    need_agg(p.aggregator, AggregatorKind::dms, "pv " + p.id);
    if (!(p.nominal_kw > 0) || !(p.scale_factor >= 1) || !(p.baseline_kw >= 0)) {
      throw Error(Errc::invalid_device, "pv '" + p.id + "' has invalid ratings");
    }
  }
  if (s.houses.count < 0) throw Error(Errc::parse_error, "houses.count must be >= 0");
  if (s.houses.count > 0) {
    need_bus(s.houses.bus, "houses");
    need_agg(s.houses.aggregator, AggregatorKind::pool, "houses");
    if (!(s.houses.comfort_min_c < s.houses.comfort_max_c) || !(s.houses.threshold_min <= s.houses.threshold_max) ||
        !(s.houses.init_temp_min_c <= s.houses.init_temp_max_c)) {
      throw Error(Errc::invalid_device, "houses: inverted ranges");
    }
  }
  for (const auto& b : s.market.virtual_bids) {
    need_bus(b.bus_id, "virtual bid " + b.bid_id);
    if (!(b.quantity_kw > 0)) throw Error(Errc::invalid_bid, "virtual bid '" + b.bid_id + "' quantity");
  }
  for (const auto& f : s.netem) netem::validate(f.profile);
  if (!s.gateway.dir.empty()) need_bus(s.gateway.bus, "gateway");
}

inline Scenario scenario_from_json(const json& j) {
  try {
    Scenario s;
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.cycle_s = j.value("cycle_s", s.cycle_s);
    s.physics_dt_s = j.value("physics_dt_s", s.physics_dt_s);
    s.network = network_from_json(j.at("network"));
    if (j["network"].contains("base_injections_mw")) {
      s.base_injections_mw = j["network"]["base_injections_mw"].get<std::map<std::string, double>>();
    }
    if (j.contains("frequency")) {
      const auto& f = j["frequency"];
      s.frequency.inertia_2h = f.value("inertia_2h", s.frequency.inertia_2h);
      s.frequency.damping_d = f.value("damping_d", s.frequency.damping_d);
      s.frequency.bias_b = f.value("bias_b", s.frequency.bias_b);
      s.frequency.agc_kp = f.value("agc_kp", s.frequency.agc_kp);
      s.frequency.agc_ki = f.value("agc_ki", s.frequency.agc_ki);
      s.frequency.delta_f = f.value("delta_f0", 0.0);
    }
    const auto& im = j.at("imbalance");
    s.imbalance.bus = im.at("bus").get<std::string>();
    if (im.contains("base_kw")) s.imbalance.base_kw = detail::profile_from_json(im["base_kw"]);
    s.imbalance.noise_kw = im.value("noise_kw", 0.0);
    s.imbalance.hold_s = im.value("hold_s", s.imbalance.hold_s);
    s.imbalance.amplitude = im.value("amplitude", 1.0);
    if (j.contains("market")) {
      const auto& m = j["market"];
      s.market.config.dso_prefilter = m.value("dso_prefilter", false);
      s.market.config.dso_imbalance_kw = m.value("dso_imbalance_kw", 0.0);
      s.market.address = m.value("address", s.market.address);
      s.market.port = m.value("port", s.market.port);
      s.market.activation_valid_s = m.value("activation_valid_s", s.cycle_s);
      if (m.contains("virtual_bids")) {
        for (const auto& b : m["virtual_bids"]) s.market.virtual_bids.push_back(detail::bid_from_json(b));
      }
    }
    if (j.contains("aggregators")) {
      for (const auto& a : j["aggregators"]) {
        AggregatorConfig c;
        c.id = a.at("id").get<std::string>();
        const std::string kind = a.value("kind", std::string("dms"));
        if (kind == "dms") c.kind = AggregatorKind::dms;
        else if (kind == "pool") c.kind = AggregatorKind::pool;
        else throw ParseError(0, "unknown aggregator kind '" + kind + "'");
        c.address = a.value("address", c.id);
        c.port = a.value("port", c.port);
        if (a.contains("up_ladder")) c.up_ladder = detail::ladder_from_json(a["up_ladder"]);
        if (a.contains("down_ladder")) c.down_ladder = detail::ladder_from_json(a["down_ladder"]);
        c.ramp_kw_per_cycle = a.value("ramp_kw_per_cycle", c.ramp_kw_per_cycle);
        c.base_price = a.value("base_price", c.base_price);
        c.activation_price = a.value("activation_price", c.activation_price);
        s.aggregators.push_back(std::move(c));
      }
    }
    if (j.contains("pv")) {
      for (const auto& p : j["pv"]) {
        PvConfig c;
        c.id = p.at("id").get<std::string>();
        c.bus = p.at("bus").get<std::string>();
        c.aggregator = p.at("aggregator").get<std::string>();
        c.address = p.value("address", c.id);
        c.port = p.value("port", c.port);
        c.nominal_kw = p.value("nominal_kw", c.nominal_kw);
        c.scale_factor = p.value("scale_factor", c.scale_factor);
        c.baseline_kw = p.value("baseline_kw", c.baseline_kw);
        if (p.contains("irradiance")) c.irradiance = detail::profile_from_json(p["irradiance"]);
        s.pv.push_back(std::move(c));
      }
    }
    if (j.contains("houses")) {
      const auto& h = j["houses"];
      auto& c = s.houses;
      c.count = h.value("count", c.count);
      c.bus = h.value("bus", c.bus);
      c.aggregator = h.value("aggregator", c.aggregator);
      c.ambient_c = h.value("ambient_c", c.ambient_c);
      c.heater_kw = h.value("heater_kw", c.heater_kw);
      c.heater_spread = h.value("heater_spread", c.heater_spread);
      c.capacity_kwh_per_c = h.value("capacity_kwh_per_c", c.capacity_kwh_per_c);
      c.capacity_spread = h.value("capacity_spread", c.capacity_spread);
      c.loss_coeff_kw_per_c = h.value("loss_coeff_kw_per_c", c.loss_coeff_kw_per_c);
      c.efficiency = h.value("efficiency", c.efficiency);
      c.comfort_min_c = h.value("comfort_min_c", c.comfort_min_c);
      c.comfort_max_c = h.value("comfort_max_c", c.comfort_max_c);
      c.init_temp_min_c = h.value("init_temp_min_c", c.init_temp_min_c);
      c.init_temp_max_c = h.value("init_temp_max_c", c.init_temp_max_c);
      c.threshold_min = h.value("threshold_min", c.threshold_min);
      c.threshold_max = h.value("threshold_max", c.threshold_max);
    }
    if (j.contains("netem")) {
      for (const auto& [name, f] : j["netem"].items()) {
        netem::FlowConfig c;
        c.name = name;
        c.profile.name = name;
        const json sel = f.value("selector", json::object());
        c.selector.src_addr = sel.value("src_addr", netem::kAnyAddr);
        c.selector.dst_addr = sel.value("dst_addr", netem::kAnyAddr);
        c.selector.src_port = detail::port_from_json(sel, "src_port");
        c.selector.dst_port = detail::port_from_json(sel, "dst_port");
        c.attached_at = f.value("attached_at", 0.0);
        for (const auto& seg : f.at("segments")) c.profile.segments.push_back(detail::segment_from_json(seg));
        s.netem.push_back(std::move(c));
      }
    }
    if (j.contains("messages")) {
      const auto& m = j["messages"];
      s.messages.setpoint_bytes = m.value("setpoint_bytes", s.messages.setpoint_bytes);
      s.messages.activation_bytes = m.value("activation_bytes", s.messages.activation_bytes);
      s.messages.dms_address = m.value("dms_address", s.messages.dms_address);
      s.messages.dms_port = m.value("dms_port", s.messages.dms_port);
    }
    if (j.contains("gateway")) {
      const auto& g = j["gateway"];
      s.gateway.dir = g.value("dir", std::string());
      s.gateway.bus = g.value("bus", std::string());
      s.gateway.aggregator = g.value("aggregator", s.gateway.aggregator);
      s.gateway.timeout_s = g.value("timeout_s", s.gateway.timeout_s);
    }
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::unknown_bus) {
      throw Error(Errc::dangling_reference, e.detail());
    }
    throw;
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = gateway::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Overrides and presets
// ---------------------------------------------------------------------------

/// Applies `dotted.path=value` to a scenario document. The value is read as
/// JSON when it parses, otherwise as a string. A path that ends on a flow's
/// impairment field (e.g. `netem.gprs.loss_prob`) sets it on every segment.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::unknown_override_path, "override '" + assignment + "' is not key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }

  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  json* node = &doc;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string& key = keys[i];
    const bool last = i + 1 == keys.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw Error(Errc::unknown_override_path, path);
      }
      if (idx >= node->size()) throw Error(Errc::unknown_override_path, path);
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(key)) {
      node = &(*node)[key];
    } else if (last && node->is_object() && node->contains("segments") && (*node)["segments"].is_array() &&
               !(*node)["segments"].empty() &&
               (key == "loss_prob" || key == "delay_ms" || key == "jitter_ms" || key == "bandwidth_kbps")) {
      for (auto& seg : (*node)["segments"]) seg[key] = value;
      return;
    } else {
      throw Error(Errc::unknown_override_path, path);
    }
    if (last) *node = value;
  }
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"tc1", "tc2", "tc3"};
  return names;
}

inline std::filesystem::path default_preset_dir() { return SMARTLAB_PRESET_DIR; }

inline json preset_document(const std::string& name, const std::filesystem::path& dir = default_preset_dir()) {
  bool known = false;
  for (const auto& n : preset_names()) known = known || n == name;
  if (!known) throw Error(Errc::unknown_preset, "no preset named '" + name + "'");
  return read_json_file(dir / (name + ".json"));
}

inline Scenario load_preset(const std::string& name, const std::vector<std::string>& overrides = {},
                            const std::filesystem::path& dir = default_preset_dir()) {
  json doc = preset_document(name, dir);
  for (const auto& o : overrides) apply_override(doc, o);
  return scenario_from_json(doc);
}

}  // namespace smartlab
