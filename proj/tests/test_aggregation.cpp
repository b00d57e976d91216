#include "catch_amalgamated.hpp"

#include <cmath>
#include <map>

#include "smartlab/aggregation.hpp"
#include "smartlab/simcore.hpp"

using namespace smartlab;
using namespace smartlab::aggregation;
using Catch::Approx;

namespace {

CapabilityEnvelope env(std::string dev, double lo, double hi, double cur) {
  return {"agg", "B", std::move(dev), lo, hi, cur, 0.0};
}

double sum_dir(const std::vector<market::Bid>& bids, market::Direction d) {
  double s = 0;
  for (const auto& b : bids) {
    if (b.direction == d) s += b.quantity_kw;
  }
  return s;
}

}  // namespace

TEST_CASE("no flexibility means no bids") {
  REQUIRE(build_bids_from_capability(env("d", 5, 5, 5), {{1.0, 45}}).empty());
}

TEST_CASE("single rung ladder") {
  const auto bids = build_bids_from_capability(env("d", 0, 100, 0), {{1.0, 45}}, {});
  REQUIRE(bids.size() == 1);
  REQUIRE(bids[0].direction == market::Direction::up);
  REQUIRE(bids[0].quantity_kw == 100.0);
  REQUIRE(bids[0].price_eur_mwh == 45.0);
  REQUIRE(bids[0].bid_id == "agg/d/up/0");
}

TEST_CASE("two rung ladder partitions the headroom") {
  const auto bids = build_bids_from_capability(env("d", 0, 100, 0), {{0.6, 40}, {0.4, 55}}, {});
  REQUIRE(bids.size() == 2);
  REQUIRE(bids[0].quantity_kw == Approx(60.0));
  REQUIRE(bids[0].price_eur_mwh == 40.0);
  REQUIRE(bids[1].quantity_kw == Approx(40.0));
  REQUIRE(bids[0].quantity_kw + bids[1].quantity_kw == 100.0);
}

TEST_CASE("bid quantities conserve headroom and footroom") {
  RngStream rng(3, "agg.bids");
  const PriceLadder up{{0.3, 40}, {0.3, 45}, {0.4, 50}};
  const PriceLadder down{{0.35, 30}, {0.65, 20}};
  for (int i = 0; i < 1000; ++i) {
    const double lo = rng.uniform(-100, 100), hi = lo + rng.uniform(0, 500), cur = rng.uniform(lo, hi);
    const auto e = env("d", lo, hi, cur);
    const auto bids = build_bids_from_capability(e, up, down);
    REQUIRE(std::abs(sum_dir(bids, market::Direction::up) - e.headroom_kw()) <= 1e-9 * std::max(1.0, hi - lo));
    REQUIRE(std::abs(sum_dir(bids, market::Direction::down) - e.footroom_kw()) <= 1e-9 * std::max(1.0, hi - lo));
  }
}

TEST_CASE("invalid envelopes and ladders") {
  REQUIRE_THROWS_AS(build_bids_from_capability(env("d", 0, 10, 20), {{1.0, 1}}), Error);
  try {
    build_bids_from_capability(env("d", 0, 10, 5), {{0.5, 1}, {0.4, 2}});
    FAIL("expected InvalidLadder");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::invalid_ladder);
  }
}

TEST_CASE("disaggregation") {
  SECTION("one device clamps the target") {
    const auto d = disaggregate(500, {env("a", 0, 100, 50)});
    REQUIRE(d.setpoints_kw[0] == 100.0);
    REQUIRE(d.clamped);
  }
  SECTION("zero delta keeps current values") {
    const auto d = disaggregate(70, {env("a", 0, 100, 30), env("b", 0, 100, 40)});
    REQUIRE(d.setpoints_kw == std::vector<double>{30, 40});
  }
  SECTION("proportional to headroom") {
    const auto d = disaggregate(120, {env("a", 0, 80, 50), env("b", 0, 60, 50)});
    REQUIRE(d.setpoints_kw[0] == Approx(65.0));
    REQUIRE(d.setpoints_kw[1] == Approx(55.0));
  }
  SECTION("empty device list") {
    try {
      disaggregate(1, {});
      FAIL("expected EmptyDeviceList");
    } catch (const Error& e) {
      REQUIRE(e.code() == Errc::empty_device_list);
    }
  }
}

TEST_CASE("disaggregation conserves the clamped target") {
  RngStream rng(6, "agg.disagg");
  for (int i = 0; i < 1000; ++i) {
    std::vector<CapabilityEnvelope> envs;
    const int n = 1 + static_cast<int>(rng.uniform() * 6);
    for (int k = 0; k < n; ++k) {
      const double lo = rng.uniform(0, 50), hi = lo + rng.uniform(0, 200);
      envs.push_back(env("d" + std::to_string(k), lo, hi, rng.uniform(lo, hi)));
    }
    const auto d = disaggregate(rng.uniform(-100, 1500), envs);
    double s = 0;
    for (std::size_t k = 0; k < envs.size(); ++k) {
      REQUIRE(d.setpoints_kw[k] >= envs[k].p_min_kw);
      REQUIRE(d.setpoints_kw[k] <= envs[k].p_max_kw);
      s += d.setpoints_kw[k];
    }
    REQUIRE(s == Approx(d.target_kw).margin(1e-6));
  }
}

TEST_CASE("dms ramp limiting") {
  SECTION("small step reaches the ideal in one cycle") {
    DmsState st;
    st.ramp_kw_per_cycle = 50;
    const auto out = dms_step(st, 30, {env("a", 0, 200, 0)});
    REQUIRE(out[0] == 30.0);
  }
  SECTION("a 180 kW rise takes four cycles") {
    DmsState st;
    st.ramp_kw_per_cycle = 50;
    std::vector<double> seen;
    for (int c = 0; c < 6; ++c) seen.push_back(dms_step(st, 180, {env("a", 0, 200, 0)})[0]);
    REQUIRE(seen == std::vector<double>{50, 100, 150, 180, 180, 180});
  }
}

TEST_CASE("dms emitted setpoints never jump more than the ramp") {
  RngStream rng(12, "agg.ramp");
  DmsState st;
  st.ramp_kw_per_cycle = 37.5;
  const std::vector<CapabilityEnvelope> envs{env("a", 0, 300, 100), env("b", 0, 150, 20), env("c", 10, 90, 50)};
  std::map<std::string, double> prev;
  for (const auto& e : envs) prev[e.device_id] = e.p_current_kw;
  for (int c = 0; c < 2000; ++c) {
    const auto out = dms_step(st, rng.uniform(0, 600), envs);
    for (std::size_t k = 0; k < envs.size(); ++k) {
      REQUIRE(std::abs(out[k] - prev[envs[k].device_id]) <= st.ramp_kw_per_cycle + 1e-9);
      prev[envs[k].device_id] = out[k];
    }
  }
}

TEST_CASE("ppc execution") {
  devices::PvInverter pv;
  pv.nominal_kw = 5;
  pv.scale_factor = 100;
  REQUIRE(ppc_execute(0, pv, 1.0) == 0.0);
  REQUIRE(ppc_execute(450, pv, 0.8) == 400.0);
}

TEST_CASE("aggregator to inverter chain converges within the ramp bound") {
  devices::PvInverter pv;
  pv.nominal_kw = 5;
  pv.scale_factor = 1000;
  DmsState st;
  st.ramp_kw_per_cycle = 250;
  st.last_setpoints["pv"] = 2000;
  ppc_execute(2000, pv, 0.9);
  const double target = 3800;
  const int bound = static_cast<int>(std::ceil((target - 2000) / st.ramp_kw_per_cycle));
  int cycles = 0;
  while (std::abs(pv.output_kw - target) > 0.01 * target) {
    const auto sp = dms_step(st, target, {{"agg", "B", "pv", 0, 4500, 2000, 0}});
    ppc_execute(sp[0], pv, 0.9);
    ++cycles;
    REQUIRE(cycles <= 100);
  }
  REQUIRE(cycles == bound);
}

TEST_CASE("price switch") {
  market::ActivationSignal sig{"agg", 0, market::Direction::down, 3.0, 100.0, 10.0};
  REQUIRE(price_signal_from_activation(std::nullopt, 0, 50, 20) == 50.0);
  REQUIRE(price_signal_from_activation(sig, 100.0, 50, 20) == 20.0);
  REQUIRE(price_signal_from_activation(sig, std::nextafter(110.0, 0.0), 50, 20) == 20.0);
  REQUIRE(price_signal_from_activation(sig, 110.0, 50, 20) == 50.0);
  try {
    price_signal_from_activation(sig, 100.0, 20, 50);
    FAIL("expected InvalidPrices");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::invalid_prices);
  }
}

TEST_CASE("response mismatch scoring") {
  ResponseLog followed{{{0, 3.0, 3.0, {}}, {1, 0.0, 0.0, {}}, {2, 2.0, 1.9, {}}}};
  REQUIRE(response_mismatch(followed) == 0.0);
  ResponseLog ignored{{{0, 3.0, 0.0, {}}, {1, 2.0, 0.1, {}}}};
  REQUIRE(response_mismatch(activated_rounds(ignored)) == 1.0);
  ResponseLog spontaneous{{{0, 0.0, 3.0, {}}, {1, 0.0, 0.0, {}}}};
  REQUIRE(response_mismatch(spontaneous) == 0.5);
  REQUIRE_THROWS_AS(response_mismatch(ResponseLog{}), Error);
  REQUIRE(response_tracking_error(followed) == Approx((0.0 + 0.05) / 2));
}

TEST_CASE("house selection picks the closest prefix of idle heaters") {
  std::vector<devices::PoolHouse> hs(4);
  const double temps[] = {27, 25, 26, 24};
  for (int i = 0; i < 4; ++i) {
    hs[i].temp_c = temps[i];
    hs[i].heater_kw = 3.0;
  }
  hs[3].heater_on = true;
  REQUIRE(select_houses(hs, 0.5).empty());
  REQUIRE(select_houses(hs, 2.0) == std::vector<std::size_t>{1});
  REQUIRE(select_houses(hs, 6.2) == std::vector<std::size_t>{1, 2});
  REQUIRE(select_houses(hs, 100) == std::vector<std::size_t>{1, 2, 0});
}
