#include "catch_amalgamated.hpp"

#include "smartlab/scenario.hpp"

using namespace smartlab;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::io_error;
}

}  // namespace

TEST_CASE("shipped presets load and validate") {
  for (const auto& name : preset_names()) {
    const auto s = load_preset(name);
    REQUIRE(s.name == name);
    REQUIRE(s.cycle_s == 10.0);
    REQUIRE(s.physics_dt_s <= 0.5);
  }
  REQUIRE(load_preset("tc2").netem.size() == 1);
  REQUIRE(load_preset("tc3").houses.count == 2);
  REQUIRE(load_preset("tc3").houses.ambient_c == 30.0);
}

TEST_CASE("serialise then load gives an equal scenario") {
  for (const auto& name : preset_names()) {
    const auto s = load_preset(name);
    const auto again = scenario_from_json(json::parse(scenario_to_json(s).dump()));
    REQUIRE(again == s);
  }
}

TEST_CASE("dangling references are reported") {
  auto doc = preset_document("tc1");
  doc["pv"][0]["bus"] = "ZZ";
  REQUIRE(code_of([&] { scenario_from_json(doc); }) == Errc::dangling_reference);
  doc = preset_document("tc1");
  doc["pv"][0]["aggregator"] = "ghost";
  REQUIRE(code_of([&] { scenario_from_json(doc); }) == Errc::dangling_reference);
  doc = preset_document("tc1");
  doc["network"]["base_injections_mw"]["QQ"] = 1.0;
  REQUIRE(code_of([&] { scenario_from_json(doc); }) == Errc::dangling_reference);
  doc = preset_document("tc1");
  doc["market"]["virtual_bids"][0]["bus"] = "nowhere";
  REQUIRE(code_of([&] { scenario_from_json(doc); }) == Errc::dangling_reference);
}

TEST_CASE("malformed documents raise ParseError") {
  auto doc = preset_document("tc1");
  doc["duration_s"] = "long";
  REQUIRE_THROWS_AS(scenario_from_json(doc), ParseError);
  doc = preset_document("tc1");
  doc["physics_dt_s"] = 1.0;
  REQUIRE(code_of([&] { scenario_from_json(doc); }) == Errc::parse_error);
  doc = preset_document("tc1");
  doc.erase("network");
  REQUIRE_THROWS_AS(scenario_from_json(doc), ParseError);
}

TEST_CASE("overrides") {
  auto doc = preset_document("tc2");
  apply_override(doc, "netem.gprs.loss_prob=0.25");
  apply_override(doc, "imbalance.amplitude=0");
  apply_override(doc, "pv.0.baseline_kw=1500");
  apply_override(doc, "name=custom");
  const auto s = scenario_from_json(doc);
  REQUIRE(s.netem[0].profile.segments[0].loss_prob == 0.25);
  REQUIRE(s.imbalance.amplitude == 0.0);
  REQUIRE(s.pv[0].baseline_kw == 1500.0);
  REQUIRE(s.name == "custom");

  REQUIRE(load_preset("tc3", {"houses.count=50"}).houses.count == 50);
  REQUIRE(code_of([] { load_preset("tc1", {"imbalance.nope=1"}); }) == Errc::unknown_override_path);
  REQUIRE(code_of([] { load_preset("tc1", {"pv.5.baseline_kw=1"}); }) == Errc::unknown_override_path);
  REQUIRE(code_of([] { load_preset("tc1", {"no_equals_sign"}); }) == Errc::unknown_override_path);
  REQUIRE(code_of([] { load_preset("tc4"); }) == Errc::unknown_preset);
}

TEST_CASE("step profiles hold the last value") {
  StepProfile p{{{0.0, 1.0}, {100.0, 5.0}, {200.0, -2.0}}};
  REQUIRE(p.at(0.0) == 1.0);
  REQUIRE(p.at(99.999) == 1.0);
  REQUIRE(p.at(100.0) == 5.0);
  REQUIRE(p.at(1e9) == -2.0);
}
