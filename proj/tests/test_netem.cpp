#include "catch_amalgamated.hpp"

#include <cmath>

#include "smartlab/netem.hpp"

using namespace smartlab;
using namespace smartlab::netem;
using Catch::Approx;

namespace {

Datagram dgram(std::string id, double t, int size = 250, std::optional<double> deadline = std::nullopt) {
  return {std::move(id), "10.0.1.1", 5000, "10.0.2.1", 102, size, t, deadline};
}

ProfileSegment seg(double kbps, double delay_ms, double jitter_ms, double loss, double dur = INFINITY) {
  ProfileSegment s;
  s.duration_s = dur;
  s.bandwidth_kbps = kbps;
  s.delay_ms = delay_ms;
  s.jitter_ms = jitter_ms;
  s.loss_prob = loss;
  return s;
}

FlowConfig flow(std::string name, FlowSelector sel, std::vector<ProfileSegment> segs) {
  return {name, std::move(sel), CommProfile{name, std::move(segs)}, 0.0};
}

}  // namespace

TEST_CASE("classification") {
  const auto d = dgram("m", 0);
  REQUIRE_FALSE(classify_flow(d, {}));
  FlowSelector exact{"10.0.1.1", "10.0.2.1", 5000, 102};
  FlowSelector port_wild{"10.0.1.1", "10.0.2.1", kAnyPort, kAnyPort};
  REQUIRE(classify_flow(d, {port_wild, exact}) == 1u);
  FlowSelector other{"10.9.9.9", kAnyAddr, kAnyPort, kAnyPort};
  REQUIRE_FALSE(classify_flow(d, {other}));
  FlowSelector by_src{"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort};
  FlowSelector by_dst{kAnyAddr, "10.0.2.1", kAnyPort, kAnyPort};
  try {
    classify_flow(d, {by_src, by_dst});
    FAIL("expected AmbiguousSelectors");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::ambiguous_selectors);
  }
}

TEST_CASE("unmatched traffic passes through untouched") {
  Emulator em({flow("f", {"10.9.9.9", kAnyAddr, kAnyPort, kAnyPort}, {seg(1, 1000, 0, 1.0)})}, 1);
  const auto o = em.send(dgram("m", 3.0));
  REQUIRE_FALSE(o.dropped);
  REQUIRE(o.deliver_at == 3.0);
  REQUIRE(o.flow.empty());
}

TEST_CASE("segments are half-open") {
  CommProfile one{"p", {seg(10, 0, 0, 0)}};
  REQUIRE(&active_segment(one, 1e9) == &one.segments[0]);
  CommProfile two{"p", {seg(10, 0, 0, 0, 60.0), seg(20, 0, 0, 0)}};
  REQUIRE(active_segment(two, 59.9).bandwidth_kbps == 10);
  REQUIRE(active_segment(two, 60.0).bandwidth_kbps == 20);
  REQUIRE(active_segment(two, 1e6).bandwidth_kbps == 20);
}

TEST_CASE("profile validation") {
  REQUIRE_THROWS_AS(validate(CommProfile{"p", {}}), Error);
  REQUIRE_THROWS_AS(validate(CommProfile{"p", {seg(10, 0, 0, 1.5)}}), Error);
  REQUIRE_THROWS_AS(validate(CommProfile{"p", {seg(0, 0, 0, 0)}}), Error);
  REQUIRE_THROWS_AS(validate(CommProfile{"p", {seg(10, 0, 0, 0), seg(10, 0, 0, 0)}}), Error);
}

TEST_CASE("certain loss drops everything") {
  RngStream l(1, "netem.loss"), j(1, "netem.jitter");
  FlowState fs;
  for (int i = 0; i < 100; ++i) REQUIRE(schedule_delivery(dgram("m", i), fs, seg(40, 0, 0, 1.0), l, j).dropped);
  REQUIRE(l.draws() == 100);
  REQUIRE(j.draws() == 100);
}

TEST_CASE("serialization plus propagation delay") {
  RngStream l(1, "netem.loss"), j(1, "netem.jitter");
  FlowState fs;
  const auto o = schedule_delivery(dgram("m", 5.0, 1000), fs, seg(40, 500, 0, 0), l, j);
  REQUIRE(o.deliver_at == Approx(5.7).epsilon(1e-12));
}

TEST_CASE("back-to-back datagrams queue behind each other") {
  RngStream l(1, "netem.loss"), j(1, "netem.jitter");
  FlowState fs;
  const auto a = schedule_delivery(dgram("a", 0.0, 1000), fs, seg(40, 100, 0, 0), l, j);
  const double first_tx_end = fs.busy_until;
  const auto b = schedule_delivery(dgram("b", 0.0, 1000), fs, seg(40, 100, 0, 0), l, j);
  REQUIRE(first_tx_end == Approx(0.2));
  REQUIRE(fs.busy_until == Approx(0.4));
  REQUIRE(b.deliver_at >= a.deliver_at);
  REQUIRE(b.deliver_at == Approx(0.5));
}

TEST_CASE("jitter never reorders a flow") {
  Emulator em({flow("f", {"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort}, {seg(1000, 100, 900, 0.1)})}, 77);
  double last = -1;
  for (int i = 0; i < 20000; ++i) {
    const auto o = em.send(dgram("m" + std::to_string(i), i * 0.05));
    if (o.dropped) continue;
    REQUIRE(o.deliver_at >= last);
    last = o.deliver_at;
  }
}

TEST_CASE("zero impairment delivers instantly") {
  Emulator em({flow("f", {"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort}, {seg(1e15, 0, 0, 0)})}, 5);
  for (int i = 0; i < 100; ++i) {
    const auto o = em.send(dgram("m", i * 1.5));
    REQUIRE(std::abs(o.deliver_at - i * 1.5) <= 1e-9);
  }
}

TEST_CASE("raising loss never shrinks the dropped set") {
  auto dropped = [](double p) {
    Emulator em({flow("f", {"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort}, {seg(40, 600, 100, p)})}, 2024);
    std::vector<bool> out;
    for (int i = 0; i < 5000; ++i) out.push_back(em.send(dgram("m", i * 10.0)).dropped);
    return out;
  };
  const auto lo = dropped(0.05), mid = dropped(0.2), hi = dropped(0.6);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i]) REQUIRE(mid[i]);
    if (mid[i]) REQUIRE(hi[i]);
  }
}

TEST_CASE("empirical loss rate matches the configured probability") {
  for (double p : {0.01, 0.25, 0.5}) {
    Emulator em({flow("f", {"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort}, {seg(40, 600, 100, p)})}, 42);
    const int n = 20000;
    int lost = 0;
    for (int i = 0; i < n; ++i) lost += em.send(dgram("m", i * 10.0)).dropped;
    REQUIRE(std::abs(lost / double(n) - p) <= 3 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("deadline compliance") {
  REQUIRE(deadline_compliance({}) == 0.0);
  Emulator em({flow("gprs", {"10.0.1.1", kAnyAddr, kAnyPort, 102}, {seg(40, 600, 100, 0.0)})}, 42);
  for (int i = 0; i < 1000; ++i) em.send(dgram("m", i * 10.0, 250, i * 10.0 + 10.0));
  REQUIRE(deadline_compliance(em.log()) == 0.0);

  DeliveryOutcome late{"x", "f", 0.0, 1.0, false, 1.5};
  DeliveryOutcome on_time{"y", "f", 0.0, 1.0, false, 1.0};
  REQUIRE(deadline_compliance({late, on_time}) == 0.5);
  DeliveryOutcome no_deadline{"z", "f", 0.0, std::nullopt, false, 0.0};
  try {
    deadline_compliance({no_deadline});
    FAIL("expected MissingDeadline");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::missing_deadline);
  }
}

TEST_CASE("duplicate selectors are rejected") {
  FlowSelector s{"10.0.1.1", kAnyAddr, kAnyPort, kAnyPort};
  REQUIRE_THROWS_AS(Emulator({flow("a", s, {seg(1, 0, 0, 0)}), flow("b", s, {seg(1, 0, 0, 0)})}, 1), Error);
}
