#include "catch_amalgamated.hpp"

#include <string>
#include <vector>

#include "smartlab/simcore.hpp"

using namespace smartlab;

TEST_CASE("event at now fires before later events") {
  Engine e;
  std::vector<std::string> seen;
  e.schedule(1.0, [&](Engine&) { seen.push_back("later"); });
  e.schedule(0.0, [&](Engine&) { seen.push_back("now"); });
  e.run_until(2.0);
  REQUIRE(seen == std::vector<std::string>{"now", "later"});
}

TEST_CASE("equal timestamps dequeue in insertion order") {
  Engine e;
  std::string order;
  for (char c : std::string("ABCDE")) e.schedule(5.0, [&order, c](Engine&) { order += c; });
  e.run_until(5.0);
  REQUIRE(order == "ABCDE");
}

TEST_CASE("scheduling in the past is rejected") {
  Engine e;
  e.run_until(10.0);
  try {
    e.schedule(9.0, [](Engine&) {});
    FAIL("expected PastEvent");
  } catch (const Error& err) {
    REQUIRE(err.code() == Errc::past_event);
  }
  REQUIRE_NOTHROW(e.schedule(10.0, [](Engine&) {}));
}

TEST_CASE("run_until on an empty queue advances the clock") {
  Engine e;
  REQUIRE(e.run_until(100.0) == 0);
  REQUIRE(e.now() == 100.0);
}

TEST_CASE("run_until stops at the horizon") {
  Engine e;
  for (double t : {1.0, 2.0, 3.0}) e.schedule(t, [](Engine&) {});
  REQUIRE(e.run_until(2.0) == 2);
  REQUIRE(e.now() == 2.0);
  REQUIRE(e.pending() == 1);
}

TEST_CASE("handlers may schedule children inside the horizon") {
  Engine e;
  int child = 0;
  e.schedule(1.0, [&](Engine& en) { en.schedule(4.0, [&](Engine&) { ++child; }); });
  REQUIRE(e.run_until(5.0) == 2);
  REQUIRE(child == 1);
}

TEST_CASE("handlers never see the clock go backwards") {
  Engine e;
  RngStream rng(7, "test");
  double last = -1.0;
  bool monotone = true;
  std::function<void(Engine&)> h = [&](Engine& en) {
    monotone = monotone && en.now() >= last;
    last = en.now();
    if (en.processed_count() < 500) en.schedule_in(rng.uniform(0.0, 3.0), h);
  };
  for (int i = 0; i < 5; ++i) e.schedule(rng.uniform(0.0, 10.0), h);
  e.run_until(1e6);
  REQUIRE(monotone);
}

TEST_CASE("no event is lost") {
  Engine e;
  RngStream rng(3, "ledger");
  std::vector<Ticket> tickets;
  for (int i = 0; i < 200; ++i) tickets.push_back(e.schedule(rng.uniform(0.0, 100.0), [](Engine&) {}));
  for (int i = 0; i < 200; i += 3) e.cancel(tickets[i]);
  auto balanced = [&] {
    return e.scheduled_count() == e.processed_count() + e.cancelled_count() + e.pending();
  };
  REQUIRE(balanced());
  e.run_until(50.0);
  REQUIRE(balanced());
  REQUIRE_FALSE(e.cancel(tickets[0]));
  e.run_until(100.0);
  REQUIRE(balanced());
  REQUIRE(e.pending() == 0);
}

TEST_CASE("cancelled events do not fire") {
  Engine e;
  int fired = 0;
  auto t = e.schedule(1.0, [&](Engine&) { ++fired; });
  REQUIRE(e.cancel(t));
  e.run_until(2.0);
  REQUIRE(fired == 0);
}

TEST_CASE("rng streams are reproducible and separated") {
  RngStream a1(42, "a"), a2(42, "a"), b(42, "b"), other_seed(43, "a");
  bool differs_b = false, differs_seed = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a1.next_u64();
    REQUIRE(x == a2.next_u64());
    differs_b |= x != b.next_u64();
    differs_seed |= x != other_seed.next_u64();
  }
  REQUIRE(differs_b);
  REQUIRE(differs_seed);
  REQUIRE(a1.draws() == 100);
}

TEST_CASE("rng_uniform lies in [0,1) with mean near one half") {
  RngStream s(2024, "mean");
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng_uniform(s);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  const double mean = sum / n;
  REQUIRE(mean >= 0.49);
  REQUIRE(mean <= 0.51);
}
