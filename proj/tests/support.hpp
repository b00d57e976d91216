#pragma once

// Random instance generators shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "smartlab/grid.hpp"
#include "smartlab/market.hpp"
#include "smartlab/simcore.hpp"

namespace smartlab::testing {

/// Connected network: a random spanning tree plus `extra` chords, bus 0 slack.
inline grid::NetworkModel random_network(RngStream& rng, int buses, int extra, double limit_mw = 1e6) {
  std::vector<grid::Bus> bs;
  for (int i = 0; i < buses; ++i) bs.push_back({"B" + std::to_string(i), grid::Level::transmission, i == 0});
  std::vector<grid::Line> ls;
  auto pick = [&](int n) { return static_cast<int>(rng.uniform() * n) % n; };
  for (int i = 1; i < buses; ++i) {
    ls.push_back({"", "B" + std::to_string(pick(i)), "B" + std::to_string(i), rng.uniform(0.01, 0.5), limit_mw});
  }
  for (int k = 0; k < extra; ++k) {
    int a = pick(buses), b = pick(buses);
    if (a == b) b = (a + 1) % buses;
    ls.push_back({"", "B" + std::to_string(a), "B" + std::to_string(b), rng.uniform(0.01, 0.5), limit_mw});
  }
  for (std::size_t l = 0; l < ls.size(); ++l) ls[l].line_id = "L" + std::to_string(l);
  return grid::NetworkModel(std::move(bs), std::move(ls));
}

inline std::vector<double> random_injections(RngStream& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

/// Up to `max_bids` bids in one direction on the 0.5 kW grid (0.5..3 kW),
/// integer prices, spread over the network's buses.
inline std::vector<market::Bid> random_grid_bids(RngStream& rng, const grid::NetworkModel& net, market::Direction dir,
                                                 int max_bids) {
  const int n = 1 + static_cast<int>(rng.uniform() * max_bids) % max_bids;
  std::vector<market::Bid> out;
  for (int i = 0; i < n; ++i) {
    const double q = 0.5 * (1 + static_cast<int>(rng.uniform() * 6) % 6);
    const double p = static_cast<double>(static_cast<int>(rng.uniform() * 100) % 100);
    const auto& bus = net.buses()[static_cast<std::size_t>(rng.uniform() * net.bus_count()) % net.bus_count()];
    out.push_back({"b" + std::to_string(i), "agg" + std::to_string(i % 3), bus.bus_id, dir, q, p});
  }
  return out;
}

}  // namespace smartlab::testing
