#pragma once

// Independent reference computations used by the test suite and the CLI
// `oracle` verb. Requires Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "smartlab/grid.hpp"
#include "smartlab/market.hpp"

namespace smartlab::oracle {

/// DC power flow through the incidence-matrix formulation and a full-pivot
/// LU solve. Same conventions as grid::dc_power_flow.
inline std::vector<double> dense_power_flow(const grid::NetworkModel& net, const std::vector<double>& injections_mw) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  const auto L = static_cast<Eigen::Index>(net.lines().size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(L, n);
  Eigen::VectorXd y(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    A(l, static_cast<Eigen::Index>(net.from_index(l))) = 1.0;
    A(l, static_cast<Eigen::Index>(net.to_index(l))) = -1.0;
    y(l) = 1.0 / net.lines()[l].reactance;
  }
  const Eigen::MatrixXd B = A.transpose() * y.asDiagonal() * A;
  const auto s = static_cast<Eigen::Index>(net.slack_index());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != s) keep.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd Br(m, m);
  Eigen::VectorXd p(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    p(r) = injections_mw[static_cast<std::size_t>(keep[r])];
    for (Eigen::Index c = 0; c < m; ++c) Br(r, c) = B(keep[r], keep[c]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Br);
  if (!lu.isInvertible()) throw Error(Errc::singular_network, "reduced susceptance matrix is singular");
  const Eigen::VectorXd theta_r = lu.solve(p);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r) theta(keep[r]) = theta_r(r);
  const Eigen::VectorXd f = y.asDiagonal() * (A * theta);
  return {f.data(), f.data() + f.size()};
}

struct MarketOptimum {
  double covered_kw = 0.0;
  double cost = 0.0;  // sum of sign * kW * price, as ClearingResult::merit_cost
};

/// Minimum merit cost over every allocation on a `unit_kw` grid that covers
/// min(|imbalance|, offered) in the imbalance direction, ignoring the network.
/// Exact dynamic programme over (bid, covered units); quantities must lie on
/// the grid.
inline MarketOptimum exact_market_optimum(const market::BidBook& book, double imbalance_kw, double unit_kw = 0.5) {
  MarketOptimum out;
  if (imbalance_kw == 0.0) return out;
  const auto dir = imbalance_kw > 0 ? market::Direction::up : market::Direction::down;
  const double sign = market::injection_sign(dir);
  std::vector<std::pair<long, double>> items;
  long offered = 0;
  for (const auto& b : book.bids()) {
    if (b.direction != dir) continue;
    const long q = std::lround(b.quantity_kw / unit_kw);
    items.emplace_back(q, b.price_eur_mwh);
    offered += q;
  }
  const long target = std::min(offered, std::lround(std::abs(imbalance_kw) / unit_kw));
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(static_cast<std::size_t>(target) + 1, inf);
  best[0] = 0.0;
  for (const auto& [q, price] : items) {
    std::vector<double> next(best.size(), inf);
    for (long have = 0; have <= target; ++have) {
      if (best[have] == inf) continue;
      for (long take = 0; take <= q && have + take <= target; ++take) {
        const double c = best[have] + sign * static_cast<double>(take) * unit_kw * price;
        next[have + take] = std::min(next[have + take], c);
      }
    }
    best = std::move(next);
  }
  out.covered_kw = static_cast<double>(target) * unit_kw;
  out.cost = best[target];
  return out;
}

/// True when the accepted set is a prefix of the merit order: every bid
/// strictly better than an accepted one is fully accepted.
inline bool is_merit_prefix(const market::ClearingResult& r, const market::BidBook& book, double tol = 1e-9) {
  if (!r.direction) return r.accepted.empty();
  const auto order = market::merit_order(book, *r.direction);
  auto accepted = [&](const std::string& id) {
    for (const auto& a : r.accepted) {
      if (a.bid_id == id) return a.accepted_kw;
    }
    return 0.0;
  };
  bool seen_partial = false;
  for (const auto* b : order) {
    const double q = accepted(b->bid_id);
    if (seen_partial && q > tol) return false;
    if (q < b->quantity_kw - tol) seen_partial = true;
  }
  return true;
}

}  // namespace smartlab::oracle
