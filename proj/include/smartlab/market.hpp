#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "smartlab/error.hpp"
#include "smartlab/grid.hpp"

namespace smartlab::market {

enum class Direction { up, down };

inline const char* to_string(Direction d) { return d == Direction::up ? "up" : "down"; }

/// Sign of the injection change an activated bid produces.
inline double injection_sign(Direction d) { return d == Direction::up ? 1.0 : -1.0; }

struct Bid {
  std::string bid_id;
  std::string aggregator_id;
  std::string bus_id;
  Direction direction = Direction::up;
  double quantity_kw = 0.0;
  double price_eur_mwh = 0.0;

  bool operator==(const Bid&) const = default;
};

/// Frozen set of bids for one clearing round. Bid ids are unique and every
/// quantity is positive.
class BidBook {
 public:
  BidBook() = default;
  BidBook(std::vector<Bid> bids, int round_index) : bids_(std::move(bids)), round_index_(round_index) {
    std::set<std::string> seen;
    for (const auto& b : bids_) {
      if (!seen.insert(b.bid_id).second) {
        throw Error(Errc::duplicate_bid_id, "bid id '" + b.bid_id + "' submitted twice");
      }
      if (!(b.quantity_kw > 0) || !std::isfinite(b.quantity_kw) || !std::isfinite(b.price_eur_mwh)) {
        throw Error(Errc::invalid_bid, "bid '" + b.bid_id + "' needs a positive finite quantity");
      }
    }
  }

  const std::vector<Bid>& bids() const noexcept { return bids_; }
  std::size_t size() const noexcept { return bids_.size(); }
  bool empty() const noexcept { return bids_.empty(); }
  int round_index() const noexcept { return round_index_; }

  const Bid* find(const std::string& bid_id) const {
    for (const auto& b : bids_) {
      if (b.bid_id == bid_id) return &b;
    }
    return nullptr;
  }

 private:
  std::vector<Bid> bids_;
  int round_index_ = 0;
};

inline BidBook collect_bids(std::vector<Bid> submissions, int round_index, const grid::NetworkModel& net) {
  for (const auto& b : submissions) {
    if (!net.has_bus(b.bus_id)) {
      throw Error(Errc::unknown_bus, "bid '" + b.bid_id + "' references unknown bus '" + b.bus_id + "'");
    }
  }
  return BidBook(std::move(submissions), round_index);
}

struct Acceptance {
  std::string bid_id;
  std::string aggregator_id;
  std::string bus_id;
  Direction direction = Direction::up;
  double price_eur_mwh = 0.0;
  double offered_kw = 0.0;
  double accepted_kw = 0.0;   // after curtailment
  double curtailed_kw = 0.0;  // removed by the network check

  bool operator==(const Acceptance&) const = default;
};

struct ClearingResult {
  int round_index = 0;
  double requested_kw = 0.0;  // |imbalance|
  std::optional<Direction> direction;
  std::vector<Acceptance> accepted;  // merit order, entries with a non-zero pre-curtailment quantity
  std::optional<double> clearing_price_up;
  std::optional<double> clearing_price_down;
  double uncovered_kw = 0.0;
  std::vector<grid::LineViolation> residual_violations;

  double total_accepted_kw() const {
    double s = 0.0;
    for (const auto& a : accepted) s += a.accepted_kw;
    return s;
  }
  double total_curtailed_kw() const {
    double s = 0.0;
    for (const auto& a : accepted) s += a.curtailed_kw;
    return s;
  }
  /// Objective minimized by merit order: pay-as-bid cost for up, negative
  /// value for down. EUR/MWh * kW.
  double merit_cost() const {
    double s = 0.0;
    for (const auto& a : accepted) s += injection_sign(a.direction) * a.accepted_kw * a.price_eur_mwh;
    return s;
  }
  std::size_t accepted_count() const {
    return static_cast<std::size_t>(
        std::count_if(accepted.begin(), accepted.end(), [](const Acceptance& a) { return a.accepted_kw > 0; }));
  }
};

/// Bids of one direction in merit order: cheapest first for up, highest
/// price first for down, ties by bid id.
inline std::vector<const Bid*> merit_order(const BidBook& book, Direction dir) {
  std::vector<const Bid*> out;
  for (const auto& b : book.bids()) {
    if (b.direction == dir) out.push_back(&b);
  }
  std::sort(out.begin(), out.end(), [dir](const Bid* a, const Bid* b) {
    if (a->price_eur_mwh != b->price_eur_mwh) {
      return dir == Direction::up ? a->price_eur_mwh < b->price_eur_mwh
                                  : a->price_eur_mwh > b->price_eur_mwh;
    }
    return a->bid_id < b->bid_id;
  });
  return out;
}

namespace detail {

class PtdfCache {
 public:
  explicit PtdfCache(const grid::NetworkModel& net) : net_(net) {}

  /// Flow change on `line` per MW injected at `bus` (withdrawn at the slack).
  double at(std::size_t line, std::size_t bus) {
    auto it = columns_.find(bus);
    if (it == columns_.end()) {
      std::vector<double> unit(net_.bus_count(), 0.0);
      if (bus != net_.slack_index()) unit[bus] = 1.0;
      it = columns_.emplace(bus, grid::dc_power_flow(net_, unit)).first;
    }
    return it->second[line];
  }

 private:
  const grid::NetworkModel& net_;
  std::unordered_map<std::size_t, std::vector<double>> columns_;
};

inline void apply_acceptances(const grid::NetworkModel& net, std::vector<double>& injections_mw,
                              const std::vector<Acceptance>& accepted) {
  for (const auto& a : accepted) {
    injections_mw[net.bus_index(a.bus_id)] += injection_sign(a.direction) * a.accepted_kw / 1000.0;
  }
}

}  // namespace detail

/// Clears `book` against `imbalance_kw` (positive = shortage, met with up
/// bids; negative = surplus, met with down bids). Greedy merit order with a
/// uniform price at the marginal accepted bid, followed by a DC power-flow
/// check; bids that aggravate an overloaded line are curtailed in reverse
/// merit order until the dispatch is feasible.
///
/// `injections_mw` is the pre-clearing operating point, one entry per bus.
inline ClearingResult clear_market(const BidBook& book, double imbalance_kw, const grid::NetworkModel& net,
                                   const std::vector<double>& injections_mw) {
  if (!std::isfinite(imbalance_kw)) throw Error(Errc::invalid_bid, "imbalance must be finite");
  ClearingResult result;
  result.round_index = book.round_index();
  result.requested_kw = std::abs(imbalance_kw);
  if (imbalance_kw == 0.0) return result;

  const Direction dir = imbalance_kw > 0 ? Direction::up : Direction::down;
  result.direction = dir;

  double remaining = result.requested_kw;
  for (const Bid* b : merit_order(book, dir)) {
    if (remaining <= 0) break;
    const double take = std::min(b->quantity_kw, remaining);
    remaining -= take;
    result.accepted.push_back({b->bid_id, b->aggregator_id, b->bus_id, dir, b->price_eur_mwh,
                               b->quantity_kw, take, 0.0});
  }

  // Network feasibility.
  detail::PtdfCache ptdf(net);
  std::vector<double> inj = injections_mw;
  detail::apply_acceptances(net, inj, result.accepted);
  const std::size_t max_iterations = 4 * (result.accepted.size() + 1) * (net.lines().size() + 1);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    const auto flows = grid::dc_power_flow(net, inj);
    const auto violations = grid::check_line_limits(net, flows);
    if (violations.empty()) break;
    const auto worst = *std::max_element(violations.begin(), violations.end(),
                                         [](const auto& a, const auto& b) { return a.overload_mw < b.overload_mw; });
    const double flow_sign = flows[worst.line_index] > 0 ? 1.0 : -1.0;

    Acceptance* victim = nullptr;
    double sensitivity = 0.0;
    for (auto it = result.accepted.rbegin(); it != result.accepted.rend(); ++it) {
      if (it->accepted_kw <= 0) continue;
      const double s =
          ptdf.at(worst.line_index, net.bus_index(it->bus_id)) * injection_sign(it->direction) * flow_sign;
      if (s > 1e-12) {
        victim = &*it;
        sensitivity = s;
        break;
      }
    }
    if (victim == nullptr) {
      result.residual_violations = violations;
      break;
    }
    const double needed_kw = worst.overload_mw / sensitivity * 1000.0;
    const double cut = std::min(victim->accepted_kw, needed_kw * (1.0 + 1e-9) + 1e-9);
    victim->accepted_kw -= cut;
    if (victim->accepted_kw < 1e-12) {
      victim->curtailed_kw += victim->accepted_kw + cut;
      victim->accepted_kw = 0.0;
    } else {
      victim->curtailed_kw += cut;
    }
    inj[net.bus_index(victim->bus_id)] -= injection_sign(victim->direction) * cut / 1000.0;
  }

  result.uncovered_kw = std::max(0.0, result.requested_kw - result.total_accepted_kw());
  for (auto it = result.accepted.rbegin(); it != result.accepted.rend(); ++it) {
    if (it->accepted_kw > 0) {
      (dir == Direction::up ? result.clearing_price_up : result.clearing_price_down) = it->price_eur_mwh;
      break;
    }
  }
  return result;
}

inline ClearingResult clear_market(const BidBook& book, double imbalance_kw, const grid::NetworkModel& net,
                                   const std::map<std::string, double>& injections_mw) {
  return clear_market(book, imbalance_kw, net, grid::injection_vector(net, injections_mw));
}

// ---------------------------------------------------------------------------
// TSO-DSO coordination
// ---------------------------------------------------------------------------

struct MarketConfig {
  /// When set, distribution-level bids first serve the local distribution
  /// imbalance; only their unused remainder reaches the central market.
  bool dso_prefilter = false;
  double dso_imbalance_kw = 0.0;

  bool operator==(const MarketConfig&) const = default;
};

struct CoordinatedResult {
  std::optional<ClearingResult> local;
  ClearingResult central;

  std::vector<const ClearingResult*> stages() const {
    std::vector<const ClearingResult*> out;
    if (local) out.push_back(&*local);
    out.push_back(&central);
    return out;
  }
};

inline CoordinatedResult clear_coordinated(const BidBook& book, double imbalance_kw, const MarketConfig& cfg,
                                           const grid::NetworkModel& net, const std::vector<double>& injections_mw) {
  CoordinatedResult out;
  if (!cfg.dso_prefilter) {
    out.central = clear_market(book, imbalance_kw, net, injections_mw);
    return out;
  }
  std::vector<Bid> local_bids;
  for (const auto& b : book.bids()) {
    if (net.buses()[net.bus_index(b.bus_id)].level == grid::Level::distribution) local_bids.push_back(b);
  }
  out.local = clear_market(BidBook(local_bids, book.round_index()), cfg.dso_imbalance_kw, net, injections_mw);

  std::map<std::string, double> used;
  for (const auto& a : out.local->accepted) used[a.bid_id] += a.accepted_kw;
  std::vector<Bid> residual;
  for (auto b : book.bids()) {
    auto it = used.find(b.bid_id);
    if (it != used.end()) b.quantity_kw -= it->second;
    if (b.quantity_kw > 1e-9) residual.push_back(b);
  }
  std::vector<double> inj = injections_mw;
  detail::apply_acceptances(net, inj, out.local->accepted);
  out.central = clear_market(BidBook(std::move(residual), book.round_index()), imbalance_kw, net, inj);
  return out;
}

// ---------------------------------------------------------------------------
// Activation signals
// ---------------------------------------------------------------------------

struct ActivationSignal {
  std::string aggregator_id;
  int round_index = 0;
  Direction direction = Direction::up;
  double quantity_kw = 0.0;
  double issued_at = 0.0;
  double valid_for_s = 10.0;

  double valid_until() const noexcept { return issued_at + valid_for_s; }
  bool valid_at(double t) const noexcept { return t >= issued_at && t < valid_until(); }

  bool operator==(const ActivationSignal&) const = default;
};

/// One signal per (aggregator, direction) with the summed accepted quantity.
/// Aggregators with nothing accepted get no signal.
inline std::vector<ActivationSignal> build_activation_signals(const std::vector<const ClearingResult*>& stages,
                                                              const BidBook& book, double issued_at = 0.0,
                                                              double valid_for_s = 10.0) {
  std::map<std::pair<std::string, int>, double> sums;
  for (const ClearingResult* r : stages) {
    for (const auto& a : r->accepted) {
      if (a.accepted_kw <= 0) continue;
      const Bid* b = book.find(a.bid_id);
      const std::string& agg = b ? b->aggregator_id : a.aggregator_id;
      sums[{agg, static_cast<int>(a.direction)}] += a.accepted_kw;
    }
  }
  std::vector<ActivationSignal> out;
  for (const auto& [key, qty] : sums) {
    out.push_back({key.first, book.round_index(), static_cast<Direction>(key.second), qty, issued_at, valid_for_s});
  }
  return out;
}

inline std::vector<ActivationSignal> build_activation_signals(const ClearingResult& result, const BidBook& book,
                                                              double issued_at = 0.0, double valid_for_s = 10.0) {
  return build_activation_signals(std::vector<const ClearingResult*>{&result}, book, issued_at, valid_for_s);
}

}  // namespace smartlab::market
