#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "smartlab/error.hpp"

namespace smartlab::grid {

enum class Level { transmission, distribution };

struct Bus {
  std::string bus_id;
  Level level = Level::transmission;
  bool is_slack = false;

  bool operator==(const Bus&) const = default;
};

struct Line {
  std::string line_id;
  std::string from_bus;
  std::string to_bus;
  double reactance = 1.0;   // per-unit
  double flow_limit = 1.0;  // MW

  bool operator==(const Line&) const = default;
};

/// Buses and lines of a connected network with exactly one slack bus.
/// Construction validates the topology; lookups are by bus id or index.
class NetworkModel {
 public:
  NetworkModel() = default;
  NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, double base_mva = 100.0)
      : buses_(std::move(buses)), lines_(std::move(lines)), base_mva_(base_mva) {
    validate();
  }

  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const std::vector<Line>& lines() const noexcept { return lines_; }
  double base_mva() const noexcept { return base_mva_; }
  std::size_t bus_count() const noexcept { return buses_.size(); }
  std::size_t slack_index() const noexcept { return slack_; }

  bool has_bus(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t bus_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(Errc::unknown_bus, "unknown bus '" + id + "'");
    return it->second;
  }

  std::size_t from_index(std::size_t line) const { return line_ends_[line].first; }
  std::size_t to_index(std::size_t line) const { return line_ends_[line].second; }

  bool operator==(const NetworkModel& o) const {
    return buses_ == o.buses_ && lines_ == o.lines_ && base_mva_ == o.base_mva_;
  }

 private:
  void validate() {
    if (buses_.empty()) throw Error(Errc::invalid_network, "network has no buses");
    if (!(base_mva_ > 0)) throw Error(Errc::invalid_network, "base_mva must be positive");
    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
      if (!index_.emplace(buses_[i].bus_id, i).second) {
        throw Error(Errc::invalid_network, "duplicate bus id '" + buses_[i].bus_id + "'");
      }
      if (buses_[i].is_slack) {
        slack_ = i;
        ++slack_count;
      }
    }
    if (slack_count != 1) {
      throw Error(Errc::invalid_network,
                  "expected exactly one slack bus, found " + std::to_string(slack_count));
    }
    line_ends_.reserve(lines_.size());
    for (std::size_t l = 0; l < lines_.size(); ++l) {
      auto& line = lines_[l];
      if (line.line_id.empty()) line.line_id = "L" + std::to_string(l);
      if (line.from_bus == line.to_bus) {
        throw Error(Errc::invalid_network, "line " + line.line_id + " is a self-loop");
      }
      if (!(line.reactance > 0) || !(line.flow_limit > 0)) {
        throw Error(Errc::invalid_network,
                    "line " + line.line_id + " needs positive reactance and flow limit");
      }
      line_ends_.emplace_back(bus_index(line.from_bus), bus_index(line.to_bus));
    }
    // Connectivity by union-find.
    std::vector<std::size_t> parent(buses_.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::size_t components = buses_.size();
    for (const auto& [a, b] : line_ends_) {
      auto ra = find(a), rb = find(b);
      if (ra != rb) {
        parent[ra] = rb;
        --components;
      }
    }
    if (components != 1) throw Error(Errc::invalid_network, "network is not connected");
  }

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  double base_mva_ = 100.0;
  std::size_t slack_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::size_t, std::size_t>> line_ends_;
};

/// Converts a bus-id keyed injection map into a vector ordered like the
/// network's buses. Every bus must have an entry.
inline std::vector<double> injection_vector(const NetworkModel& net,
                                            const std::map<std::string, double>& injections) {
  std::vector<double> out(net.bus_count(), 0.0);
  for (std::size_t i = 0; i < net.bus_count(); ++i) {
    auto it = injections.find(net.buses()[i].bus_id);
    if (it == injections.end()) {
      throw Error(Errc::unknown_bus, "no injection entry for bus '" + net.buses()[i].bus_id + "'");
    }
    out[i] = it->second;
  }
  if (injections.size() != net.bus_count()) {
    for (const auto& [id, value] : injections) net.bus_index(id);
  }
  return out;
}

/// Lossless linearized power flow. Injections in MW, one per bus (the slack
/// entry is ignored; the slack absorbs the residual). Returns one flow per
/// line, positive in the from->to direction.
inline std::vector<double> dc_power_flow(const NetworkModel& net, const std::vector<double>& injections) {
  const std::size_t n = net.bus_count();
  if (injections.size() != n) {
    throw Error(Errc::invalid_network, "injection vector size does not match bus count");
  }
  const std::size_t slack = net.slack_index();
  // Reduced index: skip the slack row/column.
  std::vector<std::size_t> reduced(n, n);
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != slack) reduced[i] = m++;
  }

  std::vector<double> a(m * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  for (std::size_t l = 0; l < net.lines().size(); ++l) {
    const double b = 1.0 / net.lines()[l].reactance;
    const std::size_t i = reduced[net.from_index(l)];
    const std::size_t j = reduced[net.to_index(l)];
    if (i < m) a[i * m + i] += b;
    if (j < m) a[j * m + j] += b;
    if (i < m && j < m) {
      a[i * m + j] -= b;
      a[j * m + i] -= b;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i != slack) rhs[reduced[i]] = injections[i];
  }

  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));

  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(a[r * m + col]) > std::abs(a[pivot * m + col])) pivot = r;
    }
    if (std::abs(a[pivot * m + col]) <= 1e-12 * scale) {
      throw Error(Errc::singular_network, "reduced susceptance matrix is singular");
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < m; ++c) std::swap(a[col * m + c], a[pivot * m + c]);
      std::swap(rhs[col], rhs[pivot]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const double f = a[r * m + col] / a[col * m + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < m; ++c) a[r * m + c] -= f * a[col * m + c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> theta_reduced(m, 0.0);
  for (std::size_t k = m; k-- > 0;) {
    double s = rhs[k];
    for (std::size_t c = k + 1; c < m; ++c) s -= a[k * m + c] * theta_reduced[c];
    theta_reduced[k] = s / a[k * m + k];
  }

  std::vector<double> theta(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != slack) theta[i] = theta_reduced[reduced[i]];
  }
  std::vector<double> flows(net.lines().size());
  for (std::size_t l = 0; l < flows.size(); ++l) {
    flows[l] = (theta[net.from_index(l)] - theta[net.to_index(l)]) / net.lines()[l].reactance;
  }
  return flows;
}

inline std::vector<double> dc_power_flow(const NetworkModel& net,
                                         const std::map<std::string, double>& injections) {
  return dc_power_flow(net, injection_vector(net, injections));
}

/// Net outflow at every bus implied by a flow vector (the slack entry is the
/// injection the slack had to supply).
inline std::vector<double> bus_net_outflow(const NetworkModel& net, const std::vector<double>& flows) {
  std::vector<double> out(net.bus_count(), 0.0);
  for (std::size_t l = 0; l < flows.size(); ++l) {
    out[net.from_index(l)] += flows[l];
    out[net.to_index(l)] -= flows[l];
  }
  return out;
}

struct LineViolation {
  std::string line_id;
  std::size_t line_index = 0;
  double overload_mw = 0.0;
};

inline std::vector<LineViolation> check_line_limits(const NetworkModel& net,
                                                    const std::vector<double>& flows) {
  std::vector<LineViolation> out;
  for (std::size_t l = 0; l < flows.size() && l < net.lines().size(); ++l) {
    const double magnitude = std::abs(flows[l]);
    if (magnitude > net.lines()[l].flow_limit) {
      out.push_back({net.lines()[l].line_id, l, magnitude - net.lines()[l].flow_limit});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate frequency and secondary regulation
// ---------------------------------------------------------------------------

struct FrequencyState {
  double delta_f = 0.0;       // pu
  double agc_integral = 0.0;  // pu*s
  double inertia_2h = 10.0;   // s
  double damping_d = 1.0;     // pu
  double bias_b = 1.0;        // pu
  double agc_kp = 1.0;
  double agc_ki = 0.1;

  bool operator==(const FrequencyState&) const = default;
};

/// Explicit update of the swing equation. `power_imbalance` is the net surplus
/// in pu (generation minus load, AGC output already included).
inline FrequencyState step_frequency(FrequencyState state, double power_imbalance, double dt) {
  if (!(dt > 0)) throw Error(Errc::non_positive_dt, "dt must be positive");
  if (!(state.inertia_2h > 0)) throw Error(Errc::invalid_network, "inertia_2h must be positive");
  state.delta_f += dt * (power_imbalance - state.damping_d * state.delta_f) / state.inertia_2h;
  return state;
}

/// PI secondary control on ACE = B * delta_f. Accumulates the integral in
/// `state` and returns the regulation request in pu.
inline double agc_step(FrequencyState& state, double dt) {
  if (!(dt > 0)) throw Error(Errc::non_positive_dt, "dt must be positive");
  const double ace = state.bias_b * state.delta_f;
  state.agc_integral += ace * dt;
  return -(state.agc_kp * ace + state.agc_ki * state.agc_integral);
}

}  // namespace smartlab::grid
