#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "smartlab/error.hpp"
#include "smartlab/simcore.hpp"

namespace smartlab::netem {

inline constexpr int kAnyPort = -1;
inline const std::string kAnyAddr = "*";

struct FlowSelector {
  std::string src_addr = kAnyAddr;
  std::string dst_addr = kAnyAddr;
  int src_port = kAnyPort;
  int dst_port = kAnyPort;

  int specificity() const noexcept {
    return (src_addr != kAnyAddr) + (dst_addr != kAnyAddr) + (src_port != kAnyPort) + (dst_port != kAnyPort);
  }

  bool operator==(const FlowSelector&) const = default;
};

struct ProfileSegment {
  double duration_s = std::numeric_limits<double>::infinity();
  double bandwidth_kbps = 1e12;
  double delay_ms = 0.0;
  double jitter_ms = 0.0;
  double loss_prob = 0.0;

  bool operator==(const ProfileSegment&) const = default;
};

struct CommProfile {
  std::string name;
  std::vector<ProfileSegment> segments;

  bool operator==(const CommProfile&) const = default;
};

inline void validate(const CommProfile& p) {
  if (p.segments.empty()) throw Error(Errc::invalid_profile, "profile '" + p.name + "' has no segments");
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    const auto& s = p.segments[i];
    const bool last = i + 1 == p.segments.size();
    if (!(s.loss_prob >= 0 && s.loss_prob <= 1) || !(s.bandwidth_kbps > 0) || !(s.delay_ms >= 0) ||
        !(s.jitter_ms >= 0)) {
      throw Error(Errc::invalid_profile, "profile '" + p.name + "' segment " + std::to_string(i) + " out of range");
    }
    if (!(s.duration_s > 0) || (!last && std::isinf(s.duration_s))) {
      throw Error(Errc::invalid_profile, "profile '" + p.name + "': only the last segment may be open-ended");
    }
  }
}

struct Datagram {
  std::string msg_id;
  std::string src_addr;
  int src_port = 0;
  std::string dst_addr;
  int dst_port = 0;
  int size_bytes = 1;
  double sent_at = 0.0;
  std::optional<double> deadline_at;
};

inline bool matches(const FlowSelector& s, const Datagram& d) {
  return (s.src_addr == kAnyAddr || s.src_addr == d.src_addr) &&
         (s.dst_addr == kAnyAddr || s.dst_addr == d.dst_addr) &&
         (s.src_port == kAnyPort || s.src_port == d.src_port) &&
         (s.dst_port == kAnyPort || s.dst_port == d.dst_port);
}

/// Index of the most specific matching selector, or nullopt for passthrough.
inline std::optional<std::size_t> classify_flow(const Datagram& d, const std::vector<FlowSelector>& selectors) {
  std::optional<std::size_t> best;
  bool tied = false;
  for (std::size_t i = 0; i < selectors.size(); ++i) {
    if (!matches(selectors[i], d)) continue;
    if (!best || selectors[i].specificity() > selectors[*best].specificity()) {
      best = i;
      tied = false;
    } else if (selectors[i].specificity() == selectors[*best].specificity()) {
      tied = true;
    }
  }
  if (tied) {
    throw Error(Errc::ambiguous_selectors, "datagram '" + d.msg_id + "' matches two equally specific selectors");
  }
  return best;
}

/// Segment in force `elapsed_s` after the profile was attached; segments are
/// half-open [start, end) and the last one never ends.
inline const ProfileSegment& active_segment(const CommProfile& profile, double elapsed_s) {
  double start = 0.0;
  for (std::size_t i = 0; i + 1 < profile.segments.size(); ++i) {
    start += profile.segments[i].duration_s;
    if (elapsed_s < start) return profile.segments[i];
  }
  return profile.segments.back();
}

struct FlowState {
  double busy_until = 0.0;
  double last_delivery = -std::numeric_limits<double>::infinity();
};

struct DeliveryOutcome {
  std::string msg_id;
  std::string flow;  // empty for passthrough
  double sent_at = 0.0;
  std::optional<double> deadline_at;
  bool dropped = false;
  double deliver_at = 0.0;  // meaningless when dropped

  bool missed_deadline() const noexcept { return dropped || (deadline_at && deliver_at > *deadline_at); }
};

/// Store-and-forward model of one flow. Exactly one draw is taken from each
/// of `loss_rng` and `jitter_rng` per datagram, dropped or not.
inline DeliveryOutcome schedule_delivery(const Datagram& d, FlowState& flow, const ProfileSegment& seg,
                                         RngStream& loss_rng, RngStream& jitter_rng) {
  DeliveryOutcome out{d.msg_id, {}, d.sent_at, d.deadline_at, false, 0.0};
  const double u_loss = loss_rng.uniform();
  const double u_jitter = jitter_rng.uniform();
  if (u_loss < seg.loss_prob) {
    out.dropped = true;
    return out;
  }
  const double tx_start = std::max(d.sent_at, flow.busy_until);
  const double tx_end = tx_start + 8.0 * d.size_bytes / (1000.0 * seg.bandwidth_kbps);
  flow.busy_until = tx_end;
  const double computed = tx_end + seg.delay_ms / 1000.0 + seg.jitter_ms / 1000.0 * u_jitter;
  out.deliver_at = std::max(computed, flow.last_delivery);
  flow.last_delivery = out.deliver_at;
  return out;
}

inline double deadline_compliance(const std::vector<DeliveryOutcome>& outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t missed = 0;
  for (const auto& o : outcomes) {
    if (!o.deadline_at) throw Error(Errc::missing_deadline, "datagram '" + o.msg_id + "' has no deadline");
    if (o.missed_deadline()) ++missed;
  }
  return static_cast<double>(missed) / static_cast<double>(outcomes.size());
}

struct FlowConfig {
  std::string name;
  FlowSelector selector;
  CommProfile profile;
  double attached_at = 0.0;

  bool operator==(const FlowConfig&) const = default;
};

/// Switch-level emulator: classifies datagrams onto configured flows and
/// applies each flow's profile. Unmatched traffic passes through untouched.
class Emulator {
 public:
  Emulator(std::vector<FlowConfig> flows, std::uint64_t seed)
      : flows_(std::move(flows)), states_(flows_.size()), loss_rng_(seed, "netem.loss"), jitter_rng_(seed, "netem.jitter") {
    for (std::size_t i = 0; i < flows_.size(); ++i) {
      validate(flows_[i].profile);
      selectors_.push_back(flows_[i].selector);
      for (std::size_t j = 0; j < i; ++j) {
        if (flows_[j].selector == flows_[i].selector) {
          throw Error(Errc::ambiguous_selectors, "flows '" + flows_[j].name + "' and '" + flows_[i].name +
                                                     "' share a selector");
        }
      }
    }
  }

  DeliveryOutcome send(const Datagram& d) {
    if (!(d.size_bytes > 0)) throw Error(Errc::invalid_profile, "datagram size must be positive");
    const auto idx = classify_flow(d, selectors_);
    DeliveryOutcome out;
    if (!idx) {
      out = DeliveryOutcome{d.msg_id, {}, d.sent_at, d.deadline_at, false, d.sent_at};
    } else {
      const auto& cfg = flows_[*idx];
      const auto& seg = active_segment(cfg.profile, std::max(0.0, d.sent_at - cfg.attached_at));
      out = schedule_delivery(d, states_[*idx], seg, loss_rng_, jitter_rng_);
      out.flow = cfg.name;
    }
    log_.push_back(out);
    return out;
  }

  const std::vector<DeliveryOutcome>& log() const noexcept { return log_; }
  const std::vector<FlowConfig>& flows() const noexcept { return flows_; }

 private:
  std::vector<FlowConfig> flows_;
  std::vector<FlowSelector> selectors_;
  std::vector<FlowState> states_;
  RngStream loss_rng_;
  RngStream jitter_rng_;
  std::vector<DeliveryOutcome> log_;
};

}  // namespace smartlab::netem
