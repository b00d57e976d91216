#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "smartlab/error.hpp"

namespace smartlab {

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based random stream. The value of draw i depends only on
/// (seed, stream_id, i), so streams never share state and reordering the
/// consumers of one stream cannot perturb another.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::string stream_id)
      : seed_(seed),
        stream_id_(std::move(stream_id)),
        key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(stream_id_)))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& stream_id() const noexcept { return stream_id_; }
  std::uint64_t draws() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t c = counter_++;
    return detail::splitmix64(key_ ^ detail::splitmix64(c * 0xD1B54A32D192ED03ULL + 1));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t seed_ = 0;
  std::string stream_id_;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

inline double rng_uniform(RngStream& stream) noexcept { return stream.uniform(); }

// ---------------------------------------------------------------------------
// Event engine
// ---------------------------------------------------------------------------

using Ticket = std::uint64_t;

class Engine;
using EventAction = std::function<void(Engine&)>;

/// Single-threaded discrete-event loop. Events at equal times fire in the
/// order they were scheduled.
class Engine {
 public:
  double now() const noexcept { return now_; }

  Ticket schedule(double fire_at, EventAction action) {
    if (!(fire_at >= now_)) {
      throw Error(Errc::past_event, "fire_at " + std::to_string(fire_at) + " < now " +
                                        std::to_string(now_));
    }
    const Ticket ticket = next_seq_++;
    queue_.emplace(Key{fire_at, ticket}, std::move(action));
    ++scheduled_;
    return ticket;
  }

  Ticket schedule_in(double delay, EventAction action) {
    return schedule(now_ + delay, std::move(action));
  }

  /// Returns false when the ticket already fired, was cancelled, or never existed.
  bool cancel(Ticket ticket) {
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
      if (it->first.seq == ticket) {
        queue_.erase(it);
        ++cancelled_;
        return true;
      }
    }
    return false;
  }

  std::size_t run_until(double t_end) {
    if (t_end < now_) {
      throw Error(Errc::past_event, "run_until target precedes the clock");
    }
    std::size_t processed = 0;
    while (!queue_.empty() && queue_.begin()->first.fire_at <= t_end) {
      auto node = queue_.extract(queue_.begin());
      now_ = node.key().fire_at;
      node.mapped()(*this);
      ++processed;
      ++processed_;
    }
    now_ = t_end;
    return processed;
  }

  std::size_t pending() const noexcept { return queue_.size(); }
  std::uint64_t scheduled_count() const noexcept { return scheduled_; }
  std::uint64_t processed_count() const noexcept { return processed_; }
  std::uint64_t cancelled_count() const noexcept { return cancelled_; }

 private:
  struct Key {
    double fire_at;
    Ticket seq;
    bool operator<(const Key& o) const noexcept {
      return fire_at < o.fire_at || (fire_at == o.fire_at && seq < o.seq);
    }
  };

  double now_ = 0.0;
  Ticket next_seq_ = 0;
  std::map<Key, EventAction> queue_;
  std::uint64_t scheduled_ = 0;
  std::uint64_t processed_ = 0;
  std::uint64_t cancelled_ = 0;
};

}  // namespace smartlab
