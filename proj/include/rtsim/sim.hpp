#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtsim/metrics.hpp"
#include "rtsim/rng.hpp"

namespace rtsim {

enum class EventKind {
  PacketArrival,
  TimerExpiry,
  Irq,
  TaskRelease,
  Report,
  NodeMessage,
};

struct EventId {
  std::uint64_t value = 0;
  bool operator==(const EventId&) const = default;
};

// Single-threaded discrete-event engine. Events with equal fire time are
// delivered in insertion order; the clock never moves backwards and never
// jumps past a pending event.
class Simulation {
 public:
  explicit Simulation(std::uint64_t seed) : seed_(seed) {}

  MicroTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  // Throws std::logic_error for fire_at < now(): scheduling into the past is
  // always a model bug.
  EventId schedule(MicroTime fire_at, EventKind kind, std::function<void()> fn);

  // True iff the event was still pending and has been removed.
  bool cancel(EventId id);

  void run_until(MicroTime t_end);

  MetricsLog& metrics() { return metrics_; }
  const MetricsLog& metrics() const { return metrics_; }

  // Named stream; created on first use, derivation depends only on (seed, name).
  RngStream& rng(const std::string& name);

 private:
  struct Entry {
    MicroTime fire_at;
    std::uint64_t seq;
    std::uint64_t id;
    bool operator>(const Entry& o) const {
      if (fire_at != o.fire_at) return fire_at > o.fire_at;
      return seq > o.seq;
    }
  };

  struct Pending {
    EventKind kind;
    std::function<void()> fn;
  };

  MicroTime now_ = 0;
  std::uint64_t seed_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_id_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap_;
  std::unordered_map<std::uint64_t, Pending> pending_;
  MetricsLog metrics_;
  std::map<std::string, RngStream> streams_;
};

}  // namespace rtsim
