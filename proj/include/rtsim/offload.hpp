#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtsim/metrics.hpp"
#include "rtsim/rng.hpp"

namespace rtsim::offload {

// The task tuple shared between clients, schedulers, and workers.
struct OffloadTask {
  int id = 0;
  int client = 0;                 // C: source client id
  MicroTime deadline_abs = 0;     // T_d, adjusted by the scheduler
  MicroTime original_deadline = 0;
  MicroTime t_r = 0;              // relative deadline at creation
  MicroTime t_cs = 0;             // connection setup time
  MicroTime t_w = 0;              // worst-case execution time
  MicroTime t_e = 0;              // elapsed execution time
  std::string params;             // opaque payload descriptor

  MicroTime remaining() const { return t_w - t_e; }
};

inline double laxity_us(const OffloadTask& t, MicroTime now) {
  return static_cast<double>(t.deadline_abs - now - t.remaining());
}

// density = (t_w - t_e) / (T_d - T_s)
inline double density(const OffloadTask& t, MicroTime now) {
  const MicroTime window = t.deadline_abs - now;
  if (window <= 0) return 1e9;
  return static_cast<double>(t.remaining()) / static_cast<double>(window);
}

struct DeadlineAdjustment {
  MicroTime d_exp = 0;
  MicroTime d_adj = 0;
  MicroTime new_deadline = 0;
  bool clamped = false;  // d_exp came out negative (clock skew) and was zeroed
};

// d_exp = t_r - (T_d - t); d_adj adds (t_cs - t_w) when connection setup
// dominates execution; T_d_new = T_d - U * d_adj.
DeadlineAdjustment adjust_deadline(const OffloadTask& task, MicroTime now, double uncertainty);

// One partitioned-EDF worker queue as seen by a scheduler.
struct WorkerQueue {
  int id = 0;
  std::vector<OffloadTask> tasks;  // running + pending, any order
  std::int64_t tie_break = 0;      // assignments so far; equal densities go to the
                                   // least-recently-loaded worker

  double total_density(MicroTime now) const {
    double sum = 0;
    for (const auto& t : tasks) sum += offload::density(t, now);
    return sum;
  }
};

// True iff EDF over (remaining, deadline) items, all ready at `now`, meets
// every deadline.
bool edf_feasible(std::vector<std::pair<MicroTime, MicroTime>> items, MicroTime now);
bool edf_feasible(const WorkerQueue& queue, const OffloadTask& extra, MicroTime now);

enum class FitHeuristic { FirstFit, BestFit, WorstFit };

FitHeuristic fit_from_string(const std::string& s);
const char* to_string(FitHeuristic h);

// Partitioned-EDF admission: pre-check time-to-deadline > remaining work, then
// EDF-simulate each queue with the task added; among feasible workers worst-fit
// picks the lowest total density, best-fit the highest, first-fit the first.
std::optional<int> accept(const OffloadTask& task, const std::vector<WorkerQueue>& workers,
                          FitHeuristic heuristic, MicroTime now);

// Per-link latency model: normal(mean, stddev) truncated at >= 0.
struct LatencyModel {
  double mean_us = 0;
  double stddev_us = 0;

  MicroTime sample(RngStream& rng) const {
    if (mean_us <= 0 && stddev_us <= 0) return 0;
    const double v = rng.normal_truncated(mean_us, stddev_us, 0.0);
    return static_cast<MicroTime>(std::llround(v));
  }
};

// Distributed-mode bookkeeping.
struct NodeInfo {
  int node = 0;
  double density = 0;
  MicroTime advertised_at = 0;
};

struct ClosestEntry {
  int node = 0;
  MicroTime latency_us = 0;
};

// Ordered list of at most three (node, latency) entries, ascending latency.
class ClosestNodes {
 public:
  void update(int node, MicroTime latency_us);
  void remove(int node);
  std::optional<int> nth(std::size_t i) const;
  const std::vector<ClosestEntry>& entries() const { return entries_; }

 private:
  std::vector<ClosestEntry> entries_;
};

}  // namespace rtsim::offload
