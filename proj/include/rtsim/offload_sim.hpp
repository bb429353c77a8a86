#pragma once

#include <cstdint>
#include <vector>

#include "rtsim/metrics.hpp"
#include "rtsim/offload.hpp"

namespace rtsim::offload {

enum class SchedulerKind { LatencyAware, Reference };

struct FailureEvent {
  int node = 0;
  MicroTime at_us = 0;
};

struct OffloadScenario {
  std::uint64_t seed = 1;
  MicroTime duration_us = 30'000'000;
  bool distributed = false;
  SchedulerKind scheduler = SchedulerKind::LatencyAware;

  int clients = 30;
  int workers = 4;  // worker count (centralized) or edge-node count (distributed)

  double uncertainty = 1.0;
  FitHeuristic heuristic = FitHeuristic::WorstFit;

  MicroTime task_wcet_us = 100'000;
  double laxity_mean_us = 100'000;
  double laxity_stddev_us = 0;  // 0 -> mean/3
  double submission_lambda_per_s = 1.0;

  LatencyModel wireless{30'000, 3'162};  // client <-> infrastructure
  LatencyModel wired{1'000, 200};        // scheduler <-> worker, node <-> node
  double t_cs_factor = 1.5;              // connection setup = factor * one-way sample

  MicroTime advert_period_us = 1'000'000;
  MicroTime response_timeout_us = 60'000;
  std::vector<FailureEvent> failures;
};

struct OffloadResult {
  std::int64_t submitted = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t successful = 0;  // accepted, result arrived by the original deadline
  std::int64_t missed = 0;      // accepted, result late
  std::int64_t timeouts = 0;    // no ACCEPT/REJECT response after fallback
  std::int64_t lost_to_failure = 0;
  std::int64_t unresolved = 0;  // still in flight when the run ended

  std::vector<std::int64_t> accepted_per_worker;
  std::int64_t preemptions = 0;
  std::int64_t forwards = 0;          // distributed: request chain hops
  std::int64_t density_messages = 0;  // distributed
  std::int64_t fallback_requests = 0; // distributed: timeout-driven re-sends

  double mean_e2e_us = 0;   // submit -> result arrival, successful tasks
  double mean_comm_us = 0;  // network transit portion of the above

  double acceptance_rate() const {
    return submitted ? static_cast<double>(accepted) / static_cast<double>(submitted) : 0;
  }
  double miss_rate_among_accepted() const {
    return accepted ? static_cast<double>(missed) / static_cast<double>(accepted) : 0;
  }
  double throughput_ratio() const {
    return submitted ? static_cast<double>(successful) / static_cast<double>(submitted) : 0;
  }
};

OffloadResult run_offload(const OffloadScenario& scenario);

}  // namespace rtsim::offload
