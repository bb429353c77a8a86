#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtsim/rtos.hpp"
#include "rtsim/traffic.hpp"

namespace rtsim::rx {

// Definition-1 flow tuple plus its rate-limit budget.
struct FlowSpec {
  std::string src;            // opaque source id; empty matches any
  std::uint16_t dst_port = 0;
  int priority = 0;           // receiver task priority
  MicroTime t_p_us = 0;       // minimum expected inter-arrival
  std::int64_t capacity_pkts = 0;  // server budget e; <= 0 means unlimited
  MicroTime period_us = 0;         // server period p
};

// Per-packet CPU cost of each receive-path stage, in microseconds.
struct RxCostModel {
  double isr_classify_us = 0;
  double isr_cache_hdr_us = 0;
  double deferred_driver_us = 0;
  double ip_task_us = 0;
  double prio_change_us = 0;
  double recycle_us = 0;
};

enum class EagerPath { Regular, Shortcircuit, RecycleThenEnqueue, FlowReject };

const char* to_string(EagerPath p);

// Per-flow FIFO queues organized by priority over a closed buffer pool shared
// with the BD ring: every queued or in-processing packet holds one buffer.
class DiffFlowQueues {
 public:
  DiffFlowQueues(int pool_size, double recycle_threshold);

  int add_flow(int priority);
  void push(int flow, const traffic::TraceRecord& pkt);

  struct Queued {
    int flow;
    traffic::TraceRecord pkt;
  };
  // Highest-priority non-empty flow, FIFO within the flow. The popped packet
  // counts as in-processing (still holding its buffer) until release_buffer().
  std::optional<Queued> pop_highest();
  void release_buffer();

  // Drops the newest packet of the lowest-priority non-empty flow.
  // Returns the flow it came from, or -1 if nothing was waiting.
  int drop_one_lowest();

  bool empty() const { return waiting_ == 0; }
  int waiting() const { return waiting_; }
  int waiting_in(int flow) const { return static_cast<int>(queues_[flow].size()); }
  int in_processing() const { return in_processing_; }
  int bd_ring_free() const { return pool_size_ - waiting_ - in_processing_; }
  bool below_recycle_threshold() const;
  int pool_size() const { return pool_size_; }

  // Priority of the highest/lowest waiting packet; nullopt when empty.
  std::optional<int> highest_waiting_priority() const;
  std::optional<int> lowest_waiting_priority() const;

  int flow_priority(int flow) const { return priority_[flow]; }
  std::size_t flow_count() const { return queues_.size(); }

 private:
  int pool_size_;
  double recycle_threshold_;
  std::vector<std::deque<traffic::TraceRecord>> queues_;  // per flow
  std::vector<int> priority_;
  // priority -> flows in that band, in registration order
  std::map<int, std::vector<int>, std::greater<int>> by_priority_;
  int waiting_ = 0;
  int in_processing_ = 0;
};

// Software receive path: eager ISR classification and enqueueing, deferred
// driver + protocol processing at inherited priority, per-flow deferrable
// rate limits.
class RxPath {
 public:
  struct Options {
    int pool_size = 256;
    double recycle_threshold = 0.5;  // recycle once bd-ring free share drops below
    int net_base_priority = 1;
    int background_priority = 0;  // fragments land here
  };

  RxPath(std::vector<FlowSpec> flows, std::optional<FlowSpec> default_flow,
         RxCostModel costs, Options opt);

  // Flow index for a record: exact port match, port-0/non-transport to the
  // default flow, fragmented records to the background flow. -1 = no flow.
  int classify_flow(const traffic::TraceRecord& pkt) const;

  struct EagerResult {
    EagerPath path = EagerPath::Regular;
    int flow = -1;
    double isr_cost_us = 0;
    bool raised_priority = false;
    int net_priority = 0;  // inherited priority after the event
  };
  EagerResult eager_isr(const traffic::TraceRecord& pkt, MicroTime t);

  // P_IP-task = max flow priority among waiting and in-processing packets.
  int net_task_priority() const;
  bool has_waiting() const { return !queues_.empty(); }

  struct ProcessStart {
    int flow;
    traffic::TraceRecord pkt;
    double deferred_cost_us;
    double ip_cost_us;
  };
  std::optional<ProcessStart> begin_processing(MicroTime t);
  // Completes the packet in flight; returns the recomputed net task priority.
  int finish_processing(MicroTime t);

  const RxCostModel& costs() const { return costs_; }
  const Options& options() const { return opt_; }
  const DiffFlowQueues& queues() const { return queues_; }
  const FlowSpec& flow_spec(int flow) const { return flows_[flow]; }
  std::size_t flow_count() const { return flows_.size(); }
  int default_flow_index() const { return default_flow_; }
  int background_flow_index() const { return background_flow_; }

  struct FlowCounters {
    std::int64_t arrived = 0;
    std::int64_t enqueued = 0;
    std::int64_t rejected = 0;      // over flow capacity
    std::int64_t shortcircuit = 0;  // dropped as lowest priority under pressure
    std::int64_t recycled = 0;      // evicted by a higher-priority arrival
    std::int64_t delivered = 0;
  };
  const FlowCounters& counters(int flow) const { return counters_[flow]; }

 private:
  std::vector<FlowSpec> flows_;
  std::vector<std::optional<rtos::ServerState>> servers_;
  std::vector<FlowCounters> counters_;
  std::map<std::uint16_t, int> port_to_flow_;
  int default_flow_ = -1;
  int background_flow_ = -1;
  RxCostModel costs_;
  Options opt_;
  DiffFlowQueues queues_;
  std::optional<int> processing_flow_;
};

}  // namespace rtsim::rx
