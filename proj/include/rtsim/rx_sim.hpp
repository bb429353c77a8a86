#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtsim/metrics.hpp"
#include "rtsim/mitigation.hpp"
#include "rtsim/nic.hpp"
#include "rtsim/rtos.hpp"
#include "rtsim/rxpath.hpp"
#include "rtsim/traffic.hpp"

namespace rtsim {

enum class MitigationKind { None, Burst, Hysteresis, Budget, Queue };
enum class RxMode { Simple, DiffQ };

// A worker task consuming delivered packets of one port.
struct ReceiverSpec {
  std::uint16_t dst_port = 0;
  int priority = 1;
  double work_us = 0;
};

struct CriticalSpec {
  int priority = 5;
  MicroTime period_us = 10'000;
  MicroTime deadline_us = 0;  // 0 = period
  MicroTime work_us = 0;
};

struct BusyTaskSpec {
  std::string name = "busy";
  int priority = 1;
};

// One receive-side experiment: a packet trace pushed through the NIC model
// into either the plain FIFO stack (simple) or the differentiated flow-queue
// stack (diffq), alongside a periodic critical task.
struct RxScenario {
  std::uint64_t seed = 1;
  MicroTime duration_us = 1'000'000;
  std::vector<traffic::TraceRecord> records;

  std::vector<nic::NicQueueConfig> nic_queues;
  nic::MultiqueueNic::Options nic_options{};
  nic::NicCostModel nic_cost{};

  MicroTime quantum_us = 1'000;
  MicroTime context_switch_us = 0;
  std::optional<CriticalSpec> critical;
  std::vector<BusyTaskSpec> busy_tasks;
  std::vector<ReceiverSpec> receivers;

  RxMode mode = RxMode::Simple;
  rx::RxCostModel rx_costs{};

  // simple mode
  int driver_priority = 1;
  int driver_queue_capacity = 1'000;

  // diffq mode
  std::vector<rx::FlowSpec> flows;
  std::optional<rx::FlowSpec> default_flow;
  rx::RxPath::Options rx_options{};
  std::optional<rtos::ServerSpec> global_limit;  // packets per period
  int poll_priority = 1;
  int nic_holding_capacity = 4'096;

  MitigationKind mitigation = MitigationKind::None;
  mitigation::BurstPolicyParams burst{};
  mitigation::HysteresisPolicyParams hysteresis{};
  mitigation::BudgetPolicyParams budget{};
  mitigation::QueuePolicyParams queue_policy{};

  MicroTime report_period_us = 1'000'000;
};

struct RxFlowStats {
  std::uint16_t dst_port = 0;
  int priority = 0;
  rx::RxPath::FlowCounters counters{};
};

struct RxResult {
  MetricsLog log;  // per-report-interval rows

  std::int64_t sent = 0;
  std::int64_t irqs = 0;
  std::int64_t received = 0;   // accepted by the ISR
  std::int64_t processed = 0;  // completed driver/net-task processing
  std::int64_t delivered = 0;  // handed to a receiver mailbox
  std::int64_t dropped_unmatched = 0;
  std::int64_t dropped_queue_full = 0;   // NIC queue or driver FIFO overflow
  std::int64_t dropped_disabled = 0;     // interrupts masked by mitigation
  std::int64_t dropped_mitigation = 0;   // per-packet mitigation drops in the ISR
  std::int64_t nic_overflow = 0;         // polling-mode holding buffer overflow
  std::int64_t flow_rejected = 0;        // over per-flow capacity
  std::int64_t flow_shortcircuit = 0;
  std::int64_t flow_recycled = 0;
  std::map<std::uint16_t, std::int64_t> delivered_by_port;
  std::map<std::uint16_t, std::int64_t> consumed_by_port;

  std::int64_t critical_cycles = 0;
  std::int64_t lateness_accum_us = 0;  // sum of positive lateness
  std::vector<rtos::CycleRecord> cycles;

  std::int64_t cpu_isr_us = 0;
  std::int64_t cpu_driver_us = 0;  // driver / net task (+ polling task)
  std::int64_t cpu_total_us = 0;
  std::map<std::string, std::int64_t> cpu_by_task;

  std::vector<RxFlowStats> flow_stats;
  std::vector<mitigation::QueuePolicy::Interval> irq_off_intervals;
  std::int64_t polling_engagements = 0;

  double network_cpu_us() const { return static_cast<double>(cpu_isr_us + cpu_driver_us); }
};

RxResult run_rx(const RxScenario& scenario);

}  // namespace rtsim
