#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtsim/sim.hpp"
#include "rtsim/traffic.hpp"

namespace rtsim::nic {

// d(l) = d_l * l + d_c for the ISR side, and the same shape again for the
// simulated receiver task.
struct NicCostModel {
  double dl_us_per_byte = 0;
  double dc_us = 0;
  double task_dl_us_per_byte = 0;
  double task_dc_us = 0;
};

struct NicQueueConfig {
  int id = 0;
  std::uint16_t dst_port = 0;  // 0 = default queue for non-transport traffic
  int n_q = 128;               // capacity in packets
  MicroTime t_abs_us = 0;      // absolute timer; 0 = disabled
  MicroTime t_pack_us = 0;     // packet timer; 0 = disabled
  int counter_threshold = 0;   // 0 = disabled
  double r_max_pps = 0;        // expected packet rate ceiling, for validation
  MicroTime t_d_us = 0;        // process-specific max allowed delay, for validation
  std::uint16_t buffer_bytes = 0;  // front buffer length; 0 = unbounded
};

// Register layout of one filter-table entry; field widths are part of the
// hardware contract (16+32+16+16+32 bits of table data plus four 32-bit
// timer registers = 30 bytes per moderated queue).
struct FilterTableEntry {
  std::uint16_t id = 0;
  std::uint16_t buffer_length = 0;
  std::uint32_t front_addr = 0;
  std::uint32_t back_addr = 0;
  std::uint16_t offset = 0;
};

enum class IrqReason { PacketTimer, AbsoluteTimer, Counter, Immediate, Flush };

struct IrqBatch {
  int queue_id = 0;
  std::vector<traffic::TraceRecord> packets;
  MicroTime fired_at = 0;
  IrqReason reason = IrqReason::Immediate;
};

const char* to_string(IrqReason r);

// isr = d_c + d_l * sum(length); task = task_d_c + task_d_l * sum(length).
std::pair<double, double> irq_cost(const IrqBatch& batch, const NicCostModel& model);

// Total on-NIC register memory: m * 30B for moderated entries plus a 14B
// default-flow entry.
std::int64_t nic_memory_bytes(int m);

struct ConfigViolation {
  int queue_id = -1;
  std::string check;  // "t_abs_bound" | "timer_order" | "queue_size"
  double lhs = 0, rhs = 0;
  std::string message;
};

// Checks WCPD-derived absolute-timer bounds t_abs <= max(t_d, n_q/R_max) - WCPD
// with WCPD = t_netstack * sum(n_q), and the timer ordering t_P <= t_pack <= t_abs.
// Violations are data, not errors.
std::vector<ConfigViolation> validate_config(
    const std::vector<NicQueueConfig>& configs, double t_netstack_us,
    const std::map<int, MicroTime>& t_p_by_queue = {});

constexpr int kDrop = -1;

// Multiqueue receive model. Packets are classified by destination port;
// matched packets coalesce per queue until a timer, counter threshold, or
// flush hands them to software as one IrqBatch.
//
// The absolute timer is armed by the first packet of a coalescing window by
// default; set abs_timer_periodic for the free-running reading.
class MultiqueueNic {
 public:
  struct Options {
    bool abs_timer_periodic = false;
  };

  MultiqueueNic(Simulation& sim, std::vector<NicQueueConfig> configs, Options opt);
  MultiqueueNic(Simulation& sim, std::vector<NicQueueConfig> configs)
      : MultiqueueNic(sim, std::move(configs), Options{}) {}

  void set_batch_handler(std::function<void(IrqBatch&&)> handler) { handler_ = std::move(handler); }

  // Queue index for a packet, or kDrop. Exact dst_port match wins; transport
  // packets without a match are dropped before any interrupt; non-transport
  // traffic (port 0) goes to the default queue if one exists.
  int classify(const traffic::TraceRecord& pkt) const;

  // Classify + enqueue + moderation bookkeeping.
  void on_packet(const traffic::TraceRecord& pkt);

  // Runtime reconfiguration (socket bind/unbind). Unbinding flushes packets
  // still held in the queue as one final batch.
  void bind(NicQueueConfig config);
  void unbind(std::uint16_t dst_port);

  std::int64_t dropped_unmatched() const { return dropped_unmatched_; }
  std::int64_t dropped_queue_full() const { return dropped_queue_full_; }
  std::int64_t irq_count() const { return irq_count_; }
  std::int64_t delivered() const { return delivered_; }
  std::int64_t swap_count() const { return swap_count_; }
  std::map<IrqReason, std::int64_t> irqs_by_reason() const { return irqs_by_reason_; }

  const FilterTableEntry& table_entry(int queue_index) const;
  std::size_t queue_count() const { return queues_.size(); }
  int held_packets(int queue_index) const;

 private:
  struct Queue {
    NicQueueConfig config;
    FilterTableEntry entry;
    std::deque<traffic::TraceRecord> held;
    EventId abs_event{};
    EventId pack_event{};
    bool abs_pending = false;
    bool pack_pending = false;
    bool removed = false;
  };

  void emit(Queue& q, IrqReason reason);
  void on_abs_timer(int qi);
  void on_pack_timer(int qi);
  void arm_periodic_abs(int qi);

  Simulation& sim_;
  Options opt_;
  std::vector<Queue> queues_;
  std::map<std::uint16_t, int> port_to_queue_;
  int default_queue_ = -1;
  std::function<void(IrqBatch&&)> handler_;

  std::int64_t dropped_unmatched_ = 0;
  std::int64_t dropped_queue_full_ = 0;
  std::int64_t irq_count_ = 0;
  std::int64_t delivered_ = 0;
  std::int64_t swap_count_ = 0;
  std::map<IrqReason, std::int64_t> irqs_by_reason_;
};

}  // namespace rtsim::nic
