#include "rtsim/nic.hpp"

#include <stdexcept>

namespace rtsim::nic {

const char* to_string(IrqReason r) {
  switch (r) {
    case IrqReason::PacketTimer: return "packet-timer";
    case IrqReason::AbsoluteTimer: return "absolute-timer";
    case IrqReason::Counter: return "counter";
    case IrqReason::Immediate: return "immediate";
    case IrqReason::Flush: return "flush";
  }
  return "?";
}

std::pair<double, double> irq_cost(const IrqBatch& batch, const NicCostModel& model) {
  std::int64_t bytes = 0;
  for (const auto& p : batch.packets) bytes += p.length;
  const double b = static_cast<double>(bytes);
  return {model.dc_us + model.dl_us_per_byte * b,
          model.task_dc_us + model.task_dl_us_per_byte * b};
}

std::int64_t nic_memory_bytes(int m) {
  if (m < 1) throw std::invalid_argument("nic_memory_bytes: need at least one queue");
  return static_cast<std::int64_t>(m) * 30 + 14;
}

std::vector<ConfigViolation> validate_config(const std::vector<NicQueueConfig>& configs,
                                             double t_netstack_us,
                                             const std::map<int, MicroTime>& t_p_by_queue) {
  std::vector<ConfigViolation> out;
  double wcpd = 0;
  for (const auto& c : configs) {
    if (c.n_q <= 0)
      out.push_back({c.id, "queue_size", static_cast<double>(c.n_q), 1.0,
                     "queue " + std::to_string(c.id) + ": n_q must be > 0"});
    wcpd += t_netstack_us * c.n_q;
  }
  for (const auto& c : configs) {
    if (c.t_abs_us > 0) {
      double t_qf = c.r_max_pps > 0 ? c.n_q / c.r_max_pps * 1e6 : 0;
      double ceiling = std::max(static_cast<double>(c.t_d_us), t_qf);
      if (c.t_d_us > 0 || c.r_max_pps > 0) {
        const double bound = ceiling - wcpd;
        if (static_cast<double>(c.t_abs_us) > bound)
          out.push_back({c.id, "t_abs_bound", static_cast<double>(c.t_abs_us), bound,
                         "queue " + std::to_string(c.id) + ": t_abs " +
                             std::to_string(c.t_abs_us) + "us exceeds max(t_d, t_qf) - WCPD = " +
                             std::to_string(bound) + "us"});
      }
    }
    if (c.t_pack_us > 0 && c.t_abs_us > 0 && c.t_pack_us > c.t_abs_us)
      out.push_back({c.id, "timer_order", static_cast<double>(c.t_pack_us),
                     static_cast<double>(c.t_abs_us),
                     "queue " + std::to_string(c.id) + ": t_pack " + std::to_string(c.t_pack_us) +
                         "us exceeds t_abs " + std::to_string(c.t_abs_us) + "us"});
    auto tp = t_p_by_queue.find(c.id);
    if (tp != t_p_by_queue.end() && c.t_pack_us > 0 && tp->second > c.t_pack_us)
      out.push_back({c.id, "timer_order", static_cast<double>(tp->second),
                     static_cast<double>(c.t_pack_us),
                     "queue " + std::to_string(c.id) + ": flow period t_P " +
                         std::to_string(tp->second) + "us exceeds t_pack " +
                         std::to_string(c.t_pack_us) + "us"});
  }
  return out;
}

MultiqueueNic::MultiqueueNic(Simulation& sim, std::vector<NicQueueConfig> configs, Options opt)
    : sim_(sim), opt_(opt) {
  for (auto& c : configs) bind(std::move(c));
}

void MultiqueueNic::bind(NicQueueConfig config) {
  if (config.n_q <= 0) throw std::invalid_argument("nic queue capacity must be > 0");
  Queue q;
  q.config = config;
  q.entry.id = config.dst_port;
  q.entry.buffer_length = config.buffer_bytes;
  q.entry.front_addr = 0x10000000u + static_cast<std::uint32_t>(queues_.size()) * 0x20000u;
  q.entry.back_addr = q.entry.front_addr + 0x10000u;
  const int qi = static_cast<int>(queues_.size());
  queues_.push_back(std::move(q));
  if (config.dst_port == 0)
    default_queue_ = qi;
  else
    port_to_queue_[config.dst_port] = qi;
  if (opt_.abs_timer_periodic && config.t_abs_us > 0) arm_periodic_abs(qi);
}

void MultiqueueNic::unbind(std::uint16_t dst_port) {
  auto it = port_to_queue_.find(dst_port);
  if (it == port_to_queue_.end()) return;
  Queue& q = queues_[it->second];
  // Packets still in flight in the removed queue leave as one final batch.
  if (!q.held.empty()) emit(q, IrqReason::Flush);
  if (q.abs_pending) sim_.cancel(q.abs_event);
  if (q.pack_pending) sim_.cancel(q.pack_event);
  q.abs_pending = q.pack_pending = false;
  q.removed = true;
  port_to_queue_.erase(it);
}

int MultiqueueNic::classify(const traffic::TraceRecord& pkt) const {
  if (pkt.dst_port != 0) {
    auto it = port_to_queue_.find(pkt.dst_port);
    return it == port_to_queue_.end() ? kDrop : it->second;
  }
  return default_queue_ >= 0 ? default_queue_ : kDrop;
}

void MultiqueueNic::on_packet(const traffic::TraceRecord& pkt) {
  const int qi = classify(pkt);
  if (qi == kDrop) {
    ++dropped_unmatched_;
    return;
  }
  Queue& q = queues_[qi];
  const auto& c = q.config;

  if (static_cast<int>(q.held.size()) >= c.n_q) {
    ++dropped_queue_full_;  // drop newest
    return;
  }
  if (q.entry.buffer_length > 0 &&
      static_cast<std::uint32_t>(q.entry.offset) + pkt.length > q.entry.buffer_length) {
    ++dropped_queue_full_;
    return;
  }
  q.held.push_back(pkt);
  q.entry.offset = static_cast<std::uint16_t>(q.entry.offset + pkt.length);

  if (c.t_abs_us == 0 && c.t_pack_us == 0 && c.counter_threshold == 0) {
    emit(q, IrqReason::Immediate);
    return;
  }
  if (c.counter_threshold > 0 && static_cast<int>(q.held.size()) >= c.counter_threshold) {
    emit(q, IrqReason::Counter);
    return;
  }
  const MicroTime now = sim_.now();
  if (c.t_abs_us > 0 && !opt_.abs_timer_periodic && !q.abs_pending) {
    // Armed by the first packet of the window, not reset by later arrivals.
    q.abs_event = sim_.schedule(now + c.t_abs_us, EventKind::TimerExpiry,
                                [this, qi] { on_abs_timer(qi); });
    q.abs_pending = true;
  }
  if (c.t_pack_us > 0) {
    if (q.pack_pending) sim_.cancel(q.pack_event);
    q.pack_event = sim_.schedule(now + c.t_pack_us, EventKind::TimerExpiry,
                                 [this, qi] { on_pack_timer(qi); });
    q.pack_pending = true;
  }
}

void MultiqueueNic::arm_periodic_abs(int qi) {
  Queue& q = queues_[qi];
  q.abs_event = sim_.schedule(sim_.now() + q.config.t_abs_us, EventKind::TimerExpiry,
                              [this, qi] { on_abs_timer(qi); });
  q.abs_pending = true;
}

void MultiqueueNic::on_abs_timer(int qi) {
  Queue& q = queues_[qi];
  q.abs_pending = false;
  if (!q.held.empty()) emit(q, IrqReason::AbsoluteTimer);
  if (opt_.abs_timer_periodic && !q.removed) arm_periodic_abs(qi);
}

void MultiqueueNic::on_pack_timer(int qi) {
  Queue& q = queues_[qi];
  q.pack_pending = false;
  if (q.held.empty()) return;  // spurious
  emit(q, IrqReason::PacketTimer);
}

void MultiqueueNic::emit(Queue& q, IrqReason reason) {
  IrqBatch batch;
  batch.queue_id = q.config.id;
  batch.fired_at = sim_.now();
  batch.reason = reason;
  batch.packets.assign(q.held.begin(), q.held.end());
  q.held.clear();
  // The free-running periodic timer keeps its grid; the armed-per-window
  // variant is cleared with the window.
  if (q.abs_pending && !opt_.abs_timer_periodic) {
    sim_.cancel(q.abs_event);
    q.abs_pending = false;
  }
  if (q.pack_pending) {
    sim_.cancel(q.pack_event);
    q.pack_pending = false;
  }
  // Front/back buffer swap: DMA continues into the fresh buffer while the
  // handed-over one is processed.
  std::swap(q.entry.front_addr, q.entry.back_addr);
  q.entry.offset = 0;
  ++swap_count_;
  ++irq_count_;
  ++irqs_by_reason_[reason];
  delivered_ += static_cast<std::int64_t>(batch.packets.size());
  if (handler_) handler_(std::move(batch));
}

const FilterTableEntry& MultiqueueNic::table_entry(int queue_index) const {
  return queues_.at(queue_index).entry;
}

int MultiqueueNic::held_packets(int queue_index) const {
  return static_cast<int>(queues_.at(queue_index).held.size());
}

}  // namespace rtsim::nic
