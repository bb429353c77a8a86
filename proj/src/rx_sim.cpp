#include "rtsim/rx_sim.hpp"

#include <cmath>
#include <deque>
#include <memory>

namespace rtsim {

namespace {

class RxEngine;

class ReceiverBody final : public rtos::TaskBody {
 public:
  ReceiverBody(RxEngine* e, std::uint16_t port, double work_us)
      : e_(e), port_(port), work_us_(work_us) {}
  std::optional<double> next_burst(MicroTime now) override;
  void on_burst_done(MicroTime now) override;
  void push() { ++mailbox_; }

 private:
  RxEngine* e_;
  std::uint16_t port_;
  double work_us_;
  std::int64_t mailbox_ = 0;
};

class SimpleDriverBody final : public rtos::TaskBody {
 public:
  explicit SimpleDriverBody(RxEngine* e) : e_(e) {}
  std::optional<double> next_burst(MicroTime now) override;
  void on_burst_done(MicroTime now) override;

 private:
  RxEngine* e_;
  nic::IrqBatch cur_{};
  double pending_cost_ = 0;
  bool busy_ = false;
};

class NetTaskBody final : public rtos::TaskBody {
 public:
  explicit NetTaskBody(RxEngine* e) : e_(e) {}
  std::optional<double> next_burst(MicroTime now) override;
  void on_burst_done(MicroTime now) override;

 private:
  RxEngine* e_;
  std::optional<rx::RxPath::ProcessStart> cur_;
  bool ip_stage_ = false;
};

class BusyBody final : public rtos::TaskBody {
 public:
  std::optional<double> next_burst(MicroTime) override { return 10'000.0; }
  void on_burst_done(MicroTime) override {}
};

class PollBody final : public rtos::TaskBody {
 public:
  explicit PollBody(RxEngine* e) : e_(e) {}
  std::optional<double> next_burst(MicroTime now) override;
  void on_burst_done(MicroTime) override {}

 private:
  RxEngine* e_;
};

class RxEngine {
 public:
  explicit RxEngine(const RxScenario& sc)
      : sc_(sc), sim_(sc.seed), cpu_(sim_, sc.quantum_us, sc.context_switch_us) {}

  RxResult run();

 private:
  friend class ReceiverBody;
  friend class SimpleDriverBody;
  friend class NetTaskBody;
  friend class PollBody;

  void build();
  void on_batch(nic::IrqBatch&& batch);
  void isr_simple(std::shared_ptr<nic::IrqBatch> batch);
  void isr_diffq(std::shared_ptr<nic::IrqBatch> batch);
  void deliver(const traffic::TraceRecord& pkt);
  void hold_for_polling(const traffic::TraceRecord& pkt);
  void enter_polling();
  void on_period_boundary();
  void report(MicroTime t);

  double stage_isr_cost_per_pkt() const {
    return sc_.rx_costs.isr_classify_us + sc_.rx_costs.isr_cache_hdr_us;
  }
  double stage_task_cost_per_pkt() const {
    return sc_.rx_costs.deferred_driver_us + sc_.rx_costs.ip_task_us;
  }

  const RxScenario& sc_;
  Simulation sim_;
  rtos::Cpu cpu_;
  std::unique_ptr<nic::MultiqueueNic> nic_;
  std::unique_ptr<mitigation::Policy> policy_;
  std::unique_ptr<rx::RxPath> rx_;

  std::deque<nic::IrqBatch> fifo_;
  std::int64_t fifo_packets_ = 0;

  rtos::TaskId critical_id_ = rtos::kIdle;
  rtos::TaskId driver_id_ = rtos::kIdle;  // simple-mode driver or diffq net task
  rtos::TaskId poll_id_ = rtos::kIdle;
  std::map<std::uint16_t, rtos::TaskId> receiver_task_;
  std::map<std::uint16_t, ReceiverBody*> receiver_body_;

  bool polling_ = false;
  std::optional<rtos::ServerState> global_server_;
  std::int64_t consumed_this_period_ = 0;
  std::deque<traffic::TraceRecord> holding_;

  RxResult res_;
  RxResult prev_;  // snapshot for per-interval deltas
};

std::optional<double> ReceiverBody::next_burst(MicroTime) {
  if (mailbox_ <= 0) return std::nullopt;
  return work_us_;
}

void ReceiverBody::on_burst_done(MicroTime) {
  --mailbox_;
  ++e_->res_.consumed_by_port[port_];
}

std::optional<double> SimpleDriverBody::next_burst(MicroTime now) {
  if (busy_) return pending_cost_;  // should not happen; defensive
  if (!e_->policy_->driver_enabled(now)) return std::nullopt;
  if (e_->fifo_.empty()) return std::nullopt;
  cur_ = std::move(e_->fifo_.front());
  e_->fifo_.pop_front();
  e_->fifo_packets_ -= static_cast<std::int64_t>(cur_.packets.size());
  std::int64_t bytes = 0;
  for (const auto& p : cur_.packets) bytes += p.length;
  pending_cost_ = e_->sc_.nic_cost.task_dc_us +
                  e_->sc_.nic_cost.task_dl_us_per_byte * static_cast<double>(bytes) +
                  e_->stage_task_cost_per_pkt() * static_cast<double>(cur_.packets.size());
  busy_ = true;
  return pending_cost_;
}

void SimpleDriverBody::on_burst_done(MicroTime now) {
  busy_ = false;
  e_->res_.processed += static_cast<std::int64_t>(cur_.packets.size());
  e_->policy_->charge_driver(static_cast<MicroTime>(std::llround(pending_cost_)), now);
  for (const auto& pkt : cur_.packets) e_->deliver(pkt);
  cur_ = nic::IrqBatch{};
  if (e_->fifo_.empty()) e_->policy_->on_queue_drained(now);
}

std::optional<double> NetTaskBody::next_burst(MicroTime now) {
  if (!ip_stage_) {
    cur_ = e_->rx_->begin_processing(now);
    if (!cur_) return std::nullopt;
    return cur_->deferred_cost_us;
  }
  return cur_->ip_cost_us;
}

void NetTaskBody::on_burst_done(MicroTime now) {
  if (!ip_stage_) {
    ip_stage_ = true;
    return;
  }
  ip_stage_ = false;
  e_->res_.processed += 1;
  const traffic::TraceRecord pkt = cur_->pkt;
  const int new_prio = e_->rx_->finish_processing(now);
  cur_.reset();
  e_->cpu_.set_priority(e_->driver_id_, new_prio);
  e_->deliver(pkt);
}

std::optional<double> PollBody::next_burst(MicroTime now) {
  if (e_->holding_.empty()) return std::nullopt;
  const auto want = static_cast<std::int64_t>(e_->holding_.size());
  std::int64_t grant = want;
  if (e_->global_server_) {
    grant = e_->global_server_->account(want, now);
    e_->consumed_this_period_ += grant;
  }
  if (grant == 0) return std::nullopt;  // next boundary wakes us again
  double cost = e_->sc_.nic_cost.dc_us;  // one notification's worth of overhead per drain
  bool enqueued = false;
  std::int64_t bytes = 0;
  for (std::int64_t i = 0; i < grant; ++i) {
    const traffic::TraceRecord pkt = e_->holding_.front();
    e_->holding_.pop_front();
    bytes += pkt.length;
    auto r = e_->rx_->eager_isr(pkt, now);
    cost += r.isr_cost_us;
    if (r.path == rx::EagerPath::Regular || r.path == rx::EagerPath::RecycleThenEnqueue) {
      ++e_->res_.received;
      enqueued = true;
      if (r.raised_priority) e_->cpu_.set_priority(e_->driver_id_, r.net_priority);
    } else if (r.flow < 0) {
      ++e_->res_.dropped_unmatched;
    }
  }
  cost += e_->sc_.nic_cost.dl_us_per_byte * static_cast<double>(bytes);
  if (enqueued) e_->cpu_.wake(e_->driver_id_);
  return cost;
}

void RxEngine::build() {
  // NIC queues; if none were configured, synthesize an unmoderated queue per
  // traffic port plus a default queue.
  std::vector<nic::NicQueueConfig> queues = sc_.nic_queues;
  if (queues.empty()) {
    std::map<std::uint16_t, bool> ports;
    for (const auto& r : sc_.records) ports[r.dst_port] = true;
    int id = 0;
    for (const auto& [port, _] : ports) queues.push_back({id++, port, 1 << 20, 0, 0, 0});
    if (!ports.count(0)) queues.push_back({id, 0, 1 << 20, 0, 0, 0});
  }
  nic_ = std::make_unique<nic::MultiqueueNic>(sim_, queues, sc_.nic_options);
  nic_->set_batch_handler([this](nic::IrqBatch&& b) { on_batch(std::move(b)); });

  switch (sc_.mitigation) {
    case MitigationKind::None: policy_ = std::make_unique<mitigation::Policy>(); break;
    case MitigationKind::Burst:
      policy_ = std::make_unique<mitigation::BurstPolicy>(sc_.burst);
      break;
    case MitigationKind::Hysteresis:
      policy_ = std::make_unique<mitigation::HysteresisPolicy>(sc_.hysteresis);
      break;
    case MitigationKind::Budget:
      policy_ = std::make_unique<mitigation::BudgetPolicy>(sc_.budget);
      break;
    case MitigationKind::Queue:
      policy_ = std::make_unique<mitigation::QueuePolicy>(sc_.queue_policy);
      break;
  }

  if (sc_.critical) {
    rtos::TaskSpec spec;
    spec.name = "critical";
    spec.priority = sc_.critical->priority;
    spec.kind = rtos::TaskKind::PeriodicCritical;
    spec.period_us = sc_.critical->period_us;
    spec.deadline_us = sc_.critical->deadline_us;
    spec.work_us = sc_.critical->work_us;
    critical_id_ = cpu_.add_task(spec);
  }

  if (sc_.mode == RxMode::Simple) {
    auto body = std::make_unique<SimpleDriverBody>(this);
    driver_id_ = cpu_.add_task({"driver", sc_.driver_priority, rtos::TaskKind::NetTask},
                               std::move(body));
  } else {
    rx_ = std::make_unique<rx::RxPath>(sc_.flows, sc_.default_flow, sc_.rx_costs, sc_.rx_options);
    auto body = std::make_unique<NetTaskBody>(this);
    driver_id_ = cpu_.add_task(
        {"net-task", sc_.rx_options.net_base_priority, rtos::TaskKind::NetTask}, std::move(body));
    if (sc_.global_limit) {
      global_server_.emplace(*sc_.global_limit);
      poll_id_ = cpu_.add_task({"poll-driver", sc_.poll_priority, rtos::TaskKind::Server},
                               std::make_unique<PollBody>(this));
      const MicroTime p = sc_.global_limit->period_us;
      for (MicroTime t = p; t <= sc_.duration_us; t += p)
        sim_.schedule(t, EventKind::TimerExpiry, [this] { on_period_boundary(); });
    }
  }

  for (const auto& r : sc_.receivers) {
    auto body = std::make_unique<ReceiverBody>(this, r.dst_port, r.work_us);
    receiver_body_[r.dst_port] = body.get();
    receiver_task_[r.dst_port] = cpu_.add_task(
        {"recv-" + std::to_string(r.dst_port), r.priority, rtos::TaskKind::Worker},
        std::move(body));
  }

  for (const auto& b : sc_.busy_tasks)
    cpu_.add_task({b.name, b.priority, rtos::TaskKind::Busy}, std::make_unique<BusyBody>());

  policy_->request_driver_wake = [this](MicroTime delay) {
    sim_.schedule(sim_.now() + delay, EventKind::TimerExpiry, [this] {
      if (policy_->driver_enabled(sim_.now())) cpu_.wake(driver_id_);
    });
  };

  cpu_.on_cycle = [this](const rtos::CycleRecord& rec, MicroTime earliness) {
    ++res_.critical_cycles;
    const MicroTime l = rtos::lateness(rec);
    if (l > 0) res_.lateness_accum_us += l;
    policy_->on_critical_report(rec.finish, earliness, rec.deadline_abs - rec.release);
  };

  // Reports are scheduled ahead of arrivals so that same-timestamp arrivals
  // fall into the next interval: rows cover half-open windows [t-p, t).
  for (MicroTime t = sc_.report_period_us; t <= sc_.duration_us; t += sc_.report_period_us)
    sim_.schedule(t, EventKind::Report, [this, t] { report(t); });

  for (const auto& r : sc_.records) {
    sim_.schedule(r.t, EventKind::PacketArrival, [this, r] {
      ++res_.sent;
      nic_->on_packet(r);
    });
  }
}

void RxEngine::on_batch(nic::IrqBatch&& batch) {
  auto ptr = std::make_shared<nic::IrqBatch>(std::move(batch));
  if (sc_.mode == RxMode::DiffQ && polling_) {
    for (const auto& pkt : ptr->packets) hold_for_polling(pkt);
    return;
  }
  if (!policy_->interrupts_enabled(sim_.now())) {
    res_.dropped_disabled += static_cast<std::int64_t>(ptr->packets.size());
    return;
  }
  ++res_.irqs;
  if (sc_.mode == RxMode::Simple)
    isr_simple(std::move(ptr));
  else
    isr_diffq(std::move(ptr));
}

void RxEngine::isr_simple(std::shared_ptr<nic::IrqBatch> batch) {
  cpu_.request_isr([this, batch]() -> rtos::Cpu::IsrAction {
    const MicroTime now = sim_.now();
    std::int64_t bytes = 0;
    for (const auto& p : batch->packets) bytes += p.length;
    double cost = sc_.nic_cost.dc_us +
                  sc_.nic_cost.dl_us_per_byte * static_cast<double>(bytes) +
                  stage_isr_cost_per_pkt() * static_cast<double>(batch->packets.size());

    auto accepted = std::make_shared<nic::IrqBatch>();
    accepted->queue_id = batch->queue_id;
    accepted->fired_at = batch->fired_at;
    accepted->reason = batch->reason;
    for (const auto& pkt : batch->packets) {
      if (!policy_->on_packet_received(now)) {
        ++res_.dropped_mitigation;
        continue;
      }
      ++res_.received;
      const auto pending =
          fifo_packets_ + static_cast<std::int64_t>(accepted->packets.size());
      if (pending + 1 > sc_.driver_queue_capacity) {
        ++res_.dropped_queue_full;
        policy_->on_enqueue_failed(now);
        continue;
      }
      accepted->packets.push_back(pkt);
    }
    policy_->charge_isr(static_cast<MicroTime>(std::llround(cost)), now);
    return {cost, [this, accepted] {
              if (accepted->packets.empty()) return;
              fifo_packets_ += static_cast<std::int64_t>(accepted->packets.size());
              fifo_.push_back(std::move(*accepted));
              cpu_.wake(driver_id_);
            }};
  });
}

void RxEngine::isr_diffq(std::shared_ptr<nic::IrqBatch> batch) {
  cpu_.request_isr([this, batch]() -> rtos::Cpu::IsrAction {
    const MicroTime now = sim_.now();
    std::int64_t bytes = 0;
    for (const auto& p : batch->packets) bytes += p.length;
    double cost =
        sc_.nic_cost.dc_us + sc_.nic_cost.dl_us_per_byte * static_cast<double>(bytes);
    bool enqueued_any = false;
    for (const auto& pkt : batch->packets) {
      if (polling_) {  // the global limit tripped mid-batch
        hold_for_polling(pkt);
        continue;
      }
      if (global_server_) {
        if (global_server_->account(1, now) == 0) {
          enter_polling();
          hold_for_polling(pkt);
          continue;
        }
        ++consumed_this_period_;
      }
      const auto r = rx_->eager_isr(pkt, now);
      cost += r.isr_cost_us;
      if (r.path == rx::EagerPath::Regular || r.path == rx::EagerPath::RecycleThenEnqueue) {
        ++res_.received;
        enqueued_any = true;
        if (r.raised_priority) cpu_.set_priority(driver_id_, r.net_priority);
      } else if (r.flow < 0) {
        ++res_.dropped_unmatched;
      }
    }
    return {cost, [this, enqueued_any] {
              if (enqueued_any && rx_->has_waiting()) cpu_.wake(driver_id_);
            }};
  });
}

void RxEngine::deliver(const traffic::TraceRecord& pkt) {
  ++res_.delivered;
  ++res_.delivered_by_port[pkt.dst_port];
  auto it = receiver_body_.find(pkt.dst_port);
  if (it == receiver_body_.end()) return;
  it->second->push();
  cpu_.wake(receiver_task_[pkt.dst_port]);
}

void RxEngine::hold_for_polling(const traffic::TraceRecord& pkt) {
  if (static_cast<int>(holding_.size()) >= sc_.nic_holding_capacity) {
    ++res_.nic_overflow;  // discarded by the NIC
    return;
  }
  holding_.push_back(pkt);
}

void RxEngine::enter_polling() {
  if (polling_) return;
  polling_ = true;
  ++res_.polling_engagements;
}

void RxEngine::on_period_boundary() {
  const std::int64_t consumed = consumed_this_period_;
  consumed_this_period_ = 0;
  if (polling_ && global_server_ && consumed < sc_.global_limit->budget) polling_ = false;
  if (!holding_.empty() && poll_id_ != rtos::kIdle) cpu_.wake(poll_id_);
}

void RxEngine::report(MicroTime t) {
  auto& log = res_.log;
  log.sample(t, "sent", static_cast<double>(res_.sent - prev_.sent));
  log.sample(t, "irqs", static_cast<double>(res_.irqs - prev_.irqs));
  log.sample(t, "received", static_cast<double>(res_.received - prev_.received));
  log.sample(t, "processed", static_cast<double>(res_.processed - prev_.processed));
  log.sample(t, "critical_cycles",
             static_cast<double>(res_.critical_cycles - prev_.critical_cycles));
  log.sample(t, "lateness_accum_ms",
             static_cast<double>(res_.lateness_accum_us - prev_.lateness_accum_us) / 1000.0);
  prev_.sent = res_.sent;
  prev_.irqs = res_.irqs;
  prev_.received = res_.received;
  prev_.processed = res_.processed;
  prev_.critical_cycles = res_.critical_cycles;
  prev_.lateness_accum_us = res_.lateness_accum_us;
}

RxResult RxEngine::run() {
  build();
  cpu_.start();
  sim_.run_until(sc_.duration_us);

  res_.dropped_unmatched += nic_->dropped_unmatched();
  res_.dropped_queue_full += nic_->dropped_queue_full();
  res_.cpu_isr_us = cpu_.isr_time_us();
  res_.cpu_driver_us = cpu_.task_time_us(driver_id_);
  if (poll_id_ != rtos::kIdle) res_.cpu_driver_us += cpu_.task_time_us(poll_id_);
  res_.cpu_total_us = sc_.duration_us;
  for (rtos::TaskId id = 0; id < static_cast<rtos::TaskId>(cpu_.task_count()); ++id)
    res_.cpu_by_task[cpu_.spec_of(id).name] = cpu_.task_time_us(id);
  res_.cpu_by_task["(isr)"] = cpu_.isr_time_us();
  res_.cycles = cpu_.cycles();

  if (rx_) {
    for (std::size_t f = 0; f < rx_->flow_count(); ++f) {
      RxFlowStats s;
      s.dst_port = rx_->flow_spec(static_cast<int>(f)).dst_port;
      s.priority = rx_->flow_spec(static_cast<int>(f)).priority;
      s.counters = rx_->counters(static_cast<int>(f));
      res_.flow_stats.push_back(s);
      res_.flow_rejected += s.counters.rejected;
      res_.flow_shortcircuit += s.counters.shortcircuit;
      res_.flow_recycled += s.counters.recycled;
    }
  }
  if (auto* qp = dynamic_cast<mitigation::QueuePolicy*>(policy_.get()))
    res_.irq_off_intervals = qp->disabled_intervals();
  return std::move(res_);
}

}  // namespace

RxResult run_rx(const RxScenario& scenario) {
  RxEngine engine(scenario);
  return engine.run();
}

}  // namespace rtsim
