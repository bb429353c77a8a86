#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "rtsim/metrics.hpp"

namespace rtsim::mitigation {

struct BurstPolicyParams {
  MicroTime slice_us = 20'000;
  std::int64_t capacity = 600;  // packets per slice
};

struct HysteresisPolicyParams {
  double block_threshold = 0.10;    // disable when earliness drops below this share of target
  double unblock_threshold = 0.25;  // re-enable when earliness climbs above this share
  MicroTime poll_sleep_us = 1'000;  // driver re-check latency after re-enable
};

struct BudgetPolicyParams {
  bool charge_isr = false;  // also bill ISR time against the budget
};

struct QueuePolicyParams {
  int queue_capacity = 500;
};

// Driver/ISR hooks shared by all mitigation strategies. The default policy
// mitigates nothing.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual bool interrupts_enabled(MicroTime) const { return true; }
  // Called per packet in the ISR; false = drop this packet (and possibly
  // disable interrupts).
  virtual bool on_packet_received(MicroTime) { return true; }
  virtual void on_enqueue_failed(MicroTime) {}
  virtual void on_queue_drained(MicroTime) {}
  virtual bool driver_enabled(MicroTime) const { return true; }
  virtual void on_critical_report(MicroTime t, MicroTime earliness_us, MicroTime target_us) {
    (void)t, (void)earliness_us, (void)target_us;
  }
  virtual void charge_driver(MicroTime, MicroTime) {}
  virtual void charge_isr(MicroTime, MicroTime) {}

  // Set by the simulation: ask the blocked driver task to re-evaluate, with an
  // optional delay.
  std::function<void(MicroTime delay_us)> request_driver_wake;

 protected:
  void wake_driver(MicroTime delay_us = 0) {
    if (request_driver_wake) request_driver_wake(delay_us);
  }
};

// Fixed packet capacity per time slice; over capacity, interrupts stay off
// until the next slice boundary.
class BurstPolicy final : public Policy {
 public:
  explicit BurstPolicy(BurstPolicyParams p) : p_(p) {}
  bool interrupts_enabled(MicroTime t) const override { return t >= disabled_until_; }
  bool on_packet_received(MicroTime t) override;

  std::int64_t slice_count(MicroTime t) const;

 private:
  BurstPolicyParams p_;
  std::int64_t cur_slice_ = -1;
  std::int64_t count_ = 0;
  MicroTime disabled_until_ = 0;
};

// Two earliness thresholds on the critical task's reports gate the whole
// network subsystem.
class HysteresisPolicy final : public Policy {
 public:
  explicit HysteresisPolicy(HysteresisPolicyParams p) : p_(p) {}
  bool interrupts_enabled(MicroTime) const override { return enabled_; }
  bool driver_enabled(MicroTime) const override { return enabled_; }
  void on_critical_report(MicroTime t, MicroTime earliness_us, MicroTime target_us) override;

  bool enabled() const { return enabled_; }

 private:
  HysteresisPolicyParams p_;
  bool enabled_ = true;
};

// The critical task's reported earliness becomes the driver's time budget;
// at zero the network subsystem (interrupts included) suspends until the next
// report.
class BudgetPolicy final : public Policy {
 public:
  explicit BudgetPolicy(BudgetPolicyParams p) : p_(p) {}
  bool interrupts_enabled(MicroTime) const override { return budget_us_ > 0; }
  bool driver_enabled(MicroTime) const override { return budget_us_ > 0; }
  void on_critical_report(MicroTime t, MicroTime earliness_us, MicroTime target_us) override;
  void charge_driver(MicroTime dt, MicroTime t) override { consume(dt, t); }
  void charge_isr(MicroTime dt, MicroTime t) override {
    if (p_.charge_isr) consume(dt, t);
  }

  std::int64_t remaining_us() const { return budget_us_; }
  std::int64_t consume(MicroTime dt, MicroTime t);

 private:
  BudgetPolicyParams p_;
  std::int64_t budget_us_ = 0;
};

// Full-queue enqueue failure turns interrupts off; draining the queue to
// empty turns them back on.
class QueuePolicy final : public Policy {
 public:
  explicit QueuePolicy(QueuePolicyParams p) : p_(p) {}
  bool interrupts_enabled(MicroTime) const override { return enabled_; }
  void on_enqueue_failed(MicroTime t) override;
  void on_queue_drained(MicroTime t) override;

  struct Interval {
    MicroTime off_at;
    MicroTime on_at;  // -1 while still off
  };
  const std::vector<Interval>& disabled_intervals() const { return intervals_; }
  int queue_capacity() const { return p_.queue_capacity; }

 private:
  QueuePolicyParams p_;
  bool enabled_ = true;
  std::vector<Interval> intervals_;
};

}  // namespace rtsim::mitigation
